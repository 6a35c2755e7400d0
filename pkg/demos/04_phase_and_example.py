"""
The phase of a 3-fold problem and the tensor-power example
============================================================

For a curvature ``Theta`` on the flat 3-torus the phase is fixed by
cohomology.  With ``T = tan(theta_hat)`` the background becomes
``Omega = Theta - T omega`` and two pointwise conditions decide whether the
regrouped equation is elliptic.
"""

# %%
from genma.errors import InvalidProblem
from genma.forms import PPForm
from genma.slag import ExampleParams, SlagData, compute_theta_hat, example_table
from genma.torus import FormField, TorusGrid

grid = TorusGrid(3, 8)
omega = FormField.constant(grid, PPForm.euclidean(3))
for a in (0.01, 0.5, 1.0, 10.0):
    T = compute_theta_hat(omega, omega * a)
    try:
        SlagData.from_fields(omega, omega * a)
        verdict = "accepted"
    except InvalidProblem as exc:
        verdict = f"rejected ({exc.check})"
    print(f"Theta = {a:5} omega   tan = {T:+.6f}   {verdict}")

# %%
# Classes k Theta0 against a Kahler class Theta0 + eps gamma.  For k >= 2 the
# tangent is positive and grows linearly in k.
rows = example_table([2, 5, 10, 50, 100, 400], 1e-3)
for k, tan in rows:
    print(f"k={k:4d}  tan={tan:10.4f}  tan/k={tan / k:.5f}")

# %%
print("limit of tan/k:", 1 / (3 * (1 + 1e-3)))
