"""
Prescribing a top Chern form
==============================

Given a curvature ``Theta0`` and a top form ``eta`` in the class of
``Theta0^2``, we look for ``phi`` with ``(Theta0 + i ddbar phi)^2 = eta``.
The equation is rewritten in terms of ``omega_phi`` with forms
``alpha_1 = -2 (Theta0 - omega)`` and ``alpha_2 = eta - (Theta0 - omega)^2``.
"""

# %%
import numpy as np

from genma.chern_weil import ChernData, build_alphas, chern_problem, chern_residual_direct, hypothesis_report
from genma.continuity import continuity_run
from genma.forms import PPForm
from genma.torus import FormField, ScalarField, TorusGrid, integrate, spectral_ddbar, top_form

grid = TorusGrid(2, 16)
omega = FormField.constant(grid, PPForm.euclidean(2))
psi = ScalarField(grid, 0.01 * np.cos(2 * np.pi * grid.x(2)) + 0 * grid.x(1))
theta = omega * 0.75 + spectral_ddbar(psi)
mass = integrate(theta.power(2))
eta = top_form(grid, mass * (1 + 0.1 * np.cos(2 * np.pi * grid.x(1)) + 0 * grid.x(2)))
data = ChernData(theta, omega, eta)

# %%
alphas = build_alphas(data)
report = hypothesis_report(alphas)
print("min eigenvalues:", report.min_eigenvalues)
print("warnings:", report.warnings)

# %%
phi, trace = continuity_run(chern_problem(data, alphas=alphas))
print("steps:", len(trace))
print("direct residual:", chern_residual_direct(data, phi).sup())
