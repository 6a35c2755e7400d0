"""Quick property checks run by ``genma selftest``.

Each check returns ``(ok, detail)``; nothing here needs test dependencies.
"""
from __future__ import annotations

import numpy as np

from .chern_weil import ChernData, equivalence_check
from .continuity import continuity_run
from .core import constant_problem
from .forms import (
    EllipticityParams,
    PPForm,
    ellipticity_bound,
    is_positive,
    min_eigenvalue,
    solve_lambda1,
    wedge,
)
from .slag import ExampleParams, example_tangent, grouping_sides
from .torus import FormField, ScalarField, TorusGrid, band_limited, spectral_ddbar, top_form


def random_hermitian(rng, n, batch=(), positive=False):
    a = rng.standard_normal(batch + (n, n)) + 1j * rng.standard_normal(batch + (n, n))
    if positive:
        return a @ np.conj(np.swapaxes(a, -1, -2)) + 0.1 * np.eye(n)
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def check_wedge_algebra(rng):
    a = PPForm.from_matrix(random_hermitian(rng, 3, (50,)))
    b = PPForm.from_matrix(random_hermitian(rng, 3, (50,)))
    c = PPForm.from_matrix(random_hermitian(rng, 3, (50,)))
    comm = np.max(np.abs(wedge(a, b).coeffs - wedge(b, a).coeffs))
    assoc = np.max(np.abs(wedge(wedge(a, b), c).top - wedge(a, wedge(b, c)).top))
    err = max(comm, assoc)
    return err < 1e-12, f"max defect {err:.2e}"


def check_positivity_closure(rng):
    a = PPForm.from_matrix(random_hermitian(rng, 3, (200,), positive=True))
    b = PPForm.from_matrix(random_hermitian(rng, 3, (200,), positive=True))
    ok = bool(np.all(is_positive(wedge(a, b))))
    return ok, f"min eigenvalue {np.min(min_eigenvalue(wedge(a, b))):.3e}"


def check_grouping(rng):
    th = PPForm.from_matrix(random_hermitian(rng, 3, (200,)))
    om = PPForm.from_matrix(random_hermitian(rng, 3, (200,), positive=True))
    T = rng.uniform(-3, 3, 200)
    lhs, rhs = grouping_sides(th, om, T)
    err = float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(lhs), 1.0)))
    return err < 1e-12, f"relative defect {err:.2e}"


def check_ellipticity_example(rng):
    v = float(ellipticity_bound([2.0, 2.0], EllipticityParams(1.0, 1)))
    return abs(v - 0.5) < 1e-15, f"slack {v!r}"


def check_lambda1(rng):
    tail = rng.uniform(1.0, 3.0, (500, 2))
    A = rng.uniform(0.0, 0.5, (500, 3))
    h = rng.uniform(0.0, 2.0, 500)
    lam1 = solve_lambda1(A, h, tail)
    lam = np.concatenate([lam1[:, None], tail], axis=1)
    lhs = np.prod(lam, axis=1)
    rhs = np.sum(A * lam, axis=1) + h
    err = float(np.max(np.abs(lhs - rhs) / np.abs(lhs)))
    return err < 1e-12, f"relative defect {err:.2e}"


def check_chern_equivalence(rng):
    g = TorusGrid(2, 8)
    om = FormField.constant(g, PPForm.euclidean(2))
    psi = ScalarField(g, 0.01 * band_limited(g, [((1, 0, 0, 1), 1.0, 0.0)]))
    th = om * 0.75 + spectral_ddbar(psi)
    data = ChernData(th, om, top_form(g, 1.125))
    modes = [(tuple(rng.integers(-2, 3, 4)), rng.normal(), rng.normal()) for _ in range(3)]
    phi = ScalarField(g, 0.02 * band_limited(g, modes))
    err = equivalence_check(data, phi)
    return err < 1e-10, f"sup defect {err:.2e}"


def check_example_limit(rng):
    vals = [example_tangent(ExampleParams(k, 1e-3)) for k in range(2, 51)]
    return all(v > 0 for v in vals), f"min tan {min(vals):.4g}"


def check_trivial_solve(rng):
    n = 2
    om = PPForm.euclidean(n)
    p = constant_problem(n, (8, 8), [None, om.power(2)], EllipticityParams(1.0, 2))
    phi, trace = continuity_run(p)
    return phi.sup() <= 1e-10, f"sup phi {phi.sup():.2e} after {len(trace)} steps"


CHECKS = [
    ("wedge_algebra", check_wedge_algebra),
    ("positivity_closure", check_positivity_closure),
    ("grouping_identity", check_grouping),
    ("ellipticity_example", check_ellipticity_example),
    ("lambda1_identity", check_lambda1),
    ("chern_equivalence", check_chern_equivalence),
    ("example_positive", check_example_limit),
    ("trivial_solve", check_trivial_solve),
]


def run_all(seed: int = 0):
    rng = np.random.default_rng(seed)
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # report, do not abort the suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
