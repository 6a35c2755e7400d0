"""Prescribing the top Chern character form of a line bundle.

Given a reference curvature ``Theta0`` (normalised so that it represents
``c_1``), a Kahler form ``omega`` and a top form ``eta`` in the class of
``Theta0^n``, the equation ``(Theta0 + i ddbar phi)^n = eta`` is rewritten as
a generalised Monge-Ampere equation for ``omega_phi = omega + i ddbar phi``
with forms ``alpha_p`` built recursively from the data.  Only rank one is
handled.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .core import GmaProblem, fit_witness, witness_margin
from .errors import InvalidProblem
from .forms import EllipticityParams, PPForm, det_small, min_eigenvalue, wedge, wedge_top
from .torus import FormField, ScalarField, check_closed, ddbar_matrix, integrate


@dataclass
class ChernData:
    """Curvature data on a torus.

    Parameters
    ----------
    Theta0 : FormField
        Reference curvature, a closed real (1,1) field.
    omega : FormField
        Kahler form used as the unknown's background.
    eta : FormField
        Target top form with ``int eta = int Theta0^n``.
    """

    Theta0: FormField
    omega: FormField
    eta: FormField
    rtol: float = 1e-10

    def __post_init__(self):
        n = self.omega.grid.n
        if self.Theta0.degree != 1 or self.omega.degree != 1:
            raise InvalidProblem("Theta0 and omega must be (1,1) fields", check="shape")
        if self.eta.degree != n:
            raise InvalidProblem(f"eta must be an ({n},{n}) field", check="shape")
        if not (self.Theta0.grid == self.omega.grid == self.eta.grid):
            raise InvalidProblem("fields live on different grids", check="shape")
        target = integrate(self.Theta0.power(n))
        mass = integrate(self.eta)
        scale = max(abs(target), abs(mass), 1e-300)
        if abs(mass - target) > self.rtol * scale:
            raise InvalidProblem(
                f"int eta = {mass:.12g} differs from int Theta0^n = {target:.12g}", check="chern_class")

    @property
    def n(self) -> int:
        return self.omega.grid.n

    @property
    def grid(self):
        return self.omega.grid


def build_alphas(data: ChernData) -> list:
    """The forms ``alpha_1..alpha_n`` of the rewritten equation.

    Positivity is not checked here; see :func:`hypothesis_report`.
    """
    n, om, th = data.n, data.omega, data.Theta0
    om_pow = [om.power(j) for j in range(n + 1)]
    th_pow = [th.power(j) for j in range(n + 1)]
    alphas = []
    for p in range(1, n + 1):
        if p < n:
            a = (om_pow[p] - th_pow[p]) * comb(n, p)
            for i in range(1, p):
                a = a - alphas[i - 1].wedge(om_pow[p - i]) * comb(n - i, p - i)
        else:
            a = data.eta - th_pow[n] + om_pow[n]
            for i in range(1, n):
                a = a - alphas[i - 1].wedge(om_pow[n - i])
        alphas.append(a)
    return alphas


def _top_over(grid, form_top, chi: FormField | None):
    if chi is None:
        # the flat metric has chi^n = n! vol
        return form_top / factorial(grid.n)
    return form_top / chi.power(grid.n).form.top


def _top_power(coeffs: np.ndarray, n: int) -> np.ndarray:
    # the top power of a (1,1)-form is n! det of its matrix
    return factorial(n) * np.real(det_small(coeffs))


def _direct_top(data: ChernData, H: np.ndarray) -> np.ndarray:
    return _top_power(data.Theta0.coeffs + H, data.n) - data.eta.form.top


def _linear_top(a: np.ndarray, w: np.ndarray, n: int) -> np.ndarray:
    # top of a ^ w^{n-1} for (1,1)-forms is (n-1)! sum_ij a_ij cof(w)_ij
    if n == 2:
        cof = [[w[..., 1, 1], -w[..., 1, 0]], [-w[..., 0, 1], w[..., 0, 0]]]
    else:
        cof = [[w[..., (i + 1) % 3, (j + 1) % 3] * w[..., (i + 2) % 3, (j + 2) % 3]
                - w[..., (i + 1) % 3, (j + 2) % 3] * w[..., (i + 2) % 3, (j + 1) % 3]
                for j in range(3)] for i in range(3)]
    out = sum(a[..., i, j] * cof[i][j] for i in range(n) for j in range(n))
    return factorial(n - 1) * np.real(out)


def _gma_top(alphas, omega: FormField, H: np.ndarray) -> np.ndarray:
    n = omega.grid.n
    om = PPForm(omega.coeffs + H, n, 1, check=False)
    pows = [None, om]
    # the (n-1)-th power is only needed when the cofactor shortcut is unavailable
    for _ in range(2, n if n > 3 else n - 1):
        pows.append(wedge(pows[-1], om))
    top = _top_power(om.coeffs, n)
    for p, a in enumerate(alphas, start=1):
        if a is None:
            continue
        if p == n:
            top = top - a.form.top
        elif p == 1 and 1 < n <= 3:
            top = top - _linear_top(a.coeffs, om.coeffs, n)
        else:
            top = top - wedge_top(a.form, pows[n - p])
    return top


def chern_residual_direct(data: ChernData, phi: ScalarField, chi: FormField | None = None) -> ScalarField:
    """``((Theta0 + i ddbar phi)^n - eta) / chi^n`` (``chi`` defaults to the flat metric)."""
    H = ddbar_matrix(data.grid, phi.values)
    return ScalarField(data.grid, _top_over(data.grid, _direct_top(data, H), chi))


def gma_residual(alphas, omega: FormField, phi: ScalarField, chi: FormField | None = None) -> ScalarField:
    """``(omega_phi^n - sum_p alpha_p omega_phi^{n-p}) / chi^n`` with no path weights."""
    H = ddbar_matrix(omega.grid, phi.values)
    return ScalarField(omega.grid, _top_over(omega.grid, _gma_top(alphas, omega, H), chi))


def equivalence_check(data: ChernData, phi: ScalarField, alphas=None) -> float:
    """Sup distance between the direct and the rewritten residual at ``phi``."""
    alphas = alphas if alphas is not None else build_alphas(data)
    H = ddbar_matrix(data.grid, phi.values)
    diff = _direct_top(data, H) - _gma_top(alphas, data.omega, H)
    return float(np.max(np.abs(_top_over(data.grid, diff, None))))


@dataclass
class HypothesisReport:
    """Positivity and conformal-factor diagnostics for the built ``alpha_p``.

    ``conformal`` is True when every ``alpha_p = c_p psi chi^p`` for a shared
    scalar ``psi`` normalised to mean one.
    """

    min_eigenvalues: list
    closed: list
    coefficients: list
    psi: np.ndarray | None
    conformal: bool
    warnings: list = field(default_factory=list)

    @property
    def positive(self) -> bool:
        return not any("not positive" in w for w in self.warnings)

    def as_dict(self) -> dict:
        return {
            "min_eigenvalues": list(map(float, self.min_eigenvalues)),
            "closed": list(map(bool, self.closed)),
            "positive": self.positive,
            "conformal": self.conformal,
            "coefficients": [None if c is None else float(c) for c in self.coefficients],
            "warnings": list(self.warnings),
        }


def hypothesis_report(alphas, chi: FormField | None = None, rtol: float = 1e-8,
                      closed_tol: float = 1e-10) -> HypothesisReport:
    grid = alphas[0].grid
    n = grid.n
    chi = chi if chi is not None else FormField.constant(grid, PPForm.euclidean(n))
    chi_pow = [chi.power(j) for j in range(n + 1)]
    mins, closed, factors, scales = [], [], [], []
    for p, a in enumerate(alphas, start=1):
        scale = max(float(np.max(np.abs(a.coeffs))), 1.0)
        scales.append(scale)
        mins.append(float(np.min(min_eigenvalue(a.form))))
        closed.append(check_closed(a, closed_tol * scale))
        # alpha = f chi^p implies alpha ^ chi^(n-p) = f chi^n
        f = (a.wedge(chi_pow[n - p]) if p < n else a).form.top / chi_pow[n].form.top
        resid = a - chi_pow[p] * ScalarField(grid, f)
        ok = float(np.max(np.abs(resid.coeffs))) <= rtol * scale
        factors.append((f, ok))
    warnings = []
    for p, (m, c, sc) in enumerate(zip(mins, closed, scales), start=1):
        if m < -1e-12 * sc:
            warnings.append(f"alpha_{p} is not positive (min eigenvalue {m:.3e})")
        if not c:
            warnings.append(f"alpha_{p} is not closed")
    conformal = all(ok for _, ok in factors)
    psi, coeffs = None, [None] * n
    if conformal:
        ref = next((f for f, _ in factors if np.max(np.abs(f)) > 0), None)
        if ref is not None and np.mean(ref) != 0:
            psi = ref / np.mean(ref)
            for p, (f, _) in enumerate(factors):
                c = float(np.mean(f))
                coeffs[p] = c
                if np.max(np.abs(f - c * psi)) > rtol * max(1.0, np.max(np.abs(f))):
                    conformal = False
    if not conformal:
        psi, coeffs = None, [None] * n
        warnings.append("alpha_p do not share a conformal factor; relying on positivity alone")
    return HypothesisReport(mins, closed, coeffs, psi, conformal, warnings)


def chern_problem(data: ChernData, witness: EllipticityParams | None = None, validate: bool = True,
                  alphas=None) -> GmaProblem:
    """GmaProblem for ``omega_phi`` whose solution solves the Chern equation."""
    alphas = alphas if alphas is not None else build_alphas(data)
    # identically zero forms drop out of the operator
    kept = [None if not np.any(a.coeffs) else a for a in alphas]
    if witness is None:
        witness = fit_witness(data.omega, kept)
    return GmaProblem(data.grid, data.omega, kept, witness, validate=validate)


__all__ = [
    "ChernData", "HypothesisReport", "build_alphas", "chern_problem", "chern_residual_direct",
    "equivalence_check", "gma_residual", "hypothesis_report", "witness_margin",
]
