"""The generalised Monge-Ampere operator on a flat torus.

For a Kahler form ``omega`` and closed positive (k,k)-forms ``alpha_k`` the
equation is

    omega_phi^n = sum_{k=1}^n alpha_k ^ omega_phi^{n-k},
    omega_phi = omega + i ddbar phi,

and the continuity family solved from ``t = 0`` to ``t = 1`` is

    omega_phi^n = t sum_{k<n} alpha_k ^ omega_phi^{n-k} + b(t) c^{1-t} alpha_n

with ``c = int omega^n / int alpha_n`` and ``b(t)`` matching total masses.
Residuals are scalar fields measured against ``chi^n`` (``chi`` flat).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .errors import AdmissibilityError, InvalidProblem
from .forms import (
    EllipticityParams,
    PPForm,
    cone_operator,
    contraction_matrix,
    ellipticity_bound,
    min_eigenvalue,
    relative_eigenvalues,
    wedge,
)
from .torus import (
    FormField,
    ScalarField,
    TorusGrid,
    check_closed,
    ddbar_matrix,
    gradient_norm,
    integrate,
)


@dataclass(frozen=True)
class Tolerances:
    consistency: float = 1e-10
    positivity: float = 1e-10
    closed: float = 1e-10


def _positivity_margin(ff: FormField) -> tuple[float, tuple]:
    """Smallest coefficient-matrix eigenvalue over the grid and where it sits."""
    ev = min_eigenvalue(ff.form)
    i = int(np.argmin(ev))
    return float(ev.flat[i]), tuple(int(v) for v in np.unravel_index(i, ev.shape))


class GmaProblem:
    """Data of the generalised Monge-Ampere equation on a torus.

    Parameters
    ----------
    grid : TorusGrid
    omega : FormField
        Background Kahler form (degree 1, strictly positive, closed).
    alphas : sequence
        ``alphas[k-1]`` is the (k,k) field alpha_k, or ``None`` for zero.
    witness : EllipticityParams
        ``delta, k0`` with ``alpha_{k0} >= delta omega^{k0}``.
    chi : FormField, optional
        Flat reference metric, Euclidean by default.
    allow_zero_top : bool
        Accept ``int alpha_n = 0``; only the seeded path can solve such data.
    """

    def __init__(self, grid: TorusGrid, omega: FormField, alphas, witness: EllipticityParams,
                 chi: FormField | None = None, tolerances: Tolerances | None = None,
                 validate: bool = True, allow_zero_top: bool = False):
        n = grid.n
        alphas = list(alphas)
        if len(alphas) != n:
            raise InvalidProblem(f"need alpha_1..alpha_{n}, got {len(alphas)} forms", check="shape")
        for k, a in enumerate(alphas, start=1):
            if a is not None and (a.degree != k or a.grid != grid):
                raise InvalidProblem(f"alpha_{k} must be a ({k},{k}) field on the problem grid", check="shape")
        if omega.degree != 1 or omega.grid != grid:
            raise InvalidProblem("omega must be a (1,1) field on the problem grid", check="shape")
        if witness.k0 > n:
            raise InvalidProblem(f"k0={witness.k0} exceeds n={n}", check="witness")
        self.grid = grid
        self.n = n
        self.omega = omega
        self.alphas = alphas
        self.witness = witness
        self.chi = chi if chi is not None else FormField.constant(grid, PPForm.euclidean(n))
        self.tol = tolerances or Tolerances()
        self.allow_zero_top = allow_zero_top
        self._omega_powers = [omega.power(j) for j in range(n + 1)]
        self.chi_top = self.chi.power(n)
        if validate:
            self.validate()

    @property
    def omega_n(self) -> FormField:
        return self._omega_powers[self.n]

    def omega_power(self, j: int) -> FormField:
        return self._omega_powers[j]

    def alpha(self, k: int) -> FormField:
        a = self.alphas[k - 1]
        return a if a is not None else FormField.constant(self.grid, PPForm.zero(self.n, k))

    def mixed_integrals(self) -> list[float]:
        """``int alpha_k ^ omega^{n-k}`` for k = 1..n."""
        out = []
        for k, a in enumerate(self.alphas, start=1):
            if a is None:
                out.append(0.0)
            else:
                out.append(integrate(a.wedge(self.omega_power(self.n - k))))
        return out

    def validate(self) -> None:
        """Raise :class:`InvalidProblem` naming the first failed hypothesis."""
        n, tol = self.n, self.tol
        lo, where = _positivity_margin(self.omega)
        if lo <= tol.positivity:
            raise InvalidProblem(f"omega is not strictly positive (min eigenvalue {lo:.3e} at {where})", check="omega")
        if not check_closed(self.omega, tol.closed):
            raise InvalidProblem("omega is not closed", check="closed")
        if all(a is None for a in self.alphas):
            raise InvalidProblem("all alpha_k vanish", check="alphas")
        for k, a in enumerate(self.alphas, start=1):
            if a is None:
                continue
            scale = max(float(np.max(np.abs(a.coeffs))), 1e-300)
            lo, where = _positivity_margin(a)
            if lo < -tol.positivity * scale:
                raise InvalidProblem(f"alpha_{k} is not positive (min eigenvalue {lo:.3e} at {where})", check="positivity")
            if not check_closed(a, tol.closed * max(1.0, scale)):
                raise InvalidProblem(f"alpha_{k} is not closed", check="closed")
        cone = FormField(self.grid, cone_operator(self.omega.form, [a.form if a is not None else None for a in self.alphas], 1.0))
        lo, where = _positivity_margin(cone)
        if lo <= tol.positivity:
            raise InvalidProblem(f"cone condition fails (min eigenvalue {lo:.3e} at {where})", check="cone")
        vol = integrate(self.omega_n)
        mixed = self.mixed_integrals()
        defect = vol - sum(mixed)
        if abs(defect) > tol.consistency * abs(vol):
            raise InvalidProblem(
                f"consistency fails: int omega^n = {vol:.12g} but sum int alpha_k omega^(n-k) = {sum(mixed):.12g}",
                check="consistency")
        if mixed[-1] <= 0 and not self.allow_zero_top:
            raise InvalidProblem("int alpha_n must be positive for the continuity path", check="alpha_n")
        k0, delta = self.witness.k0, self.witness.delta
        gap = self.alpha(k0) - self.omega_power(k0) * delta
        lo, where = _positivity_margin(gap)
        scale = max(float(np.max(np.abs(self.alpha(k0).coeffs))), 1e-300)
        if lo < -tol.positivity * scale:
            raise InvalidProblem(f"witness alpha_{k0} >= {delta} omega^{k0} fails (min eigenvalue {lo:.3e} at {where})",
                                 check="witness")

    def scaled(self, factors) -> "GmaProblem":
        """Copy with ``alpha_k`` multiplied by ``factors[k-1]`` (unvalidated)."""
        alphas = [None if a is None else a * float(f) for a, f in zip(self.alphas, factors)]
        return GmaProblem(self.grid, self.omega, alphas, self.witness, chi=self.chi,
                          tolerances=self.tol, validate=False, allow_zero_top=self.allow_zero_top)


@dataclass(frozen=True)
class NormalizationConstants:
    """``c`` and ``t -> b(t)`` from the mass balance of the continuity path."""

    c: float
    volume: float
    top_mass: float
    mixed: tuple

    def b(self, t: float) -> float:
        return self.c ** (t - 1.0) * self.rhs_mass(t) / self.top_mass

    def rhs_mass(self, t: float) -> float:
        return self.volume - t * sum(self.mixed[:-1])

    def top_weight(self, t: float) -> float:
        """``b(t) c^{1-t}``, the weight of alpha_n along the path."""
        return self.rhs_mass(t) / self.top_mass


def normalization_constants(problem: GmaProblem) -> NormalizationConstants:
    vol = integrate(problem.omega_n)
    mixed = problem.mixed_integrals()
    top = mixed[-1]
    if not top > 0:
        raise InvalidProblem(f"int alpha_n = {top:.3e} must be positive", check="alpha_n")
    return NormalizationConstants(c=vol / top, volume=vol, top_mass=top, mixed=tuple(mixed))


def omega_phi(problem: GmaProblem, phi: ScalarField) -> FormField:
    H = ddbar_matrix(problem.grid, phi.values)
    return FormField(problem.grid, PPForm(problem.omega.coeffs + H, problem.n, 1, check=False))


def _require_admissible(om: FormField) -> None:
    lo, where = _positivity_margin(om)
    if lo <= 0:
        raise AdmissibilityError(f"omega_phi not positive: eigenvalue {lo:.3e} at {where}",
                                 point=where, min_eigenvalue=lo)


def residual(problem: GmaProblem, phi: ScalarField, t: float,
             norm: NormalizationConstants | None = None) -> ScalarField:
    """``(omega_phi^n - t sum_{k<n} alpha_k omega_phi^{n-k} - b c^{1-t} alpha_n) / chi^n``."""
    n = problem.n
    norm = norm or normalization_constants(problem)
    om = omega_phi(problem, phi)
    _require_admissible(om)
    powers = [None, om.form]
    for _ in range(2, n + 1):
        powers.append(wedge(powers[-1], om.form))
    top = powers[n].top.copy()
    for k in range(1, n):
        a = problem.alphas[k - 1]
        if a is not None and t != 0:
            top -= t * wedge(a.form, powers[n - k]).top
    a_n = problem.alphas[n - 1]
    if a_n is not None:
        top -= norm.top_weight(t) * a_n.form.top
    return ScalarField(problem.grid, top / problem.chi_top.form.top)


class Linearization:
    """Frozen linearised operator ``u -> (cone(omega_phi, t) ^ i ddbar u) / chi^n``."""

    def __init__(self, problem: GmaProblem, phi: ScalarField, t: float, om: FormField | None = None):
        om = om or omega_phi(problem, phi)
        _require_admissible(om)
        alphas = [None if a is None else a.form for a in problem.alphas]
        self.problem = problem
        self.cone = FormField(problem.grid, cone_operator(om.form, alphas, t))
        self.A = contraction_matrix(self.cone.form, problem.chi.form)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        H = ddbar_matrix(self.problem.grid, u)
        return np.einsum("...kl,...kl->...", self.A, H).real


def linearized_apply(problem: GmaProblem, phi: ScalarField, t: float, u: ScalarField) -> ScalarField:
    op = Linearization(problem, phi, t)
    return ScalarField(problem.grid, op(u.values))


@dataclass
class AdmissibilityReport:
    t: float
    min_relative_eigenvalue: float
    min_point: tuple
    cone_min: float
    ellipticity_slack: float
    sup_phi: float
    max_gradient: float
    max_partial_laplacian: float | None

    @property
    def ok(self) -> bool:
        return self.min_relative_eigenvalue > 0 and self.cone_min > 0

    def collapsed(self) -> str | None:
        """Name of the first quantity that left the admissible set."""
        if not self.min_relative_eigenvalue > 0:
            return "omega_phi"
        if not self.cone_min > 0:
            return "cone"
        if not self.ellipticity_slack >= -1e-10:
            return "ellipticity"
        return None


def admissibility_check(problem: GmaProblem, phi: ScalarField, t: float) -> AdmissibilityReport:
    """Positivity margins and estimate diagnostics at ``(phi, t)``."""
    n = problem.n
    om = omega_phi(problem, phi)
    lam = relative_eigenvalues(problem.omega.coeffs, om.coeffs)
    lo = lam[..., -1]
    i = int(np.argmin(lo))
    alphas = [None if a is None else a.form for a in problem.alphas]
    cone = cone_operator(om.form, alphas, t)
    cone_min = float(np.min(min_eigenvalue(cone)))
    w = problem.witness
    # along the path alpha_{k0} enters with weight t unless k0 = n
    delta = w.delta if w.k0 == n else w.delta * t
    if np.all(lam > 0) and delta > 0:
        slack = float(np.min(ellipticity_bound(lam, EllipticityParams(delta, w.k0))))
    elif delta == 0:
        slack = 1.0
    else:
        slack = float("nan")
    partial = None
    if n >= 2 and problem.alphas[n - 2] is not None:
        partial = float(np.max(wedge(problem.alphas[n - 2].form, om.form).top / problem.chi_top.form.top))
    return AdmissibilityReport(
        t=float(t),
        min_relative_eigenvalue=float(lo.flat[i]),
        min_point=tuple(int(v) for v in np.unravel_index(i, lo.shape)),
        cone_min=cone_min,
        ellipticity_slack=slack,
        sup_phi=phi.sup(),
        max_gradient=float(np.max(gradient_norm(phi, problem.chi))),
        max_partial_laplacian=partial,
    )


def constant_problem(n: int, sizes, alphas, witness: EllipticityParams, omega: PPForm | None = None,
                     **kwargs) -> GmaProblem:
    """Problem with constant-coefficient forms given as single-point PPForms."""
    grid = sizes if isinstance(sizes, TorusGrid) else TorusGrid(n, sizes)
    omega = omega if omega is not None else PPForm.euclidean(n)
    fields = [None if a is None else FormField.constant(grid, a) for a in alphas]
    return GmaProblem(grid, FormField.constant(grid, omega), fields, witness, **kwargs)


def witness_margin(omega: FormField, alpha: FormField) -> float:
    """Largest ``delta`` with ``alpha >= delta omega^k`` at every grid point."""
    k = alpha.degree
    ref = omega.power(k).coeffs
    lam = relative_eigenvalues(ref, alpha.coeffs)
    return float(np.min(lam[..., -1]))


def fit_witness(omega: FormField, alphas, safety: float = 1.0 - 1e-9) -> EllipticityParams:
    """Witness ``(delta, k0)`` with the largest margin over the nonzero ``alpha_k``.

    ``safety`` shaves the exact margin so validation does not trip on rounding.
    """
    best = None
    for k, a in enumerate(alphas, start=1):
        if a is None:
            continue
        d = witness_margin(omega, a)
        if d > 0 and (best is None or d > best[0]):
            best = (d, k)
    if best is None:
        raise InvalidProblem("no alpha_k dominates a positive multiple of omega^k", check="witness")
    return EllipticityParams(best[0] * safety, best[1])


def validation_report(problem: GmaProblem) -> dict:
    """All invariant margins of a problem, plus the first failed check if any."""
    n = problem.n
    vol = integrate(problem.omega_n)
    mixed = problem.mixed_integrals()
    alphas = [None if a is None else a.form for a in problem.alphas]
    alpha_min = [None if a is None else float(np.min(min_eigenvalue(a))) for a in alphas]
    closed = [None if a is None else bool(check_closed(a, problem.tol.closed * max(1.0, float(np.max(np.abs(a.coeffs))))))
              for a in problem.alphas]
    cone = cone_operator(problem.omega.form, alphas, 1.0)
    w = problem.witness
    report = {
        "n": n,
        "sizes": list(problem.grid.sizes),
        "consistency": {"int_omega_n": vol, "int_alpha_omega": mixed, "defect": vol - sum(mixed)},
        "omega_min_eigenvalue": float(np.min(min_eigenvalue(problem.omega.form))),
        "omega_closed": bool(check_closed(problem.omega, problem.tol.closed)),
        "alpha_min_eigenvalues": alpha_min,
        "alpha_closed": closed,
        "cone_min": float(np.min(min_eigenvalue(cone))),
        "witness": {"delta": w.delta, "k0": w.k0},
        "valid": True,
        "check": None,
        "message": None,
    }
    failed = []
    if report["omega_min_eigenvalue"] <= problem.tol.positivity:
        failed.append("omega")
    if not report["omega_closed"] or not all(c is not False for c in closed):
        failed.append("closed")
    if any(m is not None and m < -problem.tol.positivity * max(1.0, abs(m)) for m in alpha_min):
        failed.append("positivity")
    if report["cone_min"] <= problem.tol.positivity:
        failed.append("cone")
    if abs(vol - sum(mixed)) > problem.tol.consistency * abs(vol):
        failed.append("consistency")
    report["failed_checks"] = failed
    try:
        problem.validate()
    except InvalidProblem as exc:
        report.update(valid=False, check=exc.check, message=str(exc))
    return report
