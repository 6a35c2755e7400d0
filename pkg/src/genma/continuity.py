"""Continuation in ``t`` with Newton correction on the zero-average subspace."""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg, gmres

from .core import (
    AdmissibilityReport,
    GmaProblem,
    Linearization,
    NormalizationConstants,
    admissibility_check,
    normalization_constants,
    omega_phi,
    residual,
)
from .errors import AdmissibilityError, InvalidProblem, NewtonFailure, PathFailure
from .forms import EllipticityParams, PPForm, contraction_matrix, min_eigenvalue
from .torus import FormField, ScalarField, zero_average_project

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-10
    max_newton: int = 30
    initial_dt: float = 0.1
    min_dt: float = 1e-4
    max_dt: float = 0.25
    growth: float = 1.5
    easy_iterations: int = 3
    linear_rtol: float = 1e-12
    max_linear: int = 500
    max_backtracks: int = 30
    eig_fraction: float = 0.1
    stagnation_window: int = 5

    def __post_init__(self):
        if min(self.newton_tol, self.initial_dt, self.min_dt, self.linear_rtol) <= 0:
            raise ValueError("tolerances and step sizes must be positive")
        if not self.min_dt < self.initial_dt:
            raise ValueError("min_dt must be smaller than initial_dt")


@dataclass
class NewtonResult:
    phi: ScalarField
    residuals: list
    iterations: int
    stagnated: bool = False


class _Preconditioner:
    """Inverse of the constant-coefficient ``t = 0`` operator, in Fourier space."""

    def __init__(self, problem: GmaProblem):
        grid, n = problem.grid, problem.n
        om = problem.omega.mean_form()
        cone0 = om.power(n - 1) * float(n)
        A0 = contraction_matrix(cone0, problem.chi.mean_form())
        sym = np.zeros(grid.shape)
        for (j, l), s in grid.ddbar_symbols.items():
            if j == l:
                sym = sym + A0[j, j].real * s
            else:
                sym = sym + 2.0 * np.real(A0[j, l] * s)
        sym = -sym
        sym.flat[0] = 1.0
        inv = 1.0 / sym
        inv.flat[0] = 0.0
        self.grid = grid
        self.inv = inv

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.grid.ifft(self.grid.fft(r) * self.inv).real


def _linear_solve(lin: Linearization, rhs: np.ndarray, precond: _Preconditioner, cfg: SolverConfig):
    """Solve ``L du = rhs`` for zero-mean ``du`` (``rhs`` projected to zero mean)."""
    shape = rhs.shape
    size = rhs.size

    def matvec(x):
        y = -lin(x.reshape(shape))
        return (y - y.mean()).ravel()

    def prec(x):
        return precond(x.reshape(shape) - x.mean()).ravel()

    A = LinearOperator((size, size), matvec=matvec, dtype=float)
    M = LinearOperator((size, size), matvec=prec, dtype=float)
    b = -(rhs - rhs.mean()).ravel()
    # a constant rhs only survives the projection as round-off
    if np.max(np.abs(b)) <= 1e-13 * np.max(np.abs(rhs)):
        return np.zeros(shape)
    x, info = cg(A, b, rtol=cfg.linear_rtol, atol=0.0, maxiter=cfg.max_linear, M=M)
    if info != 0:
        log.debug("CG did not converge (info=%s); retrying with GMRES", info)
        x, info = gmres(A, b, x0=x, rtol=cfg.linear_rtol, atol=0.0, restart=60, maxiter=cfg.max_linear, M=M)
    x = x.reshape(shape)
    return x - x.mean()


def _cone_min(problem: GmaProblem, om: FormField, t: float) -> float:
    from .forms import cone_operator
    alphas = [None if a is None else a.form for a in problem.alphas]
    return float(np.min(min_eigenvalue(cone_operator(om.form, alphas, t))))


def newton_solve(problem: GmaProblem, phi0: ScalarField, t: float, cfg: SolverConfig | None = None,
                 norm: NormalizationConstants | None = None) -> NewtonResult:
    """Solve the path equation at ``t`` starting from ``phi0``.

    Raises :class:`AdmissibilityError` if ``phi0`` is not admissible and
    :class:`NewtonFailure` if the tolerance is not reached.
    """
    cfg = cfg or SolverConfig()
    norm = norm or normalization_constants(problem)
    grid = problem.grid
    precond = _Preconditioner(problem)
    phi = np.array(phi0.values, dtype=float)
    R = residual(problem, ScalarField(grid, phi), t, norm).values
    history = [float(np.max(np.abs(R)))]
    om_min = float(np.min(min_eigenvalue(omega_phi(problem, ScalarField(grid, phi)).form)))
    stagnant = 0
    stagnated = False
    it = 0
    while history[-1] > cfg.newton_tol:
        if history[-1] <= 10 * cfg.newton_tol:
            stagnant += 1
            if stagnant >= cfg.stagnation_window:
                stagnated = True
                log.warning("residual stagnated at %.3e (t=%.6g)", history[-1], t)
                break
        else:
            stagnant = 0
        if it >= cfg.max_newton:
            raise NewtonFailure(f"no convergence in {cfg.max_newton} Newton steps at t={t:.6g}", history)
        lin = Linearization(problem, ScalarField(grid, phi), t)
        du = _linear_solve(lin, -R, precond, cfg)
        step = 1.0
        for _ in range(cfg.max_backtracks):
            cand = phi + step * du
            cand_field = ScalarField(grid, cand)
            om = omega_phi(problem, cand_field)
            cand_min = float(np.min(min_eigenvalue(om.form)))
            if cand_min >= cfg.eig_fraction * om_min and _cone_min(problem, om, t) > 0:
                R_new = residual(problem, cand_field, t, norm).values
                r_new = float(np.max(np.abs(R_new)))
                if r_new < history[-1] or step < 1e-3:
                    break
            step *= 0.5
        else:
            raise NewtonFailure(f"backtracking failed at t={t:.6g}", history)
        phi, R, om_min = cand, R_new, cand_min
        history.append(r_new)
        it += 1
    out = zero_average_project(ScalarField(grid, phi), problem.omega)
    return NewtonResult(out, history, it, stagnated)


def convergence_ratio(residuals, floor: float = 1e-12) -> float:
    """``log r_k / log r_{k-1}``, about 2 for Newton.

    Uses the last pair with ``r_{k-1} < 1`` whose newer residual is still above
    ``floor`` (relative to the first residual), so iterates sitting at
    round-off do not flatten the estimate.  If every such pair is below the
    floor the last pair is used.
    """
    r = [float(x) for x in residuals]
    if len(r) < 2:
        return float("nan")
    cut = floor * max(1.0, r[0])
    pairs = [(a, b) for a, b in zip(r[:-1], r[1:]) if 0.0 < a < 1.0]
    if not pairs:
        return float("nan")
    good = [(a, b) for a, b in pairs if b > cut]
    a, b = good[-1] if good else pairs[-1]
    return float(np.log(max(b, np.finfo(float).tiny)) / np.log(a))


TRACE_COLUMNS = (
    "t", "b_t", "top_weight", "newton_iterations", "residual_sup", "min_eig_R", "cone_min",
    "ellipticity_slack", "sup_phi", "max_grad_phi", "max_partial_laplacian", "stagnated",
)


@dataclass
class TraceRow:
    t: float
    b_t: float
    top_weight: float
    newton_iterations: int
    residual_sup: float
    min_eig_R: float
    cone_min: float
    ellipticity_slack: float
    sup_phi: float
    max_grad_phi: float
    max_partial_laplacian: float | None
    stagnated: bool
    residuals: list = field(default_factory=list, repr=False)


@dataclass
class ContinuityTrace:
    rows: list = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        if self.rows and not row.t > self.rows[-1].t:
            raise ValueError("trace times must increase strictly")
        if not row.min_eig_R > 0:
            raise ValueError("refusing to record a step with non-positive R")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def ts(self) -> np.ndarray:
        return np.array([r.t for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def newton_rate(self) -> tuple[float | None, float]:
        """``(t, convergence_ratio)`` of the last step that took Newton iterations.

        Steps whose warm start already meets the tolerance carry no rate
        information; ``(None, nan)`` if no step iterated.
        """
        for r in reversed(self.rows):
            if len(r.residuals) >= 2:
                return r.t, convergence_ratio(r.residuals)
        return None, float("nan")

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.rows:
            vals = []
            for c in TRACE_COLUMNS:
                v = getattr(r, c)
                if isinstance(v, bool):
                    vals.append(int(v))
                elif isinstance(v, int):
                    vals.append(v)
                elif v is None:
                    vals.append("")
                else:
                    vals.append(f"{v:.17g}")
            w.writerow(vals)


def _row(problem, norm, t, result: NewtonResult, report: AdmissibilityReport) -> TraceRow:
    return TraceRow(
        t=float(t), b_t=norm.b(t), top_weight=norm.top_weight(t),
        newton_iterations=result.iterations, residual_sup=result.residuals[-1],
        min_eig_R=report.min_relative_eigenvalue, cone_min=report.cone_min,
        ellipticity_slack=report.ellipticity_slack, sup_phi=report.sup_phi,
        max_grad_phi=report.max_gradient, max_partial_laplacian=report.max_partial_laplacian,
        stagnated=result.stagnated, residuals=list(result.residuals),
    )


def continuity_run(problem: GmaProblem, cfg: SolverConfig | None = None, phi0: ScalarField | None = None,
                   tmax: float = 1.0):
    """Follow the path from ``t = 0`` to ``tmax``; returns ``(phi, trace)``.

    ``phi0`` seeds the ``t = 0`` Newton solve (zero by default).
    """
    cfg = cfg or SolverConfig()
    if not 0.0 <= tmax <= 1.0:
        raise ValueError(f"tmax={tmax} outside [0, 1]")
    norm = normalization_constants(problem)
    trace = ContinuityTrace()
    phi = phi0 if phi0 is not None else ScalarField.zeros(problem.grid)
    try:
        res = newton_solve(problem, phi, 0.0, cfg, norm)
    except (NewtonFailure, AdmissibilityError) as exc:
        raise PathFailure(f"t=0 solve failed: {exc}", trace, collapsed=_collapsed(exc)) from exc
    report = admissibility_check(problem, res.phi, 0.0)
    trace.append(_row(problem, norm, 0.0, res, report))
    phi, t, dt = res.phi, 0.0, cfg.initial_dt
    while t < tmax:
        t_new = min(t + dt, tmax)
        try:
            res = newton_solve(problem, phi, t_new, cfg, norm)
            report = admissibility_check(problem, res.phi, t_new)
            if not report.ok:
                raise AdmissibilityError(f"left admissible set at t={t_new:.6g}",
                                         min_eigenvalue=report.min_relative_eigenvalue)
        except (NewtonFailure, AdmissibilityError) as exc:
            dt *= 0.5
            log.info("step to t=%.6g failed (%s); dt -> %.3g", t_new, exc, dt)
            if dt < cfg.min_dt:
                raise PathFailure(f"step size underflow near t={t:.6g}: {exc}", trace,
                                  collapsed=_collapsed(exc)) from exc
            continue
        trace.append(_row(problem, norm, t_new, res, report))
        phi, t = res.phi, t_new
        if res.iterations <= cfg.easy_iterations:
            dt = min(dt * cfg.growth, cfg.max_dt)
    return phi, trace


def _collapsed(exc) -> str:
    if isinstance(exc, AdmissibilityError):
        return "cone" if "cone" in str(exc) else "omega_phi"
    return "newton"


def uniqueness_check(problem: GmaProblem, phis, solution_tol: float = 1e-8) -> float:
    """Largest pairwise sup-distance between zero-average solutions at ``t = 1``."""
    norm = normalization_constants(problem)
    projected = []
    for i, phi in enumerate(phis):
        r = residual(problem, phi, 1.0, norm).sup()
        if r > solution_tol:
            raise InvalidProblem(f"field {i} is not a solution (residual {r:.3e})", check="uniqueness")
        projected.append(zero_average_project(phi, problem.omega).values)
    if len(projected) < 2:
        return 0.0
    return float(max(np.max(np.abs(a - b)) for a, b in combinations(projected, 2)))


def seeded_continuity_run(problem: GmaProblem, cfg: SolverConfig | None = None, kappa: float | None = None):
    """Experimental path for data with ``int alpha_n = 0``.

    A multiple ``kappa omega^n`` is added to alpha_n while the lower forms are
    scaled to keep the masses balanced; the ordinary path is run for that
    seeded problem and the seed is then removed in ``s in [0, 1]`` at
    ``t = 1``.  Returns ``(phi, trace_t, s_values)``.
    """
    cfg = cfg or SolverConfig()
    n, grid = problem.n, problem.grid
    V = problem.mixed_integrals()
    lower = sum(V[:-1])
    vol = sum(V)
    if lower <= 0:
        raise InvalidProblem("seeding needs a nonzero alpha_k with k < n", check="alpha_n")
    kappa = 0.5 * lower / vol if kappa is None else kappa
    if not 0 < kappa < lower / vol:
        raise ValueError("kappa must lie in (0, sum_{k<n} int alpha_k omega^{n-k} / int omega^n)")

    def seeded(s):
        lam = 1.0 - (1.0 - s) * kappa * vol / lower
        alphas = [None if a is None else a * lam for a in problem.alphas[:-1]]
        seed = problem.omega_n * ((1.0 - s) * kappa)
        top = problem.alphas[-1]
        alphas.append(seed if top is None else top + seed)
        w = problem.witness
        witness = EllipticityParams(w.delta * lam, w.k0)
        return GmaProblem(grid, problem.omega, alphas, witness, chi=problem.chi, tolerances=problem.tol,
                          validate=False, allow_zero_top=True)

    phi, trace = continuity_run(seeded(0.0), cfg)
    s, ds, svals = 0.0, cfg.initial_dt, [0.0]
    while s < 1.0:
        s_new = min(s + ds, 1.0)
        P = seeded(s_new)
        try:
            if s_new < 1.0:
                res = newton_solve(P, phi, 1.0, cfg)
            else:
                res = _newton_unnormalised(P, phi, cfg)
        except (NewtonFailure, AdmissibilityError) as exc:
            ds *= 0.5
            if ds < cfg.min_dt:
                raise PathFailure(f"seed removal stalled near s={s:.6g}: {exc}", trace) from exc
            continue
        phi, s = res.phi, s_new
        svals.append(s)
        if res.iterations <= cfg.easy_iterations:
            ds = min(ds * cfg.growth, cfg.max_dt)
    return phi, trace, svals


def _newton_unnormalised(problem: GmaProblem, phi0: ScalarField, cfg: SolverConfig) -> NewtonResult:
    # at t = 1 the weight of alpha_n is 1 regardless of its mass
    norm = NormalizationConstants(c=1.0, volume=1.0, top_mass=1.0, mixed=(0.0,) * problem.n)
    return newton_solve(problem, phi0, 1.0, cfg, norm)
