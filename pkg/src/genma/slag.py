"""Deformed Hermitian-Yang-Mills type equation on a 3-fold.

With ``T = tan(theta_hat)`` fixed by the classes of ``omega`` and the
curvature ``Theta``, the equation

    -Theta^3 + 3 omega^2 Theta = T (omega^3 - 3 Theta^2 omega)

is equivalent, for ``Omega = Theta - T omega``, to

    Omega^3 = 3 sec^2 omega^2 ^ Omega + 2 T sec^2 omega^3,

a generalised Monge-Ampere equation in the background ``Omega``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GmaProblem
from .errors import InvalidProblem
from .forms import EllipticityParams, PPForm, min_eigenvalue, wedge
from .torus import FormField, integrate


class PhaseUndefined(InvalidProblem):
    """The real part of the class cube vanishes."""

    def __init__(self, message):
        super().__init__(message, check="phase")


def compute_theta_hat(omega: FormField, Theta: FormField) -> float:
    """``tan(theta_hat) = int(3 omega^2 Theta - Theta^3) / int(omega^3 - 3 Theta^2 omega)``."""
    if omega.grid.n != 3:
        raise ValueError(f"the phase is only defined here for n = 3, got n = {omega.grid.n}")
    o2 = omega.power(2)
    t2 = Theta.power(2)
    num = integrate(o2.wedge(Theta) * 3.0 - t2.wedge(Theta))
    den = integrate(o2.wedge(omega) - t2.wedge(omega) * 3.0)
    scale = integrate(o2.wedge(omega))
    if abs(den) <= 1e-14 * max(abs(scale), abs(num), 1e-300):
        raise PhaseUndefined(f"int(omega^3 - 3 Theta^2 omega) = {den:.3e} vanishes")
    return num / den


def _worst(values) -> tuple[float, tuple]:
    i = int(np.argmin(values))
    return float(values.flat[i]), tuple(int(v) for v in np.unravel_index(i, values.shape))


@dataclass
class SlagData:
    """Phase data and the shifted background ``Omega = Theta - tan(theta_hat) omega``.

    Construct with :meth:`from_fields`, which checks both hypotheses.
    """

    omega: FormField
    Theta: FormField
    tan_theta: float
    Omega: FormField
    sec2: float
    omega_margin: float
    cone_margin: float

    @property
    def theta_hat(self) -> float:
        return float(np.arctan(self.tan_theta))

    @classmethod
    def from_fields(cls, omega: FormField, Theta: FormField, tol: float = 0.0) -> "SlagData":
        T = compute_theta_hat(omega, Theta)
        if not T > 0:
            raise InvalidProblem(f"tan(theta_hat) = {T:.12g} is not positive", check="phase")
        sec2 = 1.0 + T * T
        Omega = Theta - omega * T
        lo, where = _worst(min_eigenvalue(Omega.form))
        if not lo > tol:
            raise InvalidProblem(
                f"hypothesis (1): Omega is not positive (min eigenvalue {lo:.6g} at {where})", check="omega")
        gap = Omega.power(2) - omega.power(2) * sec2
        lo2, where2 = _worst(min_eigenvalue(gap.form))
        if not lo2 > tol:
            raise InvalidProblem(
                f"hypothesis (2): Omega^2 - sec^2 omega^2 is not positive (min eigenvalue {lo2:.6g} at {where2})",
                check="cone")
        return cls(omega, Theta, T, Omega, sec2, lo, lo2)

    def report(self) -> dict:
        return {
            "tan_theta_hat": self.tan_theta,
            "theta_hat": self.theta_hat,
            "sec2": self.sec2,
            "omega_margin": self.omega_margin,
            "cone_margin": self.cone_margin,
        }


def slag_alphas(data: SlagData) -> list:
    om = data.omega
    a2 = om.power(2) * (3.0 * data.sec2)
    a3 = om.power(3) * (2.0 * data.tan_theta * data.sec2)
    return [None, a2, a3]


def build_slag_problem(data: SlagData, validate: bool = True) -> GmaProblem:
    """GmaProblem in the background ``Omega`` with witness on ``alpha_3``."""
    alphas = slag_alphas(data)
    ratio = alphas[2].form.top / data.Omega.power(3).form.top
    witness = EllipticityParams(float(np.min(ratio)) * (1.0 - 1e-12), 3)
    return GmaProblem(data.omega.grid, data.Omega, alphas, witness, validate=validate)


def grouping_sides(Theta: PPForm, omega: PPForm, tan_theta):
    """Top coefficients of both sides of the regrouping identity.

    Returns ``(lhs, rhs)`` with ``lhs = -Theta^3 + 3 omega^2 Theta -
    T (omega^3 - 3 Theta^2 omega)`` and ``rhs = -(Omega^3 - 3 sec^2 omega^2
    Omega - 2 T sec^2 omega^3)``.  ``tan_theta`` may be an array matching the
    batch shape.
    """
    T = np.asarray(tan_theta, dtype=float)
    sec2 = 1.0 + T * T
    o2 = wedge(omega, omega)
    o3 = wedge(o2, omega)
    t2 = wedge(Theta, Theta)
    t3 = wedge(t2, Theta)
    lhs = -t3.top + 3 * wedge(o2, Theta).top - T * (o3.top - 3 * wedge(t2, omega).top)
    Om = Theta - omega * T
    om3 = wedge(wedge(Om, Om), Om)
    rhs = -(om3.top - 3 * sec2 * wedge(o2, Om).top - 2 * T * sec2 * o3.top)
    return lhs, rhs


@dataclass(frozen=True)
class ExampleParams:
    """Tensor power ``k``, perturbation ``eps`` and intersection numbers.

    ``I30, I21, I12, I03`` are the integrals of ``Theta0^3``,
    ``Theta0^2 gamma``, ``Theta0 gamma^2`` and ``gamma^3``.
    """

    k: int
    eps: float
    I30: float = 1.0
    I21: float = 1.0
    I12: float = 1.0
    I03: float = 1.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")


def example_tangent(params: ExampleParams) -> float:
    """``tan(theta_k)`` for the class ``k Theta0`` against ``Theta0 + eps gamma``."""
    k, e = float(params.k), params.eps
    I30, I21, I12, I03 = params.I30, params.I21, params.I12, params.I03
    # int Theta0 (Theta0 + eps gamma)^2 and int (Theta0 + eps gamma)^3
    m1 = I30 + 2 * e * I21 + e * e * I12
    m3 = I30 + 3 * e * I21 + 3 * e * e * I12 + e ** 3 * I03
    num = k ** 3 * I30 - 3 * k * m1
    den = 3 * k * k * (I30 + e * I21) - m3
    if den == 0:
        raise PhaseUndefined(f"denominator vanishes at k={params.k}, eps={e}")
    return num / den


def example_table(ks, eps: float, intersections=(1.0, 1.0, 1.0, 1.0)) -> list[tuple[int, float]]:
    return [(int(k), example_tangent(ExampleParams(int(k), eps, *intersections))) for k in ks]


__all__ = [
    "ExampleParams", "PhaseUndefined", "SlagData", "build_slag_problem", "compute_theta_hat",
    "example_table", "example_tangent", "grouping_sides", "slag_alphas",
]
