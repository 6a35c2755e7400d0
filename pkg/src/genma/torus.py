"""Fields on the flat torus C^n / (Z + iZ)^n with Fourier differentiation.

Real axes are ordered ``(x1, y1, x2, y2, ...)`` with ``z^j = x^j + i y^j``
and unit periods.  Derivatives follow ``d/dz = (d/dx - i d/dy) / 2`` so that
``i ddbar |z|^2 = i dz ^ dzbar``.  Integrals are normalised so that the
volume form ``prod_j i dz^j ^ dzbar^j`` has total mass 1.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np
import scipy.fft as sfft

from .forms import PPForm, _index_lookup, multi_indices, wedge

DEFAULT_MAX_POINTS = 1 << 23


def _workers():
    env = os.environ.get("GMA_THREADS")
    return int(env) if env else None


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid with ``sizes[j]`` samples on both real axes of ``z^j``."""

    n: int
    sizes: tuple
    max_points: int = DEFAULT_MAX_POINTS

    def __init__(self, n: int, sizes=16, max_points: int = DEFAULT_MAX_POINTS):
        if not 1 <= n <= 3:
            raise ValueError(f"complex dimension must be 1..3, got {n}")
        if np.isscalar(sizes):
            sizes = (int(sizes),) * n
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) != n:
            raise ValueError(f"need one size per complex coordinate, got {sizes}")
        for s in sizes:
            if s < 8 or s & (s - 1):
                raise ValueError(f"axis sizes must be powers of two >= 8, got {s}")
        total = int(np.prod([s * s for s in sizes]))
        if total > max_points:
            raise ValueError(f"{total} grid points exceed the budget of {max_points}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "max_points", max_points)

    @property
    def shape(self) -> tuple:
        return tuple(s for s in self.sizes for _ in range(2))

    @property
    def npoints(self) -> int:
        return int(np.prod(self.shape))

    def coords(self):
        """Open meshgrid of real coordinates ``[x1, y1, x2, y2, ...]``."""
        axes = [np.arange(s) / s for s in self.shape]
        return np.meshgrid(*axes, indexing="ij", sparse=True)

    def x(self, j: int):
        """Re z^j (1-based), broadcastable to the grid shape."""
        return self.coords()[2 * (j - 1)]

    def y(self, j: int):
        return self.coords()[2 * (j - 1) + 1]

    def refined(self, factor: int = 2) -> "TorusGrid":
        return TorusGrid(self.n, tuple(s * factor for s in self.sizes), self.max_points)

    @cached_property
    def _wavenumbers(self):
        ks = []
        for ax, s in enumerate(self.shape):
            k = np.fft.fftfreq(s, d=1.0 / s)
            shape = [1] * len(self.shape)
            shape[ax] = s
            ks.append(k.reshape(shape))
        return ks

    @cached_property
    def _nyquist_free(self):
        out = []
        for ax, s in enumerate(self.shape):
            k = self._wavenumbers[ax]
            out.append(np.where(np.abs(k) == s // 2, 0.0, k))
        return out

    @cached_property
    def ddbar_symbols(self) -> dict:
        """Fourier multipliers of ``d_j dbar_l`` for ``j <= l`` (0-based)."""
        K = self._wavenumbers
        Kf = self._nyquist_free
        sym = {}
        for j in range(self.n):
            kx, ky = K[2 * j], K[2 * j + 1]
            sym[j, j] = -(np.pi ** 2) * (kx * kx + ky * ky)
            for l in range(j + 1, self.n):
                # d_j -> pi i (kx_j - i ky_j), dbar_l -> pi i (kx_l + i ky_l)
                dj = Kf[2 * j] - 1j * Kf[2 * j + 1]
                dl = Kf[2 * l] + 1j * Kf[2 * l + 1]
                sym[j, l] = -(np.pi ** 2) * dj * dl
        return sym

    @cached_property
    def d_symbols(self) -> list:
        """Fourier multipliers of ``d/dz^j`` (Nyquist removed)."""
        Kf = self._nyquist_free
        return [np.pi * 1j * (Kf[2 * j] - 1j * Kf[2 * j + 1]) for j in range(self.n)]

    def fft(self, values):
        return sfft.fftn(values, axes=range(-2 * self.n, 0), workers=_workers())

    def ifft(self, values):
        return sfft.ifftn(values, axes=range(-2 * self.n, 0), workers=_workers())


@dataclass
class ScalarField:
    grid: TorusGrid
    values: np.ndarray
    zero_average: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v = np.broadcast_to(v, self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar field has non-finite values")
        self.values = v

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape), zero_average=True)

    def __add__(self, other):
        ov = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values + ov)

    def __sub__(self, other):
        ov = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values - ov)

    def __mul__(self, s):
        return ScalarField(self.grid, self.values * s)

    __rmul__ = __mul__

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass
class FormField:
    """A (p,p)-form sampled on every grid point (batch shape = grid shape)."""

    grid: TorusGrid
    form: PPForm

    def __post_init__(self):
        if self.form.n != self.grid.n:
            raise ValueError("form dimension differs from grid dimension")
        if self.form.batch_shape != self.grid.shape:
            c = np.broadcast_to(self.form.coeffs, self.grid.shape + self.form.coeffs.shape[-2:])
            self.form = PPForm(c, self.form.n, self.form.p, check=False)

    @classmethod
    def constant(cls, grid: TorusGrid, form: PPForm) -> "FormField":
        if form.batch_shape:
            raise ValueError("constant field needs a single-point form")
        c = np.broadcast_to(form.coeffs, grid.shape + form.coeffs.shape)
        return cls(grid, PPForm(c, form.n, form.p, check=False))

    @property
    def degree(self) -> int:
        return self.form.p

    @property
    def coeffs(self) -> np.ndarray:
        return self.form.coeffs

    def is_constant(self) -> bool:
        c = self.coeffs
        return bool(np.all(c == c.reshape(-1, *c.shape[-2:])[0]))

    def mean_form(self) -> PPForm:
        c = self.coeffs
        m = c.shape[-1]
        # reduce along a contiguous last axis so numpy sums pairwise
        flat = np.ascontiguousarray(c.reshape(-1, m * m).T)
        return PPForm._trusted(flat.mean(axis=-1).reshape(m, m), self.form.n, self.form.p)

    def _wrap(self, form):
        return FormField(self.grid, form)

    def __add__(self, other):
        return self._wrap(self.form + other.form)

    def __sub__(self, other):
        return self._wrap(self.form - other.form)

    def __neg__(self):
        return self._wrap(-self.form)

    def __mul__(self, s):
        s = s.values if isinstance(s, ScalarField) else s
        return self._wrap(self.form * s)

    __rmul__ = __mul__

    def wedge(self, other: "FormField", dealias: bool = False) -> "FormField":
        return wedge_fields(self, other, dealias=dealias)

    def power(self, k: int) -> "FormField":
        return self._wrap(self.form.power(k))


def scalar_form(grid: TorusGrid, values) -> FormField:
    return FormField(grid, PPForm.scalar(np.broadcast_to(values, grid.shape), grid.n))


def top_form(grid: TorusGrid, values) -> FormField:
    """Top-degree field ``values`` times the standard volume form."""
    return FormField(grid, PPForm.volume(grid.n, np.broadcast_to(values, grid.shape)))


def spectral_ddbar(phi: ScalarField) -> FormField:
    """The (1,1)-form field ``i ddbar phi`` by Fourier differentiation."""
    grid = phi.grid
    v = np.asarray(phi.values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite potential")
    return FormField(grid, PPForm(ddbar_matrix(grid, v), grid.n, 1, check=False))


def ddbar_matrix(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Hermitian matrix field ``H[..., j, l] = d_j dbar_l values``."""
    n = grid.n
    vh = grid.fft(values)
    H = np.empty(grid.shape + (n, n), dtype=complex)
    for (j, l), s in grid.ddbar_symbols.items():
        d = grid.ifft(s * vh)
        if j == l:
            H[..., j, j] = d.real
        else:
            H[..., j, l] = d
            H[..., l, j] = np.conj(d)
    return H


def dz(phi: ScalarField) -> np.ndarray:
    """Components ``d phi / dz^j`` stacked on the last axis."""
    grid = phi.grid
    vh = grid.fft(phi.values)
    return np.stack([grid.ifft(s * vh) for s in grid.d_symbols], axis=-1)


def gradient_norm(phi: ScalarField, chi: FormField) -> np.ndarray:
    """Pointwise ``|d phi|_chi`` with ``|v|^2 = sum (chi^{-1})_{kj} v_j conj(v_k)``."""
    v = dz(phi)
    if chi.is_constant():
        hinv = np.linalg.inv(chi.coeffs[(0,) * (2 * phi.grid.n)])
    else:
        hinv = np.linalg.inv(chi.coeffs)
    sq = np.einsum("...kj,...j,...k->...", hinv, v, np.conj(v)).real
    return np.sqrt(np.maximum(sq, 0.0))


def integrate(f: FormField) -> float:
    """Integral of a top-degree field (mean of the top coefficient)."""
    if f.degree != f.grid.n:
        raise ValueError(f"integrate needs an ({f.grid.n},{f.grid.n})-form, got degree {f.degree}")
    return float(np.mean(f.form.top))


def integrate_scalar(grid: TorusGrid, values, weight: FormField | None = None) -> float:
    """``int values * weight`` for a scalar array and a top-degree weight."""
    if weight is None:
        return float(np.mean(values))
    return float(np.mean(np.asarray(values) * weight.form.top))


def zero_average_project(phi: ScalarField, omega: FormField) -> ScalarField:
    """``phi - int(phi omega^n) / int(omega^n)``."""
    vol = omega.power(phi.grid.n)
    mass = integrate(vol)
    if mass == 0:
        raise ValueError("omega^n has zero integral")
    shift = integrate_scalar(phi.grid, phi.values, vol) / mass
    return ScalarField(phi.grid, phi.values - shift, zero_average=True)


def exterior_derivative_parts(alpha: FormField) -> np.ndarray:
    """Components of the (p+1,p) part of ``d alpha``.

    Shape ``grid + (C(n,p+1), C(n,p))``.  The (p,p+1) part is the complex
    conjugate of this one for real forms.
    """
    grid, n, p = alpha.grid, alpha.grid.n, alpha.degree
    if p + 1 > n:
        return np.zeros(grid.shape + (0, comb(n, p)), dtype=complex)
    rows = multi_indices(n, p + 1)
    lookup = _index_lookup(n, p)
    ch = grid.fft(alpha.coeffs.transpose(*range(2 * n, 2 * n + 2), *range(2 * n)))
    out = np.zeros((len(rows), comb(n, p)) + grid.shape, dtype=complex)
    for m, M in enumerate(rows):
        for pos, j in enumerate(M):
            I = M[:pos] + M[pos + 1:]
            sign = -1.0 if pos % 2 else 1.0
            out[m] += sign * grid.ifft(grid.d_symbols[j] * ch[lookup[I]])
    return np.moveaxis(out, (0, 1), (-2, -1))


def check_closed(alpha: FormField, tol: float = 1e-10) -> bool:
    """True iff every spectral component of ``d alpha`` is at most ``tol``."""
    if alpha.is_constant():
        return True
    parts = exterior_derivative_parts(alpha)
    return bool(parts.size == 0 or np.max(np.abs(parts)) <= tol)


# ---- 3/2-rule dealiasing ----------------------------------------------

def _resample(values, grid_shape, new_shape):
    """Fourier interpolation/truncation over the trailing grid axes."""
    nax = len(grid_shape)
    lead = values.shape[: values.ndim - nax]
    vh = sfft.fftn(values, axes=range(-nax, 0), workers=_workers())
    out = np.zeros(lead + tuple(new_shape), dtype=complex)
    slices_src, slices_dst = [], []
    for s_old, s_new in zip(grid_shape, new_shape):
        m = min(s_old, s_new) // 2
        slices_src.append((np.r_[0:m, s_old - m + 1: s_old] if m > 0 else np.r_[0:1]))
        slices_dst.append((np.r_[0:m, s_new - m + 1: s_new] if m > 0 else np.r_[0:1]))
    idx_src = np.ix_(*slices_src)
    idx_dst = np.ix_(*slices_dst)
    out[(Ellipsis,) + idx_dst] = vh[(Ellipsis,) + idx_src]
    scale = np.prod(new_shape) / np.prod(grid_shape)
    return sfft.ifftn(out, axes=range(-nax, 0), workers=_workers()) * scale


def wedge_fields(a: FormField, b: FormField, dealias: bool = False) -> FormField:
    """Pointwise wedge; ``dealias`` evaluates products on a 3/2-padded grid."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    if not dealias or a.is_constant() or b.is_constant():
        return FormField(a.grid, wedge(a.form, b.form))
    grid = a.grid
    shape = grid.shape
    fine = tuple(3 * s // 2 for s in shape)
    nax = len(shape)

    def up(ff):
        c = np.moveaxis(ff.coeffs, (-2, -1), (0, 1))
        return np.moveaxis(_resample(c, shape, fine), (0, 1), (-2, -1))

    pa = PPForm(up(a), a.form.n, a.form.p, check=False)
    pb = PPForm(up(b), b.form.n, b.form.p, check=False)
    prod = wedge(pa, pb).coeffs
    c = np.moveaxis(prod, (-2, -1), (0, 1))
    down = np.moveaxis(_resample(c, fine, shape), (0, 1), (-2, -1))
    assert down.shape[:nax] == shape
    return FormField(grid, PPForm._trusted(down, a.form.n, a.form.p + b.form.p))


def band_limited(grid: TorusGrid, modes) -> np.ndarray:
    """Trig polynomial ``sum a cos(2 pi k.x) + b sin(2 pi k.x)`` on the grid.

    ``modes`` is an iterable of ``(k, a, b)`` with ``k`` an integer vector over
    the real axes ``(x1, y1, ...)``.
    """
    X = grid.coords()
    out = np.zeros(grid.shape)
    for k, a, b in modes:
        k = tuple(k)
        if len(k) != 2 * grid.n:
            raise ValueError(f"mode {k} needs {2 * grid.n} components")
        arg = sum(2 * np.pi * kk * xx for kk, xx in zip(k, X))
        out = out + a * np.cos(arg) + b * np.sin(arg)
    return out
