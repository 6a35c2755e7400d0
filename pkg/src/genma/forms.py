"""Pointwise algebra of (p,p)-forms on C^n.

A (p,p)-form is stored as a Hermitian coefficient matrix ``c[I, J]`` over
strictly increasing multi-indices ``I, J`` of length ``p`` (lexicographic
order), in the basis

    beta_{I,J} = i^{p^2} dz^I ^ dzbar^J.

With this choice a real form has a Hermitian coefficient matrix, a form is
positive iff the matrix is positive semi-definite, ``beta_{I,I}`` is the
product of ``i dz^j ^ dzbar^j`` over ``j in I`` and the Euclidean Kahler form
``i sum dz^j ^ dzbar^j`` has the identity as coefficients, so that
``omega^n = n! vol``.  The wedge product of basis elements is simply

    beta_{I,J} ^ beta_{K,L} = sgn(I,K) sgn(J,L) beta_{I+K, J+L}.

Coefficient arrays may carry leading batch axes (one per grid sample); every
operation here broadcasts over them.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial

import numpy as np

HERMITIAN_RTOL = 1e-12


@lru_cache(maxsize=None)
def multi_indices(n: int, p: int) -> tuple[tuple[int, ...], ...]:
    """Strictly increasing index tuples of length ``p`` from ``range(n)``."""
    return tuple(itertools.combinations(range(n), p))


@lru_cache(maxsize=None)
def _index_lookup(n: int, p: int) -> dict:
    return {I: a for a, I in enumerate(multi_indices(n, p))}


def _merge_sign(I, K) -> int:
    # parity of the shuffle that sorts the concatenation I + K
    inversions = sum(1 for i in I for k in K if i > k)
    return -1 if inversions % 2 else 1


@lru_cache(maxsize=None)
def _split_tensor(n: int, p: int, q: int) -> np.ndarray:
    """S[M, I, K] = sgn(I, K) when I u K = M (disjoint), else 0."""
    rows = multi_indices(n, p + q)
    lookup = _index_lookup(n, p + q)
    S = np.zeros((len(rows), comb(n, p), comb(n, q)))
    for a, I in enumerate(multi_indices(n, p)):
        for b, K in enumerate(multi_indices(n, q)):
            if set(I) & set(K):
                continue
            M = tuple(sorted(I + K))
            S[lookup[M], a, b] = _merge_sign(I, K)
    S.setflags(write=False)
    return S


class PPForm:
    """A (p,p)-form on C^n, possibly sampled at a batch of points.

    Parameters
    ----------
    coeffs : array_like, shape (..., C(n,p), C(n,p))
        Hermitian coefficient matrices in the ``beta_{I,J}`` basis.
    n : int
        Complex dimension.
    p : int
        Bidegree.
    check : bool
        Reject coefficient matrices that fail Hermitian symmetry by more
        than ``1e-12`` relative.  Internal results are symmetrised instead.
    """

    __slots__ = ("coeffs", "n", "p")

    def __init__(self, coeffs, n: int, p: int, check: bool = True):
        if n < 1:
            raise ValueError(f"dimension must be >= 1, got {n}")
        if not 0 <= p <= n:
            raise ValueError(f"degree {p} outside 0..{n}")
        c = np.asarray(coeffs, dtype=complex)
        N = comb(n, p)
        if c.shape[-2:] != (N, N):
            raise ValueError(f"expected trailing shape {(N, N)} for a ({p},{p})-form on C^{n}, got {c.shape}")
        if check:
            if not np.all(np.isfinite(c)):
                raise ValueError("non-finite coefficients")
            scale = np.max(np.abs(c), initial=0.0)
            skew = np.max(np.abs(c - np.conj(np.swapaxes(c, -1, -2))), initial=0.0)
            if skew > HERMITIAN_RTOL * scale:
                raise ValueError(f"coefficients are not Hermitian (defect {skew:.3e}, scale {scale:.3e})")
        self.coeffs = c
        self.n = n
        self.p = p

    # ---- constructors -------------------------------------------------
    @classmethod
    def _trusted(cls, coeffs, n, p):
        c = 0.5 * (coeffs + np.conj(np.swapaxes(coeffs, -1, -2)))
        return cls(c, n, p, check=False)

    @classmethod
    def zero(cls, n: int, p: int, batch: tuple = ()) -> "PPForm":
        N = comb(n, p)
        return cls(np.zeros(batch + (N, N), dtype=complex), n, p, check=False)

    @classmethod
    def scalar(cls, value, n: int) -> "PPForm":
        """A (0,0)-form; ``value`` may be an array of samples."""
        v = np.asarray(value, dtype=float)
        return cls(v[..., None, None].astype(complex), n, 0, check=False)

    @classmethod
    def from_matrix(cls, h) -> "PPForm":
        """The (1,1)-form ``i sum h_{jk} dz^j ^ dzbar^k``."""
        h = np.asarray(h, dtype=complex)
        return cls(h, h.shape[-1], 1)

    @classmethod
    def euclidean(cls, n: int) -> "PPForm":
        return cls(np.eye(n, dtype=complex), n, 1, check=False)

    @classmethod
    def volume(cls, n: int, scale=1.0) -> "PPForm":
        """``scale`` times the product of ``i dz^j ^ dzbar^j``."""
        s = np.asarray(scale, dtype=float)
        return cls(s[..., None, None].astype(complex), n, n, check=False)

    @classmethod
    def basis(cls, n: int, I, J=None) -> "PPForm":
        """The basis element ``beta_{I,J}`` plus its conjugate when I != J."""
        I = tuple(sorted(I))
        J = I if J is None else tuple(sorted(J))
        p = len(I)
        lookup = _index_lookup(n, p)
        c = np.zeros((comb(n, p),) * 2, dtype=complex)
        c[lookup[I], lookup[J]] = 1.0
        c[lookup[J], lookup[I]] = 1.0
        return cls(c, n, p, check=False)

    @classmethod
    def from_pform(cls, phi, n: int | None = None, p: int | None = None) -> "PPForm":
        """``i^{p^2} Phi ^ conj(Phi)`` for a (p,0)-form with coefficients ``phi[I]``.

        ``n`` and ``p`` are inferred from the length when omitted (ambiguous
        lengths such as ``C(3,1) = C(3,2)`` resolve to the smaller ``p``).
        """
        a = np.asarray(phi, dtype=complex)
        N = a.shape[-1]
        if n is None or p is None:
            n, p = _infer_dims(N)
        elif comb(n, p) != N:
            raise ValueError(f"{N} coefficients do not fit a ({p},0)-form on C^{n}")
        return cls(a[..., :, None] * np.conj(a[..., None, :]), n, p, check=False)

    # ---- arithmetic ---------------------------------------------------
    @property
    def batch_shape(self) -> tuple:
        return self.coeffs.shape[:-2]

    def _like(self, other: "PPForm"):
        if not isinstance(other, PPForm):
            return NotImplemented
        if (other.n, other.p) != (self.n, self.p):
            raise ValueError(f"shape mismatch: ({self.p},{self.p}) on C^{self.n} vs ({other.p},{other.p}) on C^{other.n}")
        return other

    def __add__(self, other):
        if self._like(other) is NotImplemented:
            return NotImplemented
        return PPForm(self.coeffs + other.coeffs, self.n, self.p, check=False)

    def __sub__(self, other):
        if self._like(other) is NotImplemented:
            return NotImplemented
        return PPForm(self.coeffs - other.coeffs, self.n, self.p, check=False)

    def __neg__(self):
        return PPForm(-self.coeffs, self.n, self.p, check=False)

    def __mul__(self, s):
        """Multiply by a real scalar or by a real array of batch samples."""
        s = np.asarray(s)
        if np.iscomplexobj(s) and np.any(np.imag(s) != 0):
            raise ValueError("forms may only be scaled by real numbers")
        s = np.real(s)
        return PPForm(self.coeffs * s[..., None, None], self.n, self.p, check=False)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return self * (1.0 / np.asarray(s, dtype=float))

    def wedge(self, other: "PPForm") -> "PPForm":
        return wedge(self, other)

    def power(self, k: int) -> "PPForm":
        """k-fold wedge power; ``power(0)`` is the constant 1."""
        if k < 0:
            raise ValueError("negative power")
        out = PPForm.scalar(np.ones(self.batch_shape), self.n)
        base = self
        while k:
            if k & 1:
                out = wedge(out, base)
            k >>= 1
            if k:
                base = wedge(base, base)
        return out

    @property
    def top(self) -> np.ndarray:
        """Real top coefficient of an (n,n)-form relative to ``vol``."""
        if self.p != self.n:
            raise ValueError(f"not a top form: degree {self.p} on C^{self.n}")
        return np.real(self.coeffs[..., 0, 0])

    @property
    def matrix(self) -> np.ndarray:
        if self.p != 1:
            raise ValueError("matrix view only exists for (1,1)-forms")
        return self.coeffs

    def sample(self, index) -> "PPForm":
        return PPForm(self.coeffs[index], self.n, self.p, check=False)

    def __repr__(self):
        return f"PPForm(n={self.n}, p={self.p}, batch={self.batch_shape})"

    # ---- serialisation ------------------------------------------------
    def to_json(self) -> str:
        if self.batch_shape:
            raise ValueError("only single-point forms serialise to JSON")
        flat = [[float(z.real), float(z.imag)] for z in self.coeffs.ravel()]
        return json.dumps({"degree": self.p, "dim": self.n, "coeffs": flat})

    @classmethod
    def from_json(cls, text: str) -> "PPForm":
        d = json.loads(text) if isinstance(text, str) else text
        n, p = int(d["dim"]), int(d["degree"])
        N = comb(n, p)
        flat = np.array([complex(re, im) for re, im in d["coeffs"]])
        if flat.size != N * N:
            raise ValueError(f"expected {N * N} coefficients, got {flat.size}")
        return cls(flat.reshape(N, N), n, p)


def _infer_dims(N):
    for n in range(1, 8):
        for p in range(n + 1):
            if comb(n, p) == N:
                return n, p
    raise ValueError(f"cannot infer (n, p) from {N} components; construct PPForm directly")


@lru_cache(maxsize=None)
def _wedge_terms(n: int, p: int, q: int) -> tuple:
    S = _split_tensor(n, p, q)
    return tuple((int(m), int(i), int(k), float(S[m, i, k])) for m, i, k in zip(*np.nonzero(S)))


def eigvalsh_small(c) -> np.ndarray:
    """Ascending eigenvalues of batched Hermitian matrices (closed form up to 2x2)."""
    c = np.asarray(c)
    N = c.shape[-1]
    if N == 1:
        return np.real(c[..., 0, :])
    if N == 2:
        a = np.real(c[..., 0, 0])
        d = np.real(c[..., 1, 1])
        m = 0.5 * (a + d)
        r = np.hypot(0.5 * (a - d), np.abs(c[..., 0, 1]))
        return np.stack([m - r, m + r], axis=-1)
    return np.linalg.eigvalsh(c)


def det_small(c) -> np.ndarray:
    """Determinants of batched square matrices (cofactor expansion up to 3x3)."""
    c = np.asarray(c)
    N = c.shape[-1]
    if N == 1:
        return c[..., 0, 0]
    if N == 2:
        return c[..., 0, 0] * c[..., 1, 1] - c[..., 0, 1] * c[..., 1, 0]
    if N == 3:
        m = [[c[..., i, j] for j in range(3)] for i in range(3)]
        return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
    return np.linalg.det(c)


@lru_cache(maxsize=None)
def _top_pairing(n: int, p: int):
    # a (p,p) index i pairs with a single (n-p,n-p) index k(i) in a top product
    S = _split_tensor(n, p, n - p)[0]
    k = np.argmax(np.abs(S), axis=1)
    s = S[np.arange(S.shape[0]), k]
    return k, np.outer(s, s)


def wedge_top(a: PPForm, b: PPForm) -> np.ndarray:
    """Top coefficient of ``a ^ b`` when the degrees add up to ``n``."""
    if a.n != b.n or a.p + b.p != a.n:
        raise ValueError(f"wedge_top needs complementary degrees, got {a.p} + {b.p} on C^{a.n}")
    if a.p == 0 or b.p == 0:
        return wedge(a, b).top
    k, ss = _top_pairing(a.n, a.p)
    ac, bc = a.coeffs, b.coeffs
    out = np.zeros(np.broadcast_shapes(a.batch_shape, b.batch_shape), dtype=complex)
    for i in range(len(k)):
        for j in range(len(k)):
            out += ss[i, j] * (ac[..., i, j] * bc[..., k[i], k[j]])
    return out.real


def wedge(a: PPForm, b: PPForm) -> PPForm:
    """Exterior product of a (p,p)-form and a (q,q)-form."""
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    if a.p + b.p > a.n:
        raise ValueError(f"degree overflow: {a.p} + {b.p} > {a.n}")
    if a.p == 0:
        return PPForm(a.coeffs[..., :1, :1] * b.coeffs, b.n, b.p, check=False)
    if b.p == 0:
        return PPForm(a.coeffs * b.coeffs[..., :1, :1], a.n, a.p, check=False)
    terms = _wedge_terms(a.n, a.p, b.p)
    R = comb(a.n, a.p + b.p)
    ac = np.moveaxis(a.coeffs, (-2, -1), (0, 1))
    bc = np.moveaxis(b.coeffs, (-2, -1), (0, 1))
    batch = np.broadcast_shapes(a.batch_shape, b.batch_shape)
    out = np.zeros((R, R) + batch, dtype=complex)
    for m, i, k, s in terms:
        for n_, j, l, s2 in terms:
            out[m, n_] += (s * s2) * (ac[i, j] * bc[k, l])
    out = np.moveaxis(out, (0, 1), (-2, -1))
    return PPForm._trusted(out, a.n, a.p + b.p)


def is_positive(a: PPForm, strict: bool = False, tol: float | None = None):
    """Positivity via the Hermitian form induced on the p-th exterior power.

    Non-strict: every eigenvalue of the coefficient matrix is ``>= -tol``.
    Strict: every eigenvalue is ``>= tol``.  The default ``tol`` is
    ``1e-10 * max|c|`` per sample.  Returns a bool (array over the batch).
    """
    if tol is not None and strict and tol <= 0:
        raise ValueError("strict positivity needs tol > 0")
    c = a.coeffs
    ev = eigvalsh_small(c)
    if tol is None:
        tol = 1e-10 * np.max(np.abs(c), axis=(-2, -1))
        if strict:
            tol = np.where(tol > 0, tol, 1e-300)
    lo = ev[..., 0]
    result = lo >= tol if strict else lo >= -np.asarray(tol)
    return result if np.ndim(result) else bool(result)


def min_eigenvalue(a: PPForm) -> np.ndarray:
    """Smallest eigenvalue of the coefficient matrix, per sample."""
    return eigvalsh_small(a.coeffs)[..., 0]


def top_ratio(a: PPForm, ref: PPForm):
    """The real ``r`` with ``a = r * ref`` for top-degree forms."""
    if a.p != a.n or ref.p != ref.n:
        raise ValueError("top_ratio needs (n,n)-forms")
    if a.n != ref.n:
        raise ValueError("dimension mismatch")
    d = ref.top
    if np.any(d == 0):
        raise ZeroDivisionError("reference top form vanishes")
    return a.top / d


def relative_eigenvalues(g, h) -> np.ndarray:
    """Eigenvalues of ``h v = lam g v`` sorted descending.

    ``g`` must be positive definite.  Both arguments are Hermitian matrices
    (or (1,1)-forms) with optional leading batch axes.
    """
    g = g.coeffs if isinstance(g, PPForm) else np.asarray(g, dtype=complex)
    h = h.coeffs if isinstance(h, PPForm) else np.asarray(h, dtype=complex)
    flat = g.reshape(-1, *g.shape[-2:])
    uniform = flat.shape[0] > 1 and bool(np.all(flat == flat[0]))
    try:
        L = np.linalg.cholesky(flat[0] if uniform else g)
    except np.linalg.LinAlgError as exc:
        raise ValueError("reference matrix is not positive definite") from exc
    Linv = np.linalg.inv(L)
    # L^{-1} h L^{-*}
    M = Linv @ h @ np.conj(np.swapaxes(Linv, -1, -2))
    M = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
    lam = eigvalsh_small(M)
    return lam[..., ::-1]


@lru_cache(maxsize=None)
def _complement_signs(n: int):
    # wedge(beta_{c(k), c(l)}, beta_{k,l}) = s(k) s(l) vol
    S = _split_tensor(n, n - 1, 1)[0]
    idx = np.argmax(np.abs(S), axis=0)
    signs = S[idx, np.arange(n)]
    return idx, signs


def contraction_matrix(alpha: PPForm, chi: PPForm) -> np.ndarray:
    """Matrix ``A`` with ``alpha ^ beta = (sum_{k,l} A[k,l] beta[k,l]) chi^n``.

    ``alpha`` is an (n-1,n-1)-form, ``chi`` a strictly positive (1,1)-form and
    ``beta`` ranges over (1,1)-forms with coefficient matrices ``beta[k,l]``.
    ``A`` is Hermitian and positive semi-definite iff ``alpha`` is positive.
    """
    n = alpha.n
    if alpha.p != n - 1 or chi.p != 1 or chi.n != n:
        raise ValueError("contraction_matrix needs an (n-1,n-1)-form and a (1,1)-form on the same C^n")
    idx, s = _complement_signs(n)
    sub = alpha.coeffs[..., idx[:, None], idx[None, :]]
    vol = factorial(n) * np.real(np.linalg.det(chi.coeffs))
    A = sub * np.outer(s, s) / vol[..., None, None]
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def cone_operator(omega: PPForm, alphas, t: float = 1.0) -> PPForm:
    """``n omega^{n-1} - t sum_{k<n} (n-k) alpha_k ^ omega^{n-k-1}``.

    ``alphas[k-1]`` is the (k,k)-form alpha_k (``None`` for zero); alpha_n
    carries the coefficient ``n - n = 0`` and is ignored.
    """
    n = omega.n
    if omega.p != 1:
        raise ValueError("omega must be a (1,1)-form")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} outside [0, 1]")
    alphas = list(alphas)
    if len(alphas) not in (n - 1, n):
        raise ValueError(f"expected {n} forms alpha_1..alpha_n, got {len(alphas)}")
    powers = [PPForm.scalar(np.ones(omega.batch_shape), n), omega]
    for _ in range(2, n):
        powers.append(wedge(powers[-1], omega))
    out = powers[n - 1] * float(n)
    if t == 0:
        return out
    for k in range(1, n):
        a = alphas[k - 1]
        if a is None:
            continue
        if a.p != k or a.n != n:
            raise ValueError(f"alpha_{k} must be a ({k},{k})-form on C^{n}")
        out = out - wedge(a, powers[n - k - 1]) * (t * (n - k))
    return out


@dataclass(frozen=True)
class EllipticityParams:
    """Witness ``alpha_{k0} >= delta omega^{k0}``."""

    delta: float
    k0: int

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.k0 < 1:
            raise ValueError(f"k0 must be >= 1, got {self.k0}")


def ellipticity_bound(spectrum, params: EllipticityParams):
    """Slack ``1 - delta k0!(n-k0)!/n! sum_{|I|=k0} 1/prod_{i in I} lam_i``.

    ``spectrum`` holds relative eigenvalues along its last axis.
    """
    lam = np.asarray(spectrum, dtype=float)
    n = lam.shape[-1]
    if params.k0 > n:
        raise ValueError(f"k0={params.k0} exceeds n={n}")
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be positive")
    inv = 1.0 / lam
    total = np.zeros(lam.shape[:-1])
    for I in itertools.combinations(range(n), params.k0):
        total = total + np.prod(inv[..., list(I)], axis=-1)
    w = factorial(params.k0) * factorial(n - params.k0) / factorial(n)
    return 1.0 - params.delta * w * total


class ConeViolation(ValueError):
    """Raised when ``lam_2 ... lam_n <= A^{11}``."""


def solve_lambda1(A_diag, h: float, tail) -> float:
    """Largest eigenvalue from ``lam_1...lam_n = sum_k A_kk lam_k + h``.

    ``A_diag`` holds the n diagonal entries of the contraction matrix and
    ``tail`` the eigenvalues ``lam_2..lam_n``.
    """
    A = np.asarray(A_diag, dtype=float)
    tail = np.asarray(tail, dtype=float)
    if A.shape[-1] != tail.shape[-1] + 1:
        raise ValueError("A_diag must have one more entry than tail")
    denom = np.prod(tail, axis=-1) - A[..., 0]
    if np.any(denom <= 0):
        raise ConeViolation(f"lam_2...lam_n - A^11 = {np.min(denom):.3e} <= 0")
    return (h + np.sum(A[..., 1:] * tail, axis=-1)) / denom
