"""Tree-indexed Laurent coefficients of the matrix Dyson equation solution.

For large ``|z|`` the solution is ``M(z) = -sum_k C_k z^{-2k-1}`` where
``C_k`` is the sum of ``val(T)`` over ordered trees with ``k`` edges. The
production path computes ``C_k`` by the convolution recursion
``C_k = sum_m C_{k-1-m} S(C_m)``; the per-tree values (recursive and
brute-force over frame labellings) are kept as independent checks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceLimitError, SeriesDivergenceWarning, ValidationError
from .fixed_point import mde_residual
from .operators import _check_l, matrix_l_norm
from .trees import MAX_ORDER, OrderedTree, build_frame, check_order, decompose, enumerate_trees

BRUTE_FORCE_LIMIT = 10**7


# --- per-tree values -------------------------------------------------------


def _labellings(n, k, a, b):
    free = 2 * k - 1
    if n**free > BRUTE_FORCE_LIMIT:
        raise ResourceLimitError(f"{n}^{free} labellings exceed the brute-force guard {BRUTE_FORCE_LIMIT}")
    idx = np.arange(n**free)
    cols = [np.full(idx.shape, a)]
    cols += list(np.unravel_index(idx, (n,) * free)) if free else []
    cols.append(np.full(idx.shape, b))
    return np.stack(cols, axis=1)


def val_bruteforce(g: OrderedTree, S, a: int, b: int):
    """``val_{ab}(g)`` summed directly over all frame labellings with ends ``a``, ``b``.

    Each tree edge contributes ``S[x_a, x_b, x_c, x_d]`` for its frame-vertex
    quadruple ``(a, b, c, d)`` (see :attr:`Frame.edge_quadruples`).
    """
    k = g.edge_count
    if k == 0:
        return 1.0 if a == b else 0.0
    table = S.dense()
    labels = _labellings(S.n, k, a, b)
    prod = np.ones(len(labels), dtype=table.dtype)
    for qa, qb, qc, qd in build_frame(g).edge_quadruples:
        prod = prod * table[labels[:, qa], labels[:, qb], labels[:, qc], labels[:, qd]]
    return prod.sum()


def val_bruteforce_matrix(g: OrderedTree, S) -> np.ndarray:
    n = S.n
    out = np.array([[val_bruteforce(g, S, a, b) for b in range(n)] for a in range(n)])
    return out


def val_recursive(g: OrderedTree, S, cache: dict | None = None) -> np.ndarray:
    """``val(g) = val(g1) S(val(g2))`` for ``g = g1 (+) g2``, memoized on the Dyck word."""
    if cache is None:
        cache = {}
    hit = cache.get(g.word)
    if hit is not None:
        return hit
    if g.edge_count == 0:
        out = np.eye(S.n)
    else:
        g1, g2 = decompose(g)
        out = val_recursive(g1, S, cache) @ S.apply(val_recursive(g2, S, cache))
    cache[g.word] = out
    return out


def tree_sum_coefficient(k: int, S, cache: dict | None = None) -> np.ndarray:
    """``C_k`` as the sum of ``val`` over all trees with ``k`` edges, in canonical order."""
    cache = {} if cache is None else cache
    total = np.zeros((S.n, S.n))
    for g in enumerate_trees(k):
        total = total + val_recursive(g, S, cache)
    return total


def coefficients(S, K: int) -> list:
    """``[C_0, ..., C_K]`` from the convolution recursion."""
    K = check_order(K)
    C = [np.eye(S.n)]
    SC = []
    for k in range(1, K + 1):
        SC.append(S.apply(C[k - 1]))
        total = np.zeros_like(SC[-1])
        for m in range(k):
            total = total + C[k - 1 - m] @ SC[m]
        C.append(total)
    return C


def coefficient_C(k: int, S) -> np.ndarray:
    return coefficients(S, k)[k]


# --- decay bounds -----------------------------------------------------------


def c_l_eps(l: float, eps: float) -> float:
    """Path-sum growth constant ``l e^{1/l} 2 (1 + eps) / eps``."""
    _check_l(l)
    if not eps > 0:
        raise ValidationError("eps must be positive")
    return l * math.exp(1.0 / l) * 2.0 * (1.0 + eps) / eps


@dataclass(frozen=True)
class DecayConstants:
    """``R = 8 c(l, eps)^2 c`` with ``c = N ||S||_l``: ``||C_k||_{(1+eps)l} <= R^k``."""

    l: float
    eps: float
    c_l_eps: float
    c: float
    R: float


def decay_constants(l: float, eps: float, S) -> DecayConstants:
    cle = c_l_eps(l, eps)
    norm = S.l_norm(l)
    if not math.isfinite(norm):
        raise ValidationError("operator has infinite l-norm")
    c = S.n * norm
    return DecayConstants(l=float(l), eps=float(eps), c_l_eps=cle, c=c, R=8.0 * cle**2 * c)


def _exp_kernel(n, l):
    d = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return np.exp(-d / l)


def path_sum(l: float, steps: int, a: int, b: int, n: int) -> float:
    """Sum over ``x_1..x_{steps-1}`` of ``exp(-(|a-x_1| + ... + |x_{steps-1}-b|)/l)``.

    ``steps = 0`` gives ``[a == b]``. Computed by propagating a row vector,
    ``O(steps N^2)``.
    """
    _check_l(l)
    if steps < 0:
        raise ValidationError("steps must be nonnegative")
    E = _exp_kernel(n, l)
    row = np.zeros(n)
    row[a] = 1.0
    for _ in range(steps):
        row = row @ E
    return float(row[b])


def path_sum_matrix(l: float, steps: int, n: int) -> np.ndarray:
    """All ``path_sum(l, steps, a, b, n)`` at once."""
    _check_l(l)
    E = _exp_kernel(n, l)
    return np.linalg.matrix_power(E, steps) if steps else np.eye(n)


def cyc_sum(l: float, k: int, n: int) -> float:
    """Sum over closed index chains of length ``k`` of ``exp(-total jump / l)``."""
    if k < 1:
        raise ValidationError("cycle length must be positive")
    return float(np.trace(path_sum_matrix(l, k, n)))


# --- coefficients with certificates and evaluation -------------------------


@dataclass
class LaurentValue:
    """A truncated series evaluation.

    ``certificate_tail`` sums the geometric norm certificates ``R^k`` beyond
    ``K``; ``spectral_tail`` uses ``||C_k|| <= (4 ||S(I)||)^k``, available for
    positivity-preserving operators. Both bound the max-entry truncation
    error, and ``tail_bound`` is the smaller one (``inf`` when neither
    series converges at this ``z``).
    """

    z: complex
    M: np.ndarray
    K: int
    tail_bound: float
    certificate_tail: float
    spectral_tail: float
    term_norms: list = field(repr=False)
    diverging: bool = False


def geometric_tail(ratio_base: float, z: complex, K: int) -> float:
    """``sum_{k > K} base^k |z|^{-2k-1}``; ``inf`` unless ``base < |z|^2``."""
    az = abs(z)
    q = ratio_base / az**2
    if not q < 1:
        return math.inf
    return q ** (K + 1) / (az * (1 - q))


@dataclass
class LaurentCoefficients:
    """``C_0..C_Kmax`` with their ``(1+eps)l``-norms and certificate bounds.

    Attributes
    ----------
    coeffs : list of ndarray
    norms : list of float
        ``||C_k||_{(1+eps)l}``.
    bounds : list of float
        ``N^k 8^k c(l,eps)^{2k} ||S||_l^k = R^k``.
    spectral_base : float or None
        ``4 ||S(I)||`` (squared support radius) for positivity-preserving ``S``.
    """

    fingerprint: str | None
    l: float
    eps: float
    constants: DecayConstants
    coeffs: list
    norms: list
    bounds: list
    spectral_base: float | None = None

    @property
    def K_max(self) -> int:
        return len(self.coeffs) - 1

    def tails(self, z, K):
        cert = geometric_tail(self.constants.R, z, K)
        spectral = math.inf if self.spectral_base is None else geometric_tail(self.spectral_base, z, K)
        return cert, spectral

    def choose_order(self, z, tol: float) -> int:
        """Smallest ``K`` whose tail bound is below ``tol``; ``K_max`` otherwise."""
        for K in range(self.K_max + 1):
            if min(self.tails(z, K)) < tol:
                return K
        return self.K_max

    def evaluate(self, z, K: int | None = None, tol: float | None = None) -> LaurentValue:
        z = complex(z)
        if z == 0:
            raise ValidationError("z must be nonzero")
        if K is None:
            K = self.choose_order(z, tol) if tol is not None else self.K_max
        if not 0 <= K <= self.K_max:
            raise ValidationError(f"K={K} outside the computed range 0..{self.K_max}")
        M = np.zeros(self.coeffs[0].shape, dtype=complex)
        term_norms = []
        for k in range(K + 1):
            term = self.coeffs[k] * z ** (-2 * k - 1)
            term_norms.append(float(np.max(np.abs(term))))
            M -= term
        diverging = len(term_norms) >= 3 and term_norms[-1] >= term_norms[-2] >= term_norms[-3] > 0
        if diverging:
            warnings.warn(
                f"Laurent terms nondecreasing at z={z}: last norms {term_norms[-3:]}",
                SeriesDivergenceWarning,
                stacklevel=2,
            )
        cert, spectral = self.tails(z, K)
        return LaurentValue(z, M, K, min(cert, spectral), cert, spectral, term_norms, diverging)


def compute_coefficients(S, K_max: int = MAX_ORDER, l: float | None = None, eps: float = 1.0,
                         fingerprint: str | None = None) -> LaurentCoefficients:
    l = S.decay_scale if l is None else l
    if l is None:
        raise ValidationError("a decay scale l is required")
    consts = decay_constants(l, eps, S)
    C = coefficients(S, K_max)
    norms = [matrix_l_norm(c, (1 + eps) * l) for c in C]
    bounds = [consts.R**k for k in range(len(C))]
    spectral = 4.0 * S.identity_image_norm() if S.positivity_preserving else None
    return LaurentCoefficients(fingerprint, float(l), float(eps), consts, C, norms, bounds, spectral)


def laurent_M(z, S, K: int, l: float | None = None, eps: float = 1.0) -> LaurentValue:
    """``-sum_{k<=K} C_k z^{-2k-1}`` with its tail bound."""
    return compute_coefficients(S, K, l, eps).evaluate(z, K)


def laurent_residual(S, value: LaurentValue) -> float:
    return mde_residual(S, value.M, value.z)


@dataclass
class DecayReport:
    """Off-diagonal decay profile ``max_{|x-y|=d} |M[x, y]|``.

    ``fitted_slope`` is the least-squares slope of ``log profile`` over
    ``d >= 1`` (NaN when fewer than two off-diagonal values are nonzero);
    ``reference_slope`` is ``-1 / ((1 + eps) l)``.
    """

    l: float
    eps: float
    norm: float
    distances: np.ndarray
    profile: np.ndarray
    fitted_slope: float
    reference_slope: float


def verify_offdiagonal_decay(M, l: float, eps: float) -> DecayReport:
    M = np.asarray(M)
    n = M.shape[0]
    scale = (1 + eps) * l
    norm = matrix_l_norm(M, scale)
    absM = np.abs(M)
    profile = np.array([max(np.max(np.diagonal(absM, d)), np.max(np.diagonal(absM, -d))) for d in range(n)])
    distances = np.arange(n)
    mask = (distances >= 1) & (profile > 0)
    if mask.sum() >= 2:
        slope = float(np.polyfit(distances[mask], np.log(profile[mask]), 1)[0])
    else:
        slope = math.nan
    return DecayReport(float(l), float(eps), norm, distances, profile, slope, -1.0 / scale)
