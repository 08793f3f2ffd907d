"""Covariance super-operators ``S(R) = E[H R H]`` and decay norms.

Indices are 0-based. An operator is described by its scalar entries
``S[x, y, z, t]`` through ``S(R)[x, t] = sum_{y, z} S[x, y, z, t] R[y, z]``.

Three storage forms are provided:

* :class:`DenseOperator`: the full ``N^4`` table.
* :class:`FactoredOperator`: sums of ``P[x, z] Q[y, t]`` ("transpose" terms,
  contracting to ``P R^T Q``) and ``U[x, t] V[y, z]`` ("trace" terms,
  contracting to ``U * sum(V * R)``).
* :class:`VarianceProfileOperator`: ``S[x, y, z, t] = [x == t][y == z] s[x, y]``,
  the operator behind the vector Dyson equation.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError

DENSE_LIMIT = 64


def rho(x: int, y: int, z: int, t: int, n: int | None = None) -> int:
    """Symmetrized distance between the index pairs ``(x, y)`` and ``(z, t)``."""
    if n is not None:
        for i in (x, y, z, t):
            if not 0 <= i < n:
                raise ValidationError(f"index {i} outside [0, {n})")
    return min(abs(x - z) + abs(y - t), abs(x - t) + abs(y - z))


def rho_table(n: int, x=slice(None)) -> np.ndarray:
    """``rho`` for every 4-tuple, shape ``(n, n, n, n)``; ``x`` selects first indices."""
    d = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    dx = d[x]
    if np.ndim(dx) == 1:
        return rho_table(n, [x])[0]
    direct = dx[:, None, :, None] + d[None, :, None, :]  # |x-z| + |y-t|
    crossed = dx[:, None, None, :] + d[None, :, :, None]  # |x-t| + |y-z|
    return np.minimum(direct, crossed)


def _check_l(l):
    if not l > 0:
        raise ValidationError(f"decay scale must be positive, got {l}")


def decay_weights(n: int, l: float) -> np.ndarray:
    """``exp(|x - y| / l)`` for all index pairs."""
    _check_l(l)
    d = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return np.exp(d / l)


def matrix_l_norm(R, l: float) -> float:
    """``max_{x,y} exp(|x - y| / l) |R[x, y]|``."""
    R = np.asarray(R)
    return float(np.max(decay_weights(R.shape[0], l) * np.abs(R)))


class CovarianceOperator:
    """Base class. Subclasses implement :meth:`apply` and :meth:`entries`.

    Attributes
    ----------
    n : int
        Matrix dimension.
    decay_scale : float or None
        Default decay length ``l`` used when none is given.
    kind : str
        Serialization kind.
    params : dict
        Construction parameters (used to serialize parametric kinds).
    positivity_preserving : bool
        True when the operator is known to map PSD matrices to PSD matrices
        (always the case for operators built from an ensemble).
    """

    kind = "abstract"

    def __init__(self, n, decay_scale=None, params=None, positivity_preserving=True):
        if n < 1:
            raise ValidationError("dimension must be positive")
        self.n = int(n)
        self.decay_scale = decay_scale
        self.params = dict(params or {})
        self.positivity_preserving = positivity_preserving

    def apply(self, R):
        raise NotImplementedError

    def __call__(self, R):
        return self.apply(R)

    def _check_matrix(self, R):
        R = np.asarray(R)
        if R.shape != (self.n, self.n):
            raise ValidationError(f"expected a {self.n}x{self.n} matrix, got shape {R.shape}")
        return R

    def entries(self, x=slice(None)) -> np.ndarray:
        """Entry table ``S[x, :, :, :]``; the full table when ``x`` is omitted."""
        raise NotImplementedError

    def entry(self, x, y, z, t):
        return self.entries(x)[y, z, t]

    def dense(self) -> np.ndarray:
        if self.n > DENSE_LIMIT:
            raise ValidationError(f"dense table refused for N={self.n} > {DENSE_LIMIT}")
        return self.entries()

    @property
    def is_real(self) -> bool:
        return True

    def l_norm(self, l: float) -> float:
        """``max exp(rho / l) |S[x, y, z, t]|``; exact for N <= 64."""
        _check_l(l)
        if self.n <= DENSE_LIMIT:
            return self._exact_l_norm(l)
        return self.l_norm_bound(l)

    def _exact_l_norm(self, l):
        best = 0.0
        for x in range(self.n):
            best = max(best, float(np.max(np.exp(rho_table(self.n, x) / l) * np.abs(self.entries(x)))))
        return best

    def l_norm_bound(self, l: float) -> float:
        return self._exact_l_norm(l)

    def identity_image_norm(self) -> float:
        """Spectral norm of ``S(I)``; equals the induced operator norm of a positive map."""
        return float(np.linalg.norm(self.apply(np.eye(self.n)), 2))


class DenseOperator(CovarianceOperator):
    kind = "dense"

    def __init__(self, table, decay_scale=None, positivity_preserving=False, params=None):
        table = np.asarray(table)
        n = table.shape[0]
        if table.shape != (n, n, n, n):
            raise ValidationError(f"dense table must have shape (N, N, N, N), got {table.shape}")
        if not np.iscomplexobj(table):
            table = table.astype(float)
        super().__init__(n, decay_scale, params, positivity_preserving)
        self.table = table
        self.table.setflags(write=False)

    def apply(self, R):
        R = self._check_matrix(R)
        return np.einsum("xyzt,yz->xt", self.table, R)

    def entries(self, x=slice(None)):
        return self.table[x]

    @property
    def is_real(self):
        return not np.iscomplexobj(self.table)


class FactoredOperator(CovarianceOperator):
    """``S[x,y,z,t] = sum P[x,z] Q[y,t] + sum U[x,t] V[y,z]``."""

    kind = "factored"

    def __init__(self, n, transpose_terms=(), trace_terms=(), decay_scale=None, params=None,
                 kind=None, positivity_preserving=True):
        super().__init__(n, decay_scale, params, positivity_preserving)
        if kind is not None:
            self.kind = kind
        self.transpose_terms = [tuple(np.asarray(m) for m in pair) for pair in transpose_terms]
        self.trace_terms = [tuple(np.asarray(m) for m in pair) for pair in trace_terms]
        for pair in self.transpose_terms + self.trace_terms:
            for m in pair:
                if m.shape != (n, n):
                    raise ValidationError("factor matrices must be N x N")

    def apply(self, R):
        R = self._check_matrix(R)
        out = np.zeros((self.n, self.n), dtype=np.result_type(R, *self._factors()))
        for P, Q in self.transpose_terms:
            out += P @ R.T @ Q
        for U, V in self.trace_terms:
            out += U * np.sum(V * R)
        return out

    def _factors(self):
        return [m for pair in self.transpose_terms + self.trace_terms for m in pair]

    def entries(self, x=slice(None)):
        dtype = np.result_type(float, *self._factors())
        xs = np.arange(self.n)[x]
        scalar = np.ndim(xs) == 0
        xs = np.atleast_1d(xs)
        out = np.zeros((len(xs), self.n, self.n, self.n), dtype=dtype)
        for P, Q in self.transpose_terms:
            # P[x, z] Q[y, t]
            out += P[xs][:, None, :, None] * Q[None, :, None, :]
        for U, V in self.trace_terms:
            # U[x, t] V[y, z]
            out += U[xs][:, None, None, :] * V[None, :, :, None]
        return out[0] if scalar else out

    @property
    def is_real(self):
        return not any(np.iscomplexobj(m) for m in self._factors())

    def l_norm_bound(self, l):
        """Certified upper bound: ``sum ||P||_l ||Q||_l + sum ||U||_l ||V||_l``.

        Each product term decays in one of the two pairings entering ``rho``,
        so its weighted size is at most the product of the factor l-norms.
        """
        _check_l(l)
        return float(sum(matrix_l_norm(a, l) * matrix_l_norm(b, l)
                         for a, b in self.transpose_terms + self.trace_terms))


class VarianceProfileOperator(CovarianceOperator):
    """``S(R) = diag(s @ diag(R))``: the embedding of the vector Dyson equation."""

    kind = "variance_profile"

    def __init__(self, variances, decay_scale=None):
        s = np.asarray(variances, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValidationError("variance matrix must be square")
        if np.any(s < 0):
            raise ValidationError("variances must be nonnegative")
        super().__init__(s.shape[0], decay_scale)
        self.variances = s
        self.variances.setflags(write=False)

    def apply(self, R):
        R = self._check_matrix(R)
        return np.diag(self.variances @ np.diag(R))

    def entries(self, x=slice(None)):
        xs = np.arange(self.n)[x]
        scalar = np.ndim(xs) == 0
        xs = np.atleast_1d(xs)
        out = np.zeros((len(xs), self.n, self.n, self.n))
        for i, xv in enumerate(xs):
            out[i, np.arange(self.n), np.arange(self.n), xv] = self.variances[xv]
        return out[0] if scalar else out

    def _exact_l_norm(self, l):
        # all nonzero entries have rho(xy, yx) = 0
        return float(self.variances.max())


def apply_S(S: CovarianceOperator, R) -> np.ndarray:
    return S.apply(R)


def operator_l_norm(S: CovarianceOperator, l: float) -> float:
    return S.l_norm(l)


def wigner_operator(n: int) -> FactoredOperator:
    """``S(R) = (Tr R / N) I``."""
    eye = np.eye(n)
    return FactoredOperator(n, trace_terms=[(eye / n, eye)], decay_scale=1.0, kind="wigner",
                            params={"N": n})


def kernel_matrix(n: int, kernel_scale: float, amplitude: float) -> np.ndarray:
    """``A[i, j] = kappa exp(-|i - j| / l')`` with ``max_x (A^2)[x, x] = amplitude``.

    Rows near the boundary have smaller variance than the bulk.
    """
    if not kernel_scale > 0 or not amplitude > 0:
        raise ValidationError("kernel scale and amplitude must be positive")
    d = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    E = np.exp(-d / kernel_scale)
    kappa = math.sqrt(amplitude / np.max(np.sum(E * E, axis=1)))
    return kappa * E


def filtered_gaussian_operator(n: int, kernel_scale: float, amplitude: float,
                               decay_scale: float | None = None) -> FactoredOperator:
    """Exact covariance operator of ``H = A G A / sqrt(N)`` with ``G`` drawn from GOE.

    ``S[x,y,z,t] = (B[x,z] B[y,t] + B[x,t] B[y,z]) / N`` with ``B = A^2``.
    The default decay scale is ``2 l'``: ``B`` decays like
    ``(1 + |x-y|) exp(-|x-y| / l')``, so any scale above ``l'`` gives an
    N-uniform bound on ``N ||S||_l``.
    """
    A = kernel_matrix(n, kernel_scale, amplitude)
    B = A @ A
    B = (B + B.T) / 2
    if decay_scale is None:
        decay_scale = 2.0 * kernel_scale
    return FactoredOperator(
        n, transpose_terms=[(B / n, B)], trace_terms=[(B / n, B)], decay_scale=decay_scale,
        kind="filtered_gaussian",
        params={"N": n, "kernel_scale": float(kernel_scale), "amplitude": float(amplitude),
                "decay_scale": float(decay_scale)},
    )


def random_ensemble_operator(n: int, rng, n_terms: int = 4, decay_scale: float = 1.0,
                             complex_entries: bool = True) -> DenseOperator:
    """Covariance operator of ``H = sum_j xi_j K_j`` with independent standard ``xi_j``.

    Each ``K_j`` is a random Hermitian matrix damped by ``exp(-|x-y| / l)``,
    so ``S[x,y,z,t] = sum_j K_j[x,y] K_j[z,t]`` is self-adjointness
    consistent and positivity preserving.
    """
    damp = 1.0 / decay_weights(n, decay_scale)
    table = np.zeros((n,) * 4, dtype=complex if complex_entries else float)
    for _ in range(n_terms):
        K = rng.standard_normal((n, n))
        if complex_entries:
            K = K + 1j * rng.standard_normal((n, n))
        K = (K + K.conj().T) / 2 * damp / math.sqrt(n * n_terms)
        table += np.einsum("xy,zt->xyzt", K, K)
    return DenseOperator(table, decay_scale=decay_scale, positivity_preserving=True,
                         params={"N": n, "n_terms": n_terms})


def symmetry_defect(S: CovarianceOperator) -> float:
    """``max |S[x,y,z,t] - conj(S[t,z,y,x])|`` (zero for ``E[H R H]`` with Hermitian H)."""
    T = S.dense()
    return float(np.max(np.abs(T - np.conj(T.transpose(3, 2, 1, 0)))))
