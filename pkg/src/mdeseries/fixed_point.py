"""Damped fixed-point solvers for the matrix and vector Dyson equations.

The matrix equation is ``-M^{-1} = z + S(M)`` with ``Im M > 0``; the vector
equation is ``-1/m_x = z + (s @ m)_x``. Both are solved by iterating
``M <- (1 - a) M + a F(M)`` with ``F(M) = -(z + S(M))^{-1}``, started at the
large-``|z|`` asymptote ``-I/z``.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, NumericalError, ValidationError

logger = logging.getLogger(__name__)

CONDITION_WARNING = 1e12
MAX_REJECTIONS = 10
POSITIVITY_FLOOR = -1e-10


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls.

    ``tolerance`` bounds the max-norm of the fixed-point defect
    ``F(M) - M`` relative to ``max |M|``.
    """

    tolerance: float = 1e-12
    max_iterations: int = 100_000
    damping: float = 0.5

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValidationError("tolerance must be positive")
        if not 0 < self.damping <= 1:
            raise ValidationError("damping must lie in (0, 1]")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be positive")


@dataclass
class MdeSolution:
    z: complex
    M: np.ndarray
    iterations: int
    residual: float
    im_min_eig: float
    history: list = field(default_factory=list, repr=False)

    @property
    def normalized_trace(self) -> complex:
        return complex(np.trace(self.M)) / self.M.shape[0]


def _check_z(z):
    z = complex(z)
    if not z.imag > 0:
        raise ValidationError(f"spectral parameter must lie in the upper half plane, got {z}")
    return z


def mde_residual(S, M, z) -> float:
    """``max |M^{-1} + z + S(M)|``."""
    M = np.asarray(M)
    inv = np.linalg.inv(M)
    return float(np.max(np.abs(inv + z * np.eye(M.shape[0]) + S.apply(M))))


def imaginary_part_min_eigenvalue(M) -> float:
    """Smallest eigenvalue of ``(M - M^*) / 2i``."""
    M = np.asarray(M)
    im = (M - M.conj().T) / 2j
    return float(np.linalg.eigvalsh((im + im.conj().T) / 2)[0])


def _update(S, M, z):
    return -np.linalg.inv(z * np.eye(M.shape[0]) + S.apply(M))


def _warn_conditioning(S, M, z):
    cond = np.linalg.cond(z * np.eye(M.shape[0]) + S.apply(M))
    if cond > CONDITION_WARNING:
        warnings.warn(f"update matrix condition number {cond:.3g} at z={z}", RuntimeWarning, stacklevel=3)


def _iterate(step, M0, cfg: SolverConfig, what: str):
    M = M0
    alpha = cfg.damping
    rejections = 0
    history = []
    for it in range(1, cfg.max_iterations + 1):
        try:
            F = step(M)
            if not np.all(np.isfinite(F)):
                raise np.linalg.LinAlgError("non-finite update")
        except np.linalg.LinAlgError as exc:
            rejections += 1
            if rejections > MAX_REJECTIONS:
                raise NumericalError(f"{what}: {rejections} rejected steps, last: {exc}") from exc
            alpha /= 2
            logger.debug("%s: rejected step %d, damping now %g", what, it, alpha)
            continue
        defect = float(np.max(np.abs(F - M)))
        history.append(defect)
        if defect <= cfg.tolerance * float(np.max(np.abs(M))):
            return F, it, history
        M = (1 - alpha) * M + alpha * F
    raise ConvergenceError(
        f"{what} did not converge in {cfg.max_iterations} iterations (last defect {history[-1]:.3g})",
        history,
    )


def solve_mde(S, z, cfg: SolverConfig | None = None, initial=None) -> MdeSolution:
    """Solve ``-M^{-1} = z + S(M)`` by damped fixed-point iteration.

    Parameters
    ----------
    S : CovarianceOperator
    z : complex
        Spectral parameter with ``Im z > 0``.
    cfg : SolverConfig, optional
    initial : array_like, optional
        Starting matrix; defaults to ``-I / z``.

    Raises
    ------
    ConvergenceError
        If the defect does not reach the tolerance; ``history`` holds the
        defect at every iteration.
    NumericalError
        After more than 10 rejected (singular) steps.
    """
    cfg = cfg or SolverConfig()
    z = _check_z(z)
    n = S.n
    M0 = -np.eye(n, dtype=complex) / z if initial is None else np.array(initial, dtype=complex)
    M, iterations, history = _iterate(lambda M: _update(S, M, z), M0, cfg, "matrix Dyson solve")
    _warn_conditioning(S, M, z)
    im_min = imaginary_part_min_eigenvalue(M)
    if im_min < POSITIVITY_FLOOR:
        raise NumericalError(f"converged to a solution with Im M not positive (min eigenvalue {im_min:.3g})")
    return MdeSolution(
        z=z,
        M=M,
        iterations=iterations,
        residual=mde_residual(S, M, z),
        im_min_eig=im_min,
        history=history,
    )


def vector_dyson_solve(variances, z, cfg: SolverConfig | None = None) -> np.ndarray:
    """Solve ``-1/m_x = z + sum_y s[x, y] m_y`` for the vector ``m``."""
    cfg = cfg or SolverConfig()
    z = _check_z(z)
    s = np.asarray(variances, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValidationError("variance matrix must be square")
    if np.any(s < 0):
        raise ValidationError("variances must be nonnegative")

    def step(m):
        denom = z + s @ m
        if np.any(denom == 0):
            raise np.linalg.LinAlgError("zero denominator")
        return -1.0 / denom

    m0 = np.full(s.shape[0], -1.0 / z, dtype=complex)
    m, _, _ = _iterate(step, m0, cfg, "vector Dyson solve")
    if np.any(m.imag <= 0):
        raise NumericalError("vector Dyson solution lost positivity of the imaginary part")
    return m


@dataclass
class StieltjesReport:
    points: list
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def stieltjes_checks(M_values) -> StieltjesReport:
    """Check ``Im <M(z)> > 0`` and ``|<M(z)>| <= 1 / Im z`` at every ``z``.

    ``M_values`` maps ``z`` to a matrix. Violations are reported, not raised.
    """
    points, violations = [], []
    for z, M in M_values.items():
        z = _check_z(z)
        M = np.asarray(M)
        avg = complex(np.trace(M)) / M.shape[0]
        points.append((z, avg))
        if not avg.imag > 0:
            violations.append((z, "Im <M> <= 0", avg.imag))
        if abs(avg) > 1.0 / z.imag * (1 + 1e-12):
            violations.append((z, "|<M>| > 1/Im z", abs(avg)))
    return StieltjesReport(points, violations)


SWEEP_COLUMNS = ("z_re", "z_im", "trace_M_re", "trace_M_im", "residual", "iterations")


def grid_sweep(S, zs, cfg: SolverConfig | None = None) -> list:
    """Solve at every ``z``; failures yield a row with NaN values."""
    rows = []
    for z in zs:
        try:
            sol = solve_mde(S, z, cfg)
        except (ConvergenceError, NumericalError) as exc:
            logger.warning("solve failed at z=%s: %s", z, exc)
            rows.append((complex(z).real, complex(z).imag, np.nan, np.nan, np.nan, -1))
            continue
        tr = sol.normalized_trace
        rows.append((sol.z.real, sol.z.imag, tr.real, tr.imag, sol.residual, sol.iterations))
    return rows


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
