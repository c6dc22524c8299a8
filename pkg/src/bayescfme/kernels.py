"""
Kernels, Gram matrices and regularized solves.

Two kernel families are supported:

* ``rbf``          amplitude * exp(-sum_d (x_d - x'_d)^2 / (2 l_d^2))
* ``nuclear_rbf``  the Lebesgue self-convolution of the rbf kernel with the
                   same parameters,

                       int k(y, u) k(u, y') du
                         = amplitude^2 * prod_d sqrt(pi l_d^2)
                           * exp(-sum_d (y_d - y'_d)^2 / (4 l_d^2))

  i.e. an rbf with lengthscale sqrt(2) l and a rescaled amplitude. Gaussian
  process paths drawn with this covariance lie in the RKHS of the base kernel.

Point sets are ``(n, d)`` arrays; one-dimensional input is read as ``n``
scalar points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
from scipy import linalg as sla
from scipy.linalg import lapack

from .errors import InputError, NumericalError

logger = logging.getLogger(__name__)

Family = Literal["rbf", "nuclear_rbf"]


@dataclass(frozen=True)
class KernelSpec:
    """Anisotropic RBF kernel or its nuclear-dominant self-convolution.

    For ``nuclear_rbf`` the lengthscales and amplitude are those of the
    *base* rbf kernel being convolved.
    """

    family: Family
    lengthscales: tuple[float, ...]
    amplitude: float = 1.0

    def __post_init__(self):
        if self.family not in ("rbf", "nuclear_rbf"):
            raise InputError(f"unknown kernel family {self.family!r}")
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        if not ls or any(not np.isfinite(v) or v <= 0 for v in ls):
            raise InputError(f"lengthscales must be positive, got {ls}")
        if not np.isfinite(self.amplitude) or self.amplitude <= 0:
            raise InputError(f"amplitude must be positive, got {self.amplitude}")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "amplitude", float(self.amplitude))

    @classmethod
    def rbf(cls, lengthscales: float | Sequence[float], amplitude: float = 1.0) -> KernelSpec:
        return cls("rbf", tuple(np.atleast_1d(lengthscales)), amplitude)

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def nuclear(self) -> KernelSpec:
        """Self-convolution of this rbf kernel."""
        if self.family != "rbf":
            raise InputError("only an rbf kernel has a nuclear counterpart")
        return replace(self, family="nuclear_rbf")

    def as_rbf(self) -> tuple[np.ndarray, float]:
        """Equivalent plain-rbf ``(lengthscales, amplitude)``."""
        ls = np.asarray(self.lengthscales)
        if self.family == "rbf":
            return ls, self.amplitude
        scale = self.amplitude**2 * np.prod(np.sqrt(np.pi) * ls)
        return np.sqrt(2.0) * ls, float(scale)

    def diag_value(self) -> float:
        return self.as_rbf()[1]

    def __call__(self, rows, cols=None) -> np.ndarray:
        return gram(self, rows, rows if cols is None else cols)


def as_points(x, dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a float ``(n, d)`` point-set array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None] if dim in (None, 1) else arr[None, :]
    elif arr.ndim != 2:
        raise InputError(f"point set must be at most 2-d, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise InputError(f"points have dimension {arr.shape[1]}, expected {dim}")
    return arr


def _as_point(x, dim: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (dim,):
        raise InputError(f"point has shape {arr.shape}, expected ({dim},)")
    return arr


def _eval_pair(x, x2, spec: KernelSpec) -> float:
    a, b = _as_point(x, spec.dim), _as_point(x2, spec.dim)
    ls, amp = spec.as_rbf()
    # squaring the difference makes the result exactly symmetric
    return float(amp * np.exp(-0.5 * np.sum(((a - b) / ls) ** 2)))


def rbf_eval(x, x2, spec: KernelSpec) -> float:
    if spec.family != "rbf":
        raise InputError("rbf_eval needs an rbf kernel")
    return _eval_pair(x, x2, spec)


def nuclear_rbf_eval(y, y2, spec: KernelSpec) -> float:
    if spec.family != "nuclear_rbf":
        raise InputError("nuclear_rbf_eval needs a nuclear_rbf kernel")
    return _eval_pair(y, y2, spec)


def gram(spec: KernelSpec, rows, cols) -> np.ndarray:
    """Dense matrix of kernel evaluations ``spec(rows_i, cols_j)``."""
    a = as_points(rows, spec.dim)
    b = as_points(cols, spec.dim)
    ls, amp = spec.as_rbf()
    a, b = a / ls, b / ls
    sq = np.zeros((a.shape[0], b.shape[0]))
    for d in range(spec.dim):
        sq += np.subtract.outer(a[:, d], b[:, d]) ** 2
    return amp * np.exp(-0.5 * sq)


def median_heuristic(points) -> np.ndarray:
    """Per-dimension median of pairwise absolute differences over distinct pairs.

    Falls back to 1.0 in any dimension with fewer than two distinct values.
    """
    pts = as_points(points)
    if pts.shape[0] == 0:
        raise InputError("median heuristic needs at least one point")
    n = pts.shape[0]
    iu = np.triu_indices(n, k=1)
    out = np.ones(pts.shape[1])
    for d in range(pts.shape[1]):
        col = pts[:, d]
        if np.unique(col).size < 2:
            continue
        med = np.median(np.abs(col[:, None] - col[None, :])[iu])
        out[d] = med if med > 0 else 1.0
    return out


@dataclass(frozen=True)
class SolveConfig:
    """Regularized solve settings.

    Factorization counts as failed when Cholesky breaks down or the estimated
    reciprocal condition number of the shifted matrix is below ``min_rcond``;
    jitter then grows from ``jitter_start`` by ``jitter_factor`` until it
    would exceed ``jitter_max``.
    """

    ridge: float = 1e-2
    jitter_start: float = 1e-8
    jitter_max: float = 1e-2
    jitter_factor: float = 10.0
    min_rcond: float = 1e-7

    def __post_init__(self):
        if self.ridge < 0:
            raise InputError("ridge must be nonnegative")
        if self.jitter_start <= 0 or self.jitter_factor <= 1:
            raise InputError("jitter_start must be > 0 and jitter_factor > 1")
        if self.jitter_start > self.jitter_max:
            raise InputError("jitter_start must not exceed jitter_max")

    def with_ridge(self, ridge: float) -> SolveConfig:
        return replace(self, ridge=ridge)


@dataclass(frozen=True)
class RegFactor:
    """Cholesky factor of ``M + (ridge + jitter) I``."""

    matrix: np.ndarray = field(repr=False)
    chol: np.ndarray = field(repr=False)
    ridge: float
    jitter: float

    @property
    def shift(self) -> float:
        return self.ridge + self.jitter

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def solve(self, rhs) -> np.ndarray:
        b = np.asarray(rhs, dtype=float)
        if b.shape[0] != self.n:
            raise InputError(f"right-hand side has {b.shape[0]} rows, expected {self.n}")
        if self.n == 0:
            return np.zeros_like(b)
        x = sla.cho_solve((self.chol, True), b)
        # one step of iterative refinement keeps the residual at rounding level
        resid = b - self.matrix @ x - self.shift * x
        return x + sla.cho_solve((self.chol, True), resid)


def _usable(mat: np.ndarray, chol: np.ndarray, min_rcond: float) -> bool:
    # numpy only rejects nonpositive pivots; a factor this close to singular
    # cannot meet the residual bound of RegFactor.solve
    if not np.all(np.isfinite(chol)):
        return False
    anorm = np.abs(mat).sum(axis=0).max()
    rcond, info = lapack.dpocon(chol, anorm, uplo="L")
    return info == 0 and rcond >= min_rcond


def factorize(M, cfg: SolveConfig) -> RegFactor:
    """Factor ``M + ridge I``, adding escalating jitter when Cholesky fails."""
    mat = np.asarray(M, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InputError(f"expected a square matrix, got shape {mat.shape}")
    n = mat.shape[0]
    if n == 0:
        return RegFactor(mat, mat.copy(), cfg.ridge, 0.0)
    eye = np.eye(n)
    jitter = 0.0
    while True:
        shifted = mat + (cfg.ridge + jitter) * eye
        try:
            chol = np.linalg.cholesky(shifted)
        except np.linalg.LinAlgError:
            chol = None
        if chol is not None and _usable(shifted, chol, cfg.min_rcond):
            if jitter > 0:
                logger.debug("cholesky needed jitter %.3g (n=%d)", jitter, n)
            return RegFactor(mat, chol, cfg.ridge, jitter)
        jitter = cfg.jitter_start if jitter == 0 else jitter * cfg.jitter_factor
        if jitter > cfg.jitter_max * (1 + 1e-12):
            eig = np.linalg.eigvalsh(0.5 * (mat + mat.T))
            raise NumericalError(
                f"cholesky failed up to jitter {cfg.jitter_max:g}",
                min_eig=float(eig[0]),
                max_eig=float(eig[-1]),
                ridge=cfg.ridge,
            )


def reg_solve(M, cfg: SolveConfig, B) -> np.ndarray:
    """Solve ``(M + ridge I + jitter I) X = B``; see :func:`factorize`."""
    return factorize(M, cfg).solve(B)
