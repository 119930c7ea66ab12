"""Kernel families, kernel matrices and the spherical-shell potential oracle.

Two families are supported:

* ``riesz``: ``(|x - y|^2 + eps^2)^((alpha - dim) / 2)``; the Newtonian kernel
  is ``alpha = 2, dim >= 3``.  With ``eps > 0`` this is an inverse multiquadric
  and strictly positive definite on any finite point set.
* ``log_unit_disk``: ``-0.5 * log(|x - y|^2 + eps^2)`` on the open unit disk.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

RIESZ = "riesz"
LOG_UNIT_DISK = "log_unit_disk"

PIVOT_FLOOR = 1e-12


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    family: str = RIESZ
    alpha: float = 2.0
    dim: int = 3
    epsilon: float = 0.0

    def __post_init__(self):
        if self.family == RIESZ:
            if int(self.dim) != self.dim or self.dim < 2:
                raise KernelError(f"Riesz kernel needs integer dim >= 2, got {self.dim}")
            if not 0.0 < self.alpha < self.dim:
                raise KernelError(f"Riesz kernel needs 0 < alpha < dim, got alpha={self.alpha}, dim={self.dim}")
        elif self.family == LOG_UNIT_DISK:
            if self.dim != 2:
                raise KernelError("log_unit_disk kernel lives in dimension 2")
        else:
            raise KernelError(f"unknown kernel family {self.family!r}")
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise KernelError(f"smoothing epsilon must be finite and >= 0, got {self.epsilon}")

    @classmethod
    def riesz(cls, alpha: float, dim: int, epsilon: float = 0.0) -> "KernelSpec":
        return cls(RIESZ, float(alpha), int(dim), float(epsilon))

    @classmethod
    def newtonian(cls, dim: int = 3, epsilon: float = 0.0) -> "KernelSpec":
        return cls.riesz(2.0, dim, epsilon)

    @classmethod
    def log_unit_disk(cls, epsilon: float = 0.0) -> "KernelSpec":
        return cls(LOG_UNIT_DISK, 0.0, 2, float(epsilon))

    @property
    def is_newtonian(self) -> bool:
        return self.family == RIESZ and self.alpha == 2.0 and self.dim >= 3

    def with_epsilon(self, epsilon: float) -> "KernelSpec":
        return KernelSpec(self.family, self.alpha, self.dim, float(epsilon))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], default_epsilon: float | None = None) -> "KernelSpec":
        """Build from a scenario block; a missing ``epsilon`` takes ``default_epsilon``."""
        eps = d.get("epsilon", default_epsilon)
        eps = 0.0 if eps is None else float(eps)
        fam = d.get("family", RIESZ)
        if fam == RIESZ:
            return cls.riesz(d.get("alpha", 2.0), d.get("dim", 3), eps)
        if fam == LOG_UNIT_DISK:
            return cls.log_unit_disk(eps)
        raise KernelError(f"unknown kernel family {fam!r}")

    def to_dict(self) -> dict:
        if self.family == LOG_UNIT_DISK:
            return {"family": LOG_UNIT_DISK, "epsilon": self.epsilon}
        return {"family": RIESZ, "alpha": self.alpha, "dim": self.dim, "epsilon": self.epsilon}


def _check_points(spec: KernelSpec, pts: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[1] != spec.dim:
        raise KernelError(f"points have dimension {pts.shape[1]}, kernel expects {spec.dim}")
    if spec.family == LOG_UNIT_DISK and np.any(np.einsum("ij,ij->i", pts, pts) >= 1.0):
        raise KernelError("log_unit_disk points must lie strictly inside the unit disk")
    return pts


def _from_sq_dist(spec: KernelSpec, d2: np.ndarray) -> np.ndarray:
    s = d2 + spec.epsilon ** 2
    with np.errstate(divide="ignore"):
        if spec.family == RIESZ:
            return s ** (0.5 * (spec.alpha - spec.dim))
        return -0.5 * np.log(s)


def eval_kernel(spec: KernelSpec, x, y) -> float:
    """Kernel value at one pair of points (``inf`` on the diagonal when unsmoothed)."""
    x = _check_points(spec, x)[0]
    y = _check_points(spec, y)[0]
    diff = x - y
    return float(_from_sq_dist(spec, np.dot(diff, diff)))


def kernel_block(spec: KernelSpec, X, Y) -> np.ndarray:
    """Dense matrix ``kappa(X[k], Y[l])``."""
    X = _check_points(spec, X)
    Y = _check_points(spec, Y)
    return _from_sq_dist(spec, cdist(X, Y, "sqeuclidean"))


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric kernel matrix over a fixed global point ordering."""

    entries: np.ndarray
    spec: KernelSpec
    pd_certified: bool
    min_pivot: float

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __matmul__(self, v):
        return self.entries @ v


def pd_certificate(K: np.ndarray) -> tuple[bool, float]:
    """Attempt a Cholesky factorization; return (certified, smallest pivot).

    Pivots are the squared diagonal of the Cholesky factor.  When Cholesky
    breaks down the smallest LDL^T pivot is reported instead.
    """
    floor = PIVOT_FLOOR * float(np.max(np.abs(np.diag(K))))
    try:
        L = np.linalg.cholesky(K)
        pivots = np.diag(L) ** 2
    except np.linalg.LinAlgError:
        _, D, _ = scipy.linalg.ldl(K)
        pivots = np.linalg.eigvalsh(D)  # D may carry 2x2 blocks
    min_pivot = float(np.min(pivots))
    return bool(min_pivot > floor), min_pivot


def assemble_matrix(spec: KernelSpec, points, certify: bool = True) -> KernelMatrix:
    pts = _check_points(spec, points)
    # every point coincides with itself, so eps = 0 always puts +inf on the diagonal
    if spec.epsilon == 0.0:
        raise KernelError("epsilon = 0 gives an infinite diagonal; assemble with epsilon > 0")
    K = kernel_block(spec, pts, pts)
    K = np.triu(K) + np.triu(K, 1).T
    K.setflags(write=False)
    if certify:
        ok, piv = pd_certificate(K)
    else:
        ok, piv = False, float("nan")
    return KernelMatrix(K, spec, ok, piv)


def shell_potential_oracle(dim: int, shell_radius: float, x) -> float:
    """Newtonian potential at ``x`` of unit mass spread uniformly on a centred sphere."""
    if dim < 3:
        raise KernelError("shell theorem oracle needs dim >= 3")
    if shell_radius <= 0:
        raise KernelError("shell radius must be positive")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise KernelError(f"point has dimension {x.shape[-1]}, expected {dim}")
    r = float(np.linalg.norm(x))
    return max(r, shell_radius) ** (2 - dim)
