"""Discrete measures carried by a condenser: one nonnegative weight vector per plate."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .condenser import DiscreteCondenser
from .kernels import KernelMatrix, KernelSpec, kernel_block


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class CondenserMeasure:
    weights: tuple

    def __init__(self, weights: Sequence):
        ws = tuple(np.array(w, dtype=float).reshape(-1) for w in weights)
        for w in ws:
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise MeasureError("plate weights must be finite and nonnegative")
            w.setflags(write=False)
        object.__setattr__(self, "weights", ws)

    @classmethod
    def zeros(cls, c: DiscreteCondenser) -> "CondenserMeasure":
        return cls([np.zeros(p.n) for p in c.plates])

    @classmethod
    def uniform(cls, c: DiscreteCondenser, masses=None) -> "CondenserMeasure":
        """Equal weights per plate, scaled so the g-weighted mass is ``masses`` (default a_i)."""
        masses = c.masses if masses is None else np.asarray(masses, dtype=float)
        return cls([np.full(p.n, m / p.g_values.sum()) for p, m in zip(c.plates, masses)])

    @classmethod
    def random(cls, c: DiscreteCondenser, seed: int = 0, masses=None) -> "CondenserMeasure":
        """Dirichlet-random feasible measure at plate masses ``masses`` (default a_i)."""
        rng = np.random.default_rng(seed)
        masses = c.masses if masses is None else np.asarray(masses, dtype=float)
        ws = []
        for p, m in zip(c.plates, masses):
            u = rng.dirichlet(np.ones(p.n)) * m
            ws.append(u / p.g_values)
        return cls(ws)

    @classmethod
    def from_flat(cls, c: DiscreteCondenser, w: np.ndarray) -> "CondenserMeasure":
        return cls([w[s] for s in c.slices])

    def scaled(self, factor: float) -> "CondenserMeasure":
        return CondenserMeasure([factor * w for w in self.weights])

    def concat(self) -> np.ndarray:
        return np.concatenate(self.weights)

    def to_json(self, c: DiscreteCondenser) -> str:
        return json.dumps({"fingerprint": c.fingerprint(), "weights": [w.tolist() for w in self.weights]})

    @classmethod
    def from_json(cls, text: str, c: DiscreteCondenser) -> "CondenserMeasure":
        d = json.loads(text)
        if d.get("fingerprint") != c.fingerprint():
            raise MeasureError("measure was saved for a different discretization")
        m = cls(d["weights"])
        _check_shape(c, m)
        return m


def _check_shape(c: DiscreteCondenser, m: CondenserMeasure):
    if len(m.weights) != c.n_plates or any(len(w) != p.n for w, p in zip(m.weights, c.plates)):
        raise MeasureError("measure shape does not match the condenser's plates")


def flatten(c: DiscreteCondenser, m: CondenserMeasure) -> np.ndarray:
    """Signed global vector: plate weights times plate sign, in global point order."""
    _check_shape(c, m)
    return np.concatenate([p.sign * w for p, w in zip(c.plates, m.weights)])


def _check_matrix(c: DiscreteCondenser, K: KernelMatrix):
    if K.n != len(c.points):
        raise MeasureError("kernel matrix was not assembled over this condenser's points")


def potentials(c: DiscreteCondenser, K: KernelMatrix, m: CondenserMeasure) -> np.ndarray:
    """Signed potential at every carrier point, read off the assembled matrix."""
    _check_matrix(c, K)
    return K.entries @ flatten(c, m)


def potential_at(c: DiscreteCondenser, K, m: CondenserMeasure, x) -> float:
    """Potential of the signed measure at a carrier index (int) or a free point.

    ``K`` may be a :class:`KernelMatrix` (needed for an index) or a
    :class:`KernelSpec` (free points only).
    """
    v = flatten(c, m)
    if isinstance(x, (int, np.integer)):
        if not isinstance(K, KernelMatrix):
            raise MeasureError("a carrier index needs the assembled kernel matrix")
        _check_matrix(c, K)
        return float(K.entries[int(x)] @ v)
    spec = K.spec if isinstance(K, KernelMatrix) else K
    row = kernel_block(spec, np.atleast_2d(x), c.points)[0]
    hit = np.isinf(row) & (v != 0)
    if np.any(hit):
        if np.all(v[hit] > 0):
            return float("inf")
        raise MeasureError("probe point sits on carrier points of mixed sign with an unsmoothed kernel")
    return float(row @ v)


def _block_products(c: DiscreteCondenser, K: KernelMatrix, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """B[i, j] = v1_i^T K_ij v2_j, summed in fixed block order."""
    _check_matrix(c, K)
    n = c.n_plates
    B = np.empty((n, n))
    for i, si in enumerate(c.slices):
        for j, sj in enumerate(c.slices):
            B[i, j] = v1[si] @ (K.entries[si, sj] @ v2[sj])
    return B


def _sum_blocks(B: np.ndarray) -> float:
    total = 0.0
    for val in B.ravel():
        total += val
    return float(total)


def mutual_energy(c: DiscreteCondenser, K: KernelMatrix, m1: CondenserMeasure, m2: CondenserMeasure) -> float:
    return _sum_blocks(_block_products(c, K, flatten(c, m1), flatten(c, m2)))


def energy(c: DiscreteCondenser, K: KernelMatrix, m: CondenserMeasure) -> float:
    """Signed energy ``v^T K v``, summed block-by-block in plate order."""
    v = flatten(c, m)
    return _sum_blocks(_block_products(c, K, v, v))


def plate_interactions(c: DiscreteCondenser, K: KernelMatrix, m: CondenserMeasure, other: CondenserMeasure | None = None) -> np.ndarray:
    """Unsigned per-plate pairing ``kappa(m^i, R other)`` for every plate i.

    With ``other = m`` this is the vector of ``kappa(lambda^i, lambda)``;
    summing it against the plate signs gives the energy.
    """
    other = m if other is None else other
    pot = potentials(c, K, other)
    return np.array([w @ pot[s] for w, s in zip(m.weights, c.slices)])


def plate_mass(c: DiscreteCondenser, m: CondenserMeasure, i: int) -> float:
    """g-weighted mass of plate ``i`` (0-based)."""
    if not 0 <= i < c.n_plates:
        raise IndexError(f"plate index {i} out of range")
    _check_shape(c, m)
    return float(m.weights[i] @ c.plates[i].g_values)


def plate_masses(c: DiscreteCondenser, m: CondenserMeasure) -> np.ndarray:
    return np.array([plate_mass(c, m, i) for i in range(c.n_plates)])


def energy_distance(K: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> float:
    """Energy seminorm ``||v1 - v2||`` of two signed vectors on one point set."""
    e = v1 - v2
    return float(np.sqrt(max(e @ (K @ e), 0.0)))
