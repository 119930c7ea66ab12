"""Signed plate families and their deterministic discretizations.

A condenser is a list of plates, each with a sign (+1 or -1), a target mass
``a_i`` and a point cloud.  Plates of equal sign may overlap; plates of
opposite sign must be a positive distance apart.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .kernels import KernelSpec, kernel_block

log = logging.getLogger(__name__)


class CondenserError(ValueError):
    pass


# --------------------------------------------------------------------------
# shapes and weight functions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SphereShell:
    center: tuple
    radius: float


@dataclass(frozen=True)
class BallVolume:
    """Solid ball.  ``point_count`` goes on the boundary sphere; ``interior_points``
    extra points fill the inside (default: a quarter of the boundary count)."""

    center: tuple
    radius: float
    interior_points: int | None = None


@dataclass(frozen=True)
class Segment:
    endpoint_a: tuple
    endpoint_b: tuple


@dataclass(frozen=True)
class ExplicitPoints:
    points: tuple


def shape_from_dict(d: Mapping[str, Any]):
    kind = d.get("type")
    if kind == "sphere_shell":
        return SphereShell(tuple(map(float, d["center"])), float(d["radius"]))
    if kind == "ball_volume":
        return BallVolume(tuple(map(float, d["center"])), float(d["radius"]), d.get("interior_points"))
    if kind == "segment":
        return Segment(tuple(map(float, d["a"])), tuple(map(float, d["b"])))
    if kind == "explicit_points":
        return ExplicitPoints(tuple(tuple(map(float, p)) for p in d["points"]))
    raise CondenserError(f"unknown shape type {kind!r}")


def shape_to_dict(shape) -> dict:
    if isinstance(shape, SphereShell):
        return {"type": "sphere_shell", "center": list(shape.center), "radius": shape.radius}
    if isinstance(shape, BallVolume):
        out = {"type": "ball_volume", "center": list(shape.center), "radius": shape.radius}
        if shape.interior_points is not None:
            out["interior_points"] = shape.interior_points
        return out
    if isinstance(shape, Segment):
        return {"type": "segment", "a": list(shape.endpoint_a), "b": list(shape.endpoint_b)}
    return {"type": "explicit_points", "points": [list(p) for p in shape.points]}


@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    def __post_init__(self):
        if not self.value > 0:
            raise CondenserError("constant weight function must be positive")

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return np.full(len(pts), float(self.value))

    def to_dict(self):
        return {"type": "constant", "value": self.value}


@dataclass(frozen=True)
class RadialPolynomial:
    """``g(x) = sum_j c_j |x|^j`` about the origin."""

    coefficients: tuple

    def __post_init__(self):
        if len(self.coefficients) == 0 or not self.coefficients[0] > 0:
            raise CondenserError("radial polynomial needs a positive constant term")

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(pts, axis=1)
        return np.polynomial.polynomial.polyval(r, np.asarray(self.coefficients, dtype=float))

    def to_dict(self):
        return {"type": "radial_polynomial", "coefficients": list(self.coefficients)}


def weight_function_from_dict(d: Mapping[str, Any] | None):
    if d is None:
        return Constant(1.0)
    if d.get("type") == "constant":
        return Constant(float(d.get("value", 1.0)))
    if d.get("type") == "radial_polynomial":
        return RadialPolynomial(tuple(map(float, d["coefficients"])))
    raise CondenserError(f"unknown weight function {d.get('type')!r}")


@dataclass(frozen=True)
class PlateSpec:
    id: int
    sign: int
    shape: Any
    point_count: int
    mass_target: float = 1.0

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise CondenserError(f"plate {self.id}: sign must be +1 or -1")
        if self.point_count < 1:
            raise CondenserError(f"plate {self.id}: point_count must be >= 1")
        if not self.mass_target > 0:
            raise CondenserError(f"plate {self.id}: mass target must be positive")
        if isinstance(self.shape, (SphereShell, BallVolume)) and not self.shape.radius > 0:
            raise CondenserError(f"plate {self.id}: radius must be positive")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PlateSpec":
        return cls(int(d["id"]), int(d["sign"]), shape_from_dict(d["shape"]), int(d["points"]), float(d.get("a", 1.0)))

    def to_dict(self) -> dict:
        return {"id": self.id, "sign": self.sign, "shape": shape_to_dict(self.shape),
                "points": self.point_count, "a": self.mass_target}


# --------------------------------------------------------------------------
# point generators
# --------------------------------------------------------------------------


def fibonacci_sphere(n: int, dim: int = 3) -> np.ndarray:
    """Quasi-uniform points on the unit sphere of R^dim.

    dim 3 uses the golden-angle spiral with both poles included; dim 2 uses
    equispaced angles; higher dimensions use normalized Sobol-normal directions.
    """
    if n == 1:
        p = np.zeros((1, dim))
        p[0, -1] = 1.0
        return p
    if dim == 2:
        t = 2 * np.pi * np.arange(n) / n
        return np.c_[np.cos(t), np.sin(t)]
    if dim == 3:
        i = np.arange(n)
        y = 1.0 - 2.0 * i / (n - 1)
        r = np.sqrt(np.clip(1.0 - y * y, 0.0, None))
        theta = np.pi * (3.0 - np.sqrt(5.0)) * i
        return np.c_[r * np.cos(theta), y, r * np.sin(theta)]
    from scipy.special import ndtri

    u = qmc.Sobol(dim, scramble=True, seed=0).random_base2(int(np.ceil(np.log2(n))))[:n]
    z = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def farthest_point_order(points: np.ndarray) -> np.ndarray:
    """Greedy farthest-point ordering starting at index 0; ties go to the lowest index."""
    n = len(points)
    order = np.empty(n, dtype=int)
    order[0] = 0
    d = np.linalg.norm(points - points[0], axis=1)
    d[0] = -1.0
    for k in range(1, n):
        j = int(np.argmax(d))
        order[k] = j
        d = np.minimum(d, np.linalg.norm(points - points[j], axis=1))
        d[order[: k + 1]] = -1.0
    return order


def min_nn_distance(points: np.ndarray) -> float:
    if len(points) < 2:
        return float("inf")
    d, _ = cKDTree(points).query(points, 2)
    return float(d[:, 1].min())


def _shell_count(n: int, frac: float, dim: int) -> int:
    return max(1, int(round(n * frac ** (dim - 1))))


def ball_points(shape: BallVolume, n_shell: int, seed: int, fractions: Sequence[float] = (1.0,)) -> np.ndarray:
    """Boundary shells at ``fractions`` of the radius plus spaced interior fill.

    Shell counts scale with area so all shells share one spacing.  Interior
    points come from a scrambled Halton sequence, kept only when at least one
    shell spacing away from every accepted point.
    """
    c = np.asarray(shape.center, dtype=float)
    dim = len(c)
    R = shape.radius
    n_int = n_shell // 4 if shape.interior_points is None else int(shape.interior_points)
    shells = [c + f * R * fibonacci_sphere(_shell_count(n_shell, f, dim), dim) for f in sorted(fractions, reverse=True)]
    pts = np.vstack(shells)
    h = min_nn_distance(shells[0])
    if not np.isfinite(h):
        h = R
    if n_int <= 0:
        return pts
    sampler = qmc.Halton(dim, scramble=True, seed=seed)
    accepted = list(pts)
    tree_pts = pts
    kept = 0
    for _ in range(50):
        cand = 2.0 * sampler.random(max(64, 4 * n_int)) - 1.0
        cand = cand[np.einsum("ij,ij->i", cand, cand) < 1.0] * R + c
        for p in cand:
            if np.min(np.linalg.norm(tree_pts - p, axis=1)) >= h:
                accepted.append(p)
                tree_pts = np.vstack([tree_pts, p])
                kept += 1
                if kept == n_int:
                    return np.asarray(accepted)
    log.debug("ball interior: kept %d of %d requested points", kept, n_int)
    return np.asarray(accepted)


def plate_points(spec: PlateSpec, seed: int = 0) -> np.ndarray:
    s = spec.shape
    if isinstance(s, SphereShell):
        c = np.asarray(s.center, dtype=float)
        return c + s.radius * fibonacci_sphere(spec.point_count, len(c))
    if isinstance(s, BallVolume):
        return ball_points(s, spec.point_count, seed + spec.id)
    if isinstance(s, Segment):
        a = np.asarray(s.endpoint_a, dtype=float)
        b = np.asarray(s.endpoint_b, dtype=float)
        t = np.linspace(0.0, 1.0, spec.point_count) if spec.point_count > 1 else np.array([0.5])
        return a + t[:, None] * (b - a)
    if isinstance(s, ExplicitPoints):
        return np.atleast_2d(np.asarray(s.points, dtype=float))
    raise CondenserError(f"unsupported shape {type(s).__name__}")


# --------------------------------------------------------------------------
# discrete condenser
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscretePlate:
    id: int
    sign: int
    points: np.ndarray
    g_values: np.ndarray
    mass: float

    @property
    def n(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class DiscreteCondenser:
    plates: tuple
    weight_function: Any = field(default_factory=Constant)
    separation: float = float("inf")
    kernel_sup_bound: float | None = None

    @property
    def n_plates(self) -> int:
        return len(self.plates)

    @cached_property
    def points(self) -> np.ndarray:
        return np.vstack([p.points for p in self.plates])

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @cached_property
    def slices(self) -> list:
        out, start = [], 0
        for p in self.plates:
            out.append(slice(start, start + p.n))
            start += p.n
        return out

    @cached_property
    def point_signs(self) -> np.ndarray:
        return np.concatenate([np.full(p.n, float(p.sign)) for p in self.plates])

    @cached_property
    def g(self) -> np.ndarray:
        return np.concatenate([p.g_values for p in self.plates])

    @property
    def signs(self) -> np.ndarray:
        return np.array([p.sign for p in self.plates], dtype=float)

    @property
    def masses(self) -> np.ndarray:
        return np.array([p.mass for p in self.plates], dtype=float)

    @property
    def total_mass(self) -> float:
        """|a|, the sum of the mass targets."""
        return float(self.masses.sum())

    @property
    def has_negative(self) -> bool:
        return any(p.sign < 0 for p in self.plates)

    @property
    def has_positive(self) -> bool:
        return any(p.sign > 0 for p in self.plates)

    @property
    def g_inf(self) -> float:
        return float(self.g.min())

    @property
    def g_sup(self) -> float:
        return float(self.g.max())

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for p in self.plates:
            h.update(np.int64([p.id, p.sign, p.n]).tobytes())
            h.update(np.ascontiguousarray(p.points, dtype=float).tobytes())
        return h.hexdigest()[:16]

    def default_epsilon(self) -> float:
        """Half the smallest within-plate nearest-neighbour distance."""
        h = min((min_nn_distance(p.points) for p in self.plates), default=float("inf"))
        if not np.isfinite(h):
            h = min_nn_distance(self.points)
        if not np.isfinite(h) or h == 0.0:
            h = 1.0
        return 0.5 * h

    def with_masses(self, masses) -> "DiscreteCondenser":
        masses = np.asarray(masses, dtype=float)
        if masses.shape != (self.n_plates,) or np.any(masses <= 0):
            raise CondenserError("need one positive mass per plate")
        plates = tuple(replace(p, mass=float(m)) for p, m in zip(self.plates, masses))
        return replace(self, plates=plates)

    def equal_sign_min_gap(self) -> float:
        """Smallest distance between distinct plates of equal sign (diagnostic only)."""
        best = float("inf")
        for i, p in enumerate(self.plates):
            for q in self.plates[i + 1:]:
                if p.sign == q.sign:
                    d, _ = cKDTree(q.points).query(p.points)
                    best = min(best, float(d.min()))
        return best

    def shared_point_count(self) -> int:
        seen: dict = {}
        shared = 0
        for p in self.plates:
            for row in np.unique(p.points, axis=0):
                key = row.tobytes()
                if key in seen:
                    shared += 1
                seen[key] = True
        return shared


def _opposite_sign_stats(plates: Sequence[DiscretePlate], kernel: KernelSpec | None):
    pos = [p.points for p in plates if p.sign > 0]
    neg = [p.points for p in plates if p.sign < 0]
    if not pos or not neg:
        return float("inf"), (0.0 if kernel is not None else None)
    P, M = np.vstack(pos), np.vstack(neg)
    d, _ = cKDTree(P).query(M)
    sep = float(d.min())
    sup = None
    if kernel is not None:
        sup = 0.0
        for start in range(0, len(P), 2048):
            blk = kernel_block(kernel, P[start:start + 2048], M)
            sup = max(sup, float(np.max(np.abs(blk))))
    return sep, sup


def build_condenser(plates: Sequence[DiscretePlate], weight_function=None, kernel: KernelSpec | None = None) -> DiscreteCondenser:
    if not plates:
        raise CondenserError("a condenser needs at least one plate")
    wf = weight_function or Constant(1.0)
    sep, sup = _opposite_sign_stats(plates, kernel)
    return DiscreteCondenser(tuple(plates), wf, sep, sup)


def _make_plate(spec: PlateSpec, pts: np.ndarray, wf, kernel: KernelSpec | None) -> DiscretePlate:
    if len(pts) == 0:
        raise CondenserError(f"plate {spec.id} is empty after discretization")
    if (kernel is None or kernel.epsilon == 0.0) and len(np.unique(pts, axis=0)) < len(pts):
        raise CondenserError(f"plate {spec.id} has duplicate points and the kernel is unsmoothed")
    g = np.asarray(wf(pts), dtype=float)
    if not np.all(np.isfinite(g)) or np.any(g <= 0):
        raise CondenserError(f"weight function is not positive on plate {spec.id}")
    pts = np.array(pts, dtype=float)
    pts.setflags(write=False)
    g.setflags(write=False)
    return DiscretePlate(spec.id, spec.sign, pts, g, spec.mass_target)


def discretize(specs: Sequence[PlateSpec], weight_function=None, seed: int = 0,
               kernel: KernelSpec | None = None) -> DiscreteCondenser:
    """Sample every plate, evaluate g, and measure opposite-sign separation.

    ``kernel`` is only used for the duplicate-point rule and ``kernel_sup_bound``.
    """
    if not specs:
        raise CondenserError("empty plate list")
    ids = [s.id for s in specs]
    if len(set(ids)) != len(ids):
        raise CondenserError("plate ids must be unique")
    wf = weight_function or Constant(1.0)
    plates = [_make_plate(s, plate_points(s, seed), wf, kernel) for s in specs]
    return build_condenser(plates, wf, kernel)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    skipped: bool = False


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "checks": [{"name": c.name, "passed": c.passed, "skipped": c.skipped, "detail": c.detail}
                           for c in self.checks]}

    def __str__(self):
        lines = []
        for c in self.checks:
            tag = "SKIP" if c.skipped else ("PASS" if c.passed else "FAIL")
            lines.append(f"[{tag}] {c.name}: {c.detail}")
        return "\n".join(lines)


def validate(c: DiscreteCondenser, require_signed_assumptions: bool = True,
             kernel: KernelSpec | None = None) -> ValidationReport:
    checks = []
    empty = [p.id for p in c.plates if p.n == 0]
    checks.append(Check("plates_nonempty", not empty, f"empty plates: {empty}" if empty else "all plates nonempty"))

    signed = c.has_positive and c.has_negative
    if signed:
        checks.append(Check("opposite_sign_separation", c.separation > 0,
                            f"min distance between opposite-sign plates = {c.separation:.6g}"
                            + ("" if c.separation > 0 else " (opposite-sign plates must have disjoint closures)")))
    else:
        checks.append(Check("opposite_sign_separation", True, "only one sign present", skipped=True))

    if signed and require_signed_assumptions:
        checks.append(Check("g_inf_positive", c.g_inf > 0, f"g_inf = {c.g_inf:.6g}"))
    else:
        checks.append(Check("g_inf_positive", True, "no negative plates or not required", skipped=True))

    sup = c.kernel_sup_bound
    if sup is None and kernel is not None and signed:
        _, sup = _opposite_sign_stats(c.plates, kernel)
    if not signed:
        checks.append(Check("kernel_sup_bound_finite", True, "only one sign present", skipped=True))
    elif sup is None:
        checks.append(Check("kernel_sup_bound_finite", True, "no kernel supplied", skipped=True))
    else:
        checks.append(Check("kernel_sup_bound_finite", bool(np.isfinite(sup)), f"sup |kappa| over opposite pairs = {sup:.6g}"))
    return ValidationReport(checks)


# --------------------------------------------------------------------------
# exhaustion and truncated families
# --------------------------------------------------------------------------


def _strictly_increasing(levels) -> bool:
    return all(b > a for a, b in zip(levels, levels[1:]))


def exhaustion_sequence(specs: Sequence[PlateSpec], weight_function=None, levels: Sequence[float] = (),
                        mode: str = "points", seed: int = 0, kernel: KernelSpec | None = None) -> list:
    """Nested condensers growing toward the full plates.

    ``mode="points"``: each level is a per-plate point count; points are
    generated once at the largest count and taken as prefixes of a
    farthest-point ordering.  ``mode="radius"``: each level is a fraction of
    the radius of every ball plate (other plates stay fixed).
    """
    levels = list(levels)
    if not levels or not _strictly_increasing(levels):
        raise CondenserError("levels must be a nonempty strictly increasing list")
    wf = weight_function or Constant(1.0)
    seq = []
    if mode == "points":
        if levels[0] < 1:
            raise CondenserError("point-count levels must be >= 1")
        full = {}
        for s in specs:
            if isinstance(s.shape, ExplicitPoints):
                full[s.id] = plate_points(s, seed)
            else:
                pts = plate_points(replace(s, point_count=int(levels[-1])), seed)
                full[s.id] = pts[farthest_point_order(pts)]
        for n in levels:
            plates = [_make_plate(s, full[s.id][: int(n)], wf, kernel) for s in specs]
            seq.append(build_condenser(plates, wf, kernel))
    elif mode == "radius":
        if levels[0] <= 0 or levels[-1] > 1:
            raise CondenserError("radius fractions must lie in (0, 1]")
        full = {}
        for s in specs:
            if isinstance(s.shape, BallVolume):
                full[s.id] = ball_points(s.shape, s.point_count, seed + s.id, fractions=levels)
            else:
                full[s.id] = plate_points(s, seed)
        for f in levels:
            plates = []
            for s in specs:
                pts = full[s.id]
                if isinstance(s.shape, BallVolume):
                    c = np.asarray(s.shape.center, dtype=float)
                    keep = np.linalg.norm(pts - c, axis=1) <= f * s.shape.radius * (1 + 1e-9)
                    pts = pts[keep]
                plates.append(_make_plate(s, pts, wf, kernel))
            seq.append(build_condenser(plates, wf, kernel))
    else:
        raise CondenserError(f"unknown exhaustion mode {mode!r}")
    if not is_nested(seq):
        raise CondenserError("generated levels are not nested")
    return seq


def is_nested(seq: Sequence[DiscreteCondenser]) -> bool:
    """Plate-wise point-set inclusion between consecutive levels."""
    for a, b in zip(seq, seq[1:]):
        if a.n_plates != b.n_plates:
            return False
        for pa, pb in zip(a.plates, b.plates):
            if pa.id != pb.id or pa.sign != pb.sign:
                return False
            if pa.n <= pb.n and np.array_equal(pa.points, pb.points[: pa.n]):
                continue
            rows = {r.tobytes() for r in np.ascontiguousarray(pb.points)}
            if not all(r.tobytes() in rows for r in np.ascontiguousarray(pa.points)):
                return False
    return True


def shell_row_family(spacing: float = 4.0, radius: float = 1.0, points: int = 100,
                     mass_rule: Callable[[int], float] = lambda k: 1.0, sign: int = 1,
                     axis: int = 0, dim: int = 3) -> Callable[[int], PlateSpec]:
    """Plate k (k = 1, 2, ...) is the sphere of ``radius`` centred at ``spacing * k`` along ``axis``."""

    def gen(k: int) -> PlateSpec:
        c = [0.0] * dim
        c[axis] = spacing * k
        return PlateSpec(k, sign, SphereShell(tuple(c), radius), points, float(mass_rule(k)))

    return gen


def truncate_family(family: Callable[[int], PlateSpec], N: int, weight_function=None, seed: int = 0,
                    kernel: KernelSpec | None = None) -> DiscreteCondenser:
    """Condenser made of plates 1..N of an infinite plate generator."""
    if N < 1:
        raise CondenserError("N must be >= 1")
    c = discretize([family(k) for k in range(1, N + 1)], weight_function, seed, kernel)
    if c.has_positive and c.has_negative and not c.separation > 0:
        raise CondenserError(f"family overlaps an opposite-sign plate within the first {N} plates")
    return c
