"""Minimum-energy problem over a product of scaled simplices.

Variables are ``u_k = w_k g(x_k)`` so every plate constraint reads
``u >= 0, sum(u) = a_i``.  The energy is ``u^T Q u`` with
``Q = D K D`` and ``D = diag(sign / g)``.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .condenser import DiscreteCondenser
from .kernels import KernelMatrix
from .measures import CondenserMeasure

log = logging.getLogger(__name__)

FIXED = "fixed"
ARMIJO = "armijo"


class SolverError(RuntimeError):
    pass


@dataclass
class SolveOptions:
    max_iterations: int = 50_000
    gap_tolerance: float = 1e-8
    step_rule: str = ARMIJO
    armijo_shrink: float = 0.5
    armijo_c: float = 1e-4
    warm_start: CondenserMeasure | None = None
    keep_trace: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise SolverError("max_iterations must be >= 1")
        if not self.gap_tolerance > 0:
            raise SolverError("gap_tolerance must be positive")
        if self.step_rule not in (FIXED, ARMIJO):
            raise SolverError(f"unknown step rule {self.step_rule!r}")
        if not 0 < self.armijo_shrink < 1 or not 0 < self.armijo_c < 1:
            raise SolverError("Armijo parameters must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d) -> "SolveOptions":
        d = dict(d or {})
        return cls(max_iterations=int(d.get("max_iterations", 50_000)),
                   gap_tolerance=float(d.get("gap_tolerance", 1e-8)),
                   step_rule=d.get("step_rule", ARMIJO),
                   armijo_shrink=float(d.get("armijo_shrink", 0.5)),
                   armijo_c=float(d.get("armijo_c", 1e-4)))

    def to_dict(self) -> dict:
        return {"max_iterations": self.max_iterations, "gap_tolerance": self.gap_tolerance,
                "step_rule": self.step_rule, "armijo_shrink": self.armijo_shrink, "armijo_c": self.armijo_c}


@dataclass
class SolveResult:
    minimizer: CondenserMeasure
    minimal_energy: float
    relative_gap: float
    iterations_used: int
    converged: bool
    per_plate_interaction: np.ndarray
    gradient: np.ndarray
    trace: list = field(default_factory=list)


def project_scaled_simplex(u, target: float) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = target}`` (sort and threshold)."""
    u = np.asarray(u, dtype=float)
    if not target > 0:
        raise SolverError("simplex target must be positive")
    if not np.all(np.isfinite(u)):
        raise SolverError("cannot project a non-finite vector")
    s = -np.sort(-u, kind="stable")
    css = np.cumsum(s) - target
    k = np.arange(1, len(u) + 1)
    rho = np.count_nonzero(s - css / k > 0)
    tau = css[rho - 1] / rho
    return np.maximum(u - tau, 0.0)


def support_thresholds(c: DiscreteCondenser) -> np.ndarray:
    """Per-point weight above which a point counts as carrying mass."""
    return np.concatenate([1e-8 * p.mass / p.n / p.g_values for p in c.plates])


def _frank_wolfe_gap(grad: np.ndarray, u: np.ndarray, c: DiscreteCondenser) -> float:
    gap = 0.0
    for s, a in zip(c.slices, c.masses):
        gap += grad[s] @ u[s] - a * grad[s].min()
    return float(gap)


def solve_min_energy(c: DiscreteCondenser, K: KernelMatrix, opts: SolveOptions | None = None) -> SolveResult:
    """Projected gradient on the product of simplices with a Frank-Wolfe gap certificate.

    ``armijo`` steps start from a Barzilai-Borwein trial length and backtrack
    until sufficient decrease holds, so the energy trace is nonincreasing.
    ``fixed`` uses 1/L with L = 2 max-row-sum(|K|) / g_min^2.
    """
    opts = opts or SolveOptions()
    if any(p.n == 0 for p in c.plates):
        raise SolverError("empty plate: feasible set is empty (capacity-zero degenerate case)")
    if K.n != len(c.points):
        raise SolverError("kernel matrix does not match the condenser")
    if not K.pd_certified:
        raise SolverError(f"kernel matrix failed the positive-definiteness certificate (min pivot {K.min_pivot:.3g})")

    scale = c.point_signs / c.g
    Q = K.entries * np.outer(scale, scale)
    slices, masses = c.slices, c.masses

    def project(v):
        return np.concatenate([project_scaled_simplex(v[s], a) for s, a in zip(slices, masses)])

    if opts.warm_start is not None:
        u = project(opts.warm_start.concat() * c.g)
    else:
        u = np.concatenate([np.full(p.n, p.mass / p.n) for p in c.plates])

    L = 2.0 * float(np.abs(K.entries).sum(axis=1).max()) / c.g_inf ** 2
    t = 1.0 / L
    Qu = Q @ u
    f = float(u @ Qu)
    trace = []
    converged = False
    it = 0
    grad = 2.0 * Qu
    gap = _frank_wolfe_gap(grad, u, c)
    for it in range(1, opts.max_iterations + 1):
        if opts.keep_trace:
            trace.append((f, gap))
        if gap <= opts.gap_tolerance * f:
            converged = True
            it -= 1
            break
        # Shift each plate's gradient by its u-weighted mean (the support level).
        # The projection ignores the shift, and roundoff drift in sum(d) then
        # multiplies a near-zero value instead of the full potential.
        gc = grad.copy()
        for sl, a in zip(slices, masses):
            gc[sl] -= (grad[sl] @ u[sl]) / a
        if opts.step_rule == FIXED:
            d = project(u - gc / L) - u
            Qd = Q @ d
            dec = float(d @ (gc + Qd))
        else:
            accepted = False
            for _ in range(60):
                d = project(u - t * gc) - u
                Qd = Q @ d
                gd = float(gc @ d)
                dec = float(d @ (gc + Qd))
                if gd >= 0:
                    break
                if dec <= opts.armijo_c * gd:
                    accepted = True
                    break
                t *= opts.armijo_shrink
            if not accepted:
                log.debug("no descent direction at iteration %d (roundoff floor); stopping", it)
                break
            sy = 2.0 * float(d @ Qd)
            ss = float(d @ d)
            t = ss / sy if sy > 0 and ss > 0 else t
        if not np.any(d):
            break
        u = u + d
        Qu = Qu + Qd
        f = f + dec
        grad = 2.0 * Qu
        gap = _frank_wolfe_gap(grad, u, c)
    else:
        it = opts.max_iterations

    Qu = Q @ u
    f = float(u @ Qu)
    grad = 2.0 * Qu
    gap = _frank_wolfe_gap(grad, u, c)
    rel_gap = gap / f if f > 0 else float("inf")
    converged = converged or rel_gap <= opts.gap_tolerance
    if not converged:
        log.warning("solver stopped after %d iterations with relative gap %.3g", it, rel_gap)

    lam = CondenserMeasure.from_flat(c, u / c.g)
    pot = K.entries @ (c.point_signs * (u / c.g))
    eta = np.array([lam.weights[i] @ pot[s] for i, s in enumerate(slices)])
    return SolveResult(lam, f, rel_gap, it, converged, eta, grad, trace)


# --------------------------------------------------------------------------
# brute-force oracle
# --------------------------------------------------------------------------

MAX_ORACLE_POINTS = 6


@dataclass
class OracleResult:
    energy: float
    grid_energy: float
    weights: np.ndarray


def _simplex_lattice(n: int, R: int) -> np.ndarray:
    """All compositions of R into n nonnegative parts, as rows summing to 1."""
    if n == 1:
        return np.ones((1, 1))
    bars = np.array(list(itertools.combinations(range(R + n - 1), n - 1)))
    ext = np.c_[-np.ones(len(bars), dtype=int), bars, np.full(len(bars), R + n - 1)]
    return (np.diff(ext, axis=1) - 1) / R


def _grid_search(Q: np.ndarray, c: DiscreteCondenser, R: int):
    lattices = [_simplex_lattice(p.n, R) * p.mass for p in c.plates]
    # vectorize over the largest per-plate lattice, loop over the product of the rest
    big = int(np.argmax([len(L) for L in lattices]))
    tail_idx = np.arange(c.slices[big].start, c.slices[big].stop)
    rest = [i for i in range(c.n_plates) if i != big]
    Qtt = Q[np.ix_(tail_idx, tail_idx)]
    T = lattices[big]
    tQt = np.einsum("ij,jk,ik->i", T, Qtt, T)
    best, best_u = np.inf, None
    for combo in itertools.product(*(range(len(lattices[i])) for i in rest)):
        h = np.zeros(len(Q))
        for i, j in zip(rest, combo):
            h[c.slices[i]] = lattices[i][j]
        e = h @ Q @ h + 2.0 * T @ (Q[tail_idx] @ h) + tQt
        k = int(np.argmin(e))
        if e[k] < best:
            best = float(e[k])
            best_u = h.copy()
            best_u[tail_idx] = T[k]
    return best, best_u


def _support_enumeration(Q: np.ndarray, c: DiscreteCondenser):
    """Exact minimum: solve the equality-constrained KKT system on every support pattern."""
    best, best_u = np.inf, None
    choices = [[s for r in range(1, p.n + 1) for s in itertools.combinations(range(sl.start, sl.stop), r)]
               for p, sl in zip(c.plates, c.slices)]
    m = c.n_plates
    for pattern in itertools.product(*choices):
        idx = np.concatenate([np.array(s) for s in pattern])
        k = len(idx)
        A = np.zeros((m, k))
        pos = 0
        for i, s in enumerate(pattern):
            A[i, pos:pos + len(s)] = 1.0
            pos += len(s)
        M = np.block([[2.0 * Q[np.ix_(idx, idx)], A.T], [A, np.zeros((m, m))]])
        rhs = np.r_[np.zeros(k), c.masses]
        try:
            sol = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            continue
        x = sol[:k]
        if np.any(x < -1e-14):
            continue
        u = np.zeros(len(Q))
        u[idx] = np.maximum(x, 0.0)
        # restore exact feasibility after clipping
        for sl, a in zip(c.slices, c.masses):
            u[sl] *= a / u[sl].sum()
        e = float(u @ Q @ u)
        if e < best:
            best, best_u = e, u
    return best, best_u


def brute_force_oracle(c: DiscreteCondenser, K: KernelMatrix, grid_resolution: int = 100) -> OracleResult:
    """Independent minimum for tiny instances (at most six points in total).

    Stage one scans the full product lattice of per-plate simplices at step
    ``1/grid_resolution``; stage two refines by exhaustively enumerating
    support patterns and solving each KKT system exactly.  ``energy`` is the
    refined minimum; ``grid_energy`` the lattice upper bound.
    """
    n = len(c.points)
    if n > MAX_ORACLE_POINTS:
        raise SolverError(f"oracle handles at most {MAX_ORACLE_POINTS} points, got {n}")
    if grid_resolution < 100:
        raise SolverError("grid_resolution must be >= 100")
    cells = np.prod([comb(grid_resolution + p.n - 1, p.n - 1) for p in c.plates])
    if cells > 5e7:
        raise SolverError(f"lattice has {cells:.3g} cells; lower grid_resolution")
    scale = c.point_signs / c.g
    Q = K.entries * np.outer(scale, scale)
    grid_e, grid_u = _grid_search(Q, c, grid_resolution)
    exact_e, exact_u = _support_enumeration(Q, c)
    if exact_e > grid_e:
        exact_e, exact_u = grid_e, grid_u
    return OracleResult(exact_e, grid_e, exact_u / c.g)
