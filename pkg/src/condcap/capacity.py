"""Capacity, capacitary constants and capacitary distribution from a solve,
plus the optimality and duality checks run on them.

Conventions: ``lambda`` is the energy minimizer at plate masses ``a``;
``cap = 1 / ||lambda||^2``; ``gamma = cap * lambda`` (plate masses ``a * cap``);
``C_i = sign_i * kappa(lambda^i, lambda) / ||lambda||^2``.

"Nearly everywhere" statements are checked at every sample point: a finite
point set has no capacity-zero exceptional subsets.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .condenser import DiscreteCondenser, PlateSpec, discretize, is_nested, truncate_family
from .kernels import LOG_UNIT_DISK, KernelMatrix, KernelSpec, assemble_matrix
from .measures import CondenserMeasure, energy, flatten, potentials
from .solver import SolveOptions, SolveResult, solve_min_energy, support_thresholds

log = logging.getLogger(__name__)

N_E_INTERPRETATION = "nearly-everywhere conditions evaluated at every sample point"


class CapacityError(RuntimeError):
    pass


@dataclass
class FrostmanReport:
    """Per-plate residuals of ``sign_i a_i kappa(x, gamma) - C_i g(x)``, divided by
    ``a_i * max |kappa(., gamma)|`` (the scale the tolerance is stated in)."""

    min_residual: np.ndarray
    max_support_residual: np.ndarray
    support_size: np.ndarray
    inf_value: np.ndarray
    inf_error: np.ndarray
    residuals: list
    scale: np.ndarray
    tolerance: float
    support_asserted: bool = True

    @property
    def lower_ok(self) -> bool:
        return bool(np.all(self.min_residual >= -self.tolerance))

    @property
    def support_ok(self) -> bool:
        return bool(np.all(self.max_support_residual <= self.tolerance))

    @property
    def passed(self) -> bool:
        return self.lower_ok and (self.support_ok or not self.support_asserted)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "tolerance": self.tolerance, "support_asserted": self.support_asserted,
                "min_residual": self.min_residual.tolist(),
                "max_support_residual": self.max_support_residual.tolist(),
                "support_size": self.support_size.tolist(),
                "inf_value": self.inf_value.tolist(), "inf_error": self.inf_error.tolist(),
                "interpretation": N_E_INTERPRETATION}


@dataclass
class DualityReport:
    min_feasibility_residual: float
    constants_sum: float
    energy_of_omega: float
    energy_relative_error: float
    weak_duality_margin: float
    tests: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"min_feasibility_residual": self.min_feasibility_residual,
                "constants_sum": self.constants_sum,
                "energy_of_omega": self.energy_of_omega,
                "energy_relative_error": self.energy_relative_error,
                "weak_duality_margin": self.weak_duality_margin,
                "tests": self.tests}


@dataclass
class CapacityReport:
    cap: float
    minimal_energy: float
    constants: np.ndarray
    eta: np.ndarray
    gamma: CondenserMeasure
    sum_constants: float
    provisional: bool
    relative_gap: float
    iterations: int
    kernel: KernelSpec
    frostman: FrostmanReport | None = None
    duality: DualityReport | None = None

    def to_dict(self) -> dict:
        return {"cap": self.cap, "minimal_energy": self.minimal_energy,
                "constants": self.constants.tolist(), "sum_constants": self.sum_constants,
                "eta": self.eta.tolist(), "provisional": self.provisional,
                "relative_gap": self.relative_gap, "iterations": self.iterations,
                "kernel": self.kernel.to_dict(),
                "frostman": self.frostman.to_dict() if self.frostman else None,
                "duality": self.duality.to_dict() if self.duality else None}


def build_report(c: DiscreteCondenser, K: KernelMatrix, result: SolveResult, kkt_tolerance: float = 1e-6,
                 duality_tests: int = 10, seed: int = 0) -> CapacityReport:
    E = result.minimal_energy
    if not E > 0:
        if any(np.any(w > 0) for w in result.minimizer.weights):
            raise CapacityError("zero energy at nonzero weights: kernel is not strictly positive definite")
        cap = float("inf")
        const = np.full(c.n_plates, np.nan)
        rep = CapacityReport(cap, E, const, result.per_plate_interaction, result.minimizer, float("nan"),
                             True, result.relative_gap, result.iterations_used, K.spec)
        return rep
    cap = 1.0 / E
    eta = np.asarray(result.per_plate_interaction, dtype=float)
    const = c.signs * eta / E
    rep = CapacityReport(cap, E, const, eta, result.minimizer.scaled(cap), float(const.sum()),
                         not result.converged, result.relative_gap, result.iterations_used, K.spec)
    rep.frostman = verify_frostman(c, K, rep, kkt_tolerance)
    if duality_tests > 0:
        rep.duality = verify_duality(c, K, rep, seed, duality_tests)
    return rep


def _weighted_potentials(c: DiscreteCondenser, K: KernelMatrix, gamma: CondenserMeasure) -> tuple:
    pot = potentials(c, K, gamma)
    scale_pot = float(np.max(np.abs(pot)))
    vals = [p.sign * p.mass * pot[s] for p, s in zip(c.plates, c.slices)]
    return pot, scale_pot, vals


def verify_frostman(c: DiscreteCondenser, K: KernelMatrix, report: CapacityReport,
                    kkt_tolerance: float = 1e-6, support_threshold: np.ndarray | None = None) -> FrostmanReport:
    _, scale_pot, vals = _weighted_potentials(c, K, report.gamma)
    thr = support_thresholds(c) * report.cap if support_threshold is None else np.asarray(support_threshold)
    mins, maxs, sizes, infs, errs, res_all, scales = [], [], [], [], [], [], []
    for i, (p, s) in enumerate(zip(c.plates, c.slices)):
        scale = p.mass * scale_pot if scale_pot > 0 else 1.0
        res = (vals[i] - report.constants[i] * p.g_values) / scale
        supp = report.gamma.weights[i] > thr[s]
        mins.append(res.min())
        maxs.append(res[supp].max() if supp.any() else -np.inf)
        sizes.append(int(supp.sum()))
        inf_val = float(np.min(vals[i] / p.g_values))
        infs.append(inf_val)
        errs.append(abs(inf_val - report.constants[i]))
        res_all.append(res)
        scales.append(scale)
    return FrostmanReport(np.array(mins), np.array(maxs), np.array(sizes), np.array(infs), np.array(errs),
                          res_all, np.array(scales), kkt_tolerance,
                          support_asserted=report.kernel.family != LOG_UNIT_DISK)


def verify_duality(c: DiscreteCondenser, K: KernelMatrix, report: CapacityReport, primal_test_seed: int = 0,
                   n_tests: int = 10) -> DualityReport:
    """Check omega = R gamma against the dual class and against random feasible primals.

    For each test a Dirichlet-random measure mu is drawn at plate masses ``a``
    (``kappa(omega, mu) >= 1`` and ``||omega|| ||mu|| >= 1``) and the same
    shape is rescaled to masses ``a * cap`` (``kappa(omega, mu) >= cap`` and
    ``||mu||^2 >= cap``).
    """
    if not np.isfinite(report.cap) or report.cap <= 0:
        raise CapacityError("duality checks need a finite positive capacity")
    fr = report.frostman or verify_frostman(c, K, report)
    omega = flatten(c, report.gamma)
    e_omega = float(omega @ (K.entries @ omega))
    tests = []
    for k in range(n_tests):
        seed = primal_test_seed + k
        mu = CondenserMeasure.random(c, seed)
        v = flatten(c, mu)
        pairing = float(omega @ (K.entries @ v))
        e_mu = float(v @ (K.entries @ v))
        tests.append({"seed": seed,
                      "pairing": pairing,
                      "cauchy_schwarz_product": float(np.sqrt(e_omega * e_mu)),
                      "pairing_at_cap_level": pairing * report.cap,
                      "energy_at_cap_level": e_mu * report.cap ** 2})
    margin = min((t["pairing"] for t in tests), default=float("nan")) - 1.0
    return DualityReport(float(fr.min_residual.min()), float(report.constants.sum()), e_omega,
                         abs(e_omega - report.cap) / report.cap, margin, tests)


@dataclass
class CharacterizationResult:
    passed: bool
    min_residual: float
    tau_sum: float
    target_sum: float
    distance: float
    tau_error: float
    conditions_hold: bool


def verify_characterization(c: DiscreteCondenser, K: KernelMatrix, candidate: CondenserMeasure, tau,
                            report: CapacityReport, tol: float = 1e-6, distance_tol: float = 1e-4) -> CharacterizationResult:
    """If ``candidate`` and ``tau`` satisfy the lower potential bounds and the
    sum identity ``sum(tau) = (cap + ||candidate||^2) / (2 cap)``, they must be
    gamma and its constants."""
    tau = np.asarray(tau, dtype=float)
    _, scale_pot, vals = _weighted_potentials(c, K, candidate)
    scale_pot = scale_pot or 1.0
    mins = [float(((vals[i] - tau[i] * p.g_values) / (p.mass * scale_pot)).min()) for i, p in enumerate(c.plates)]
    min_res = min(mins)
    e_nu = energy(c, K, candidate)
    target = (report.cap + e_nu) / (2.0 * report.cap)
    conditions = min_res >= -tol and abs(tau.sum() - target) <= tol
    g = flatten(c, report.gamma)
    e = flatten(c, candidate) - g
    dist = float(np.sqrt(max(e @ (K.entries @ e), 0.0)) / np.sqrt(report.cap))
    tau_err = float(np.max(np.abs(tau - report.constants)))
    passed = bool(conditions and dist <= distance_tol and tau_err <= distance_tol)
    return CharacterizationResult(passed, min_res, float(tau.sum()), target, dist, tau_err, bool(conditions))


# --------------------------------------------------------------------------
# studies
# --------------------------------------------------------------------------


def solve_capacity(c: DiscreteCondenser, kernel: KernelSpec | None = None, opts: SolveOptions | None = None,
                   kkt_tolerance: float = 1e-6, duality_tests: int = 10, seed: int = 0):
    """Assemble, solve and report in one call; a kernel without smoothing gets the default epsilon."""
    kernel = kernel or KernelSpec.newtonian(c.dim)
    if kernel.epsilon == 0.0:
        kernel = kernel.with_epsilon(c.default_epsilon())
    K = assemble_matrix(kernel, c.points)
    res = solve_min_energy(c, K, opts)
    return build_report(c, K, res, kkt_tolerance, duality_tests, seed), res, K


def _level_task(args):
    c, kernel, opts = args
    rep, res, _ = solve_capacity(c, kernel, opts, duality_tests=0)
    return rep, res.converged


@dataclass
class StudyTable:
    columns: list
    rows: list
    flags: dict

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]


def _pmap(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _shared_kernel(kernel: KernelSpec | None, ref: DiscreteCondenser) -> KernelSpec:
    kernel = kernel or KernelSpec.newtonian(ref.dim)
    if kernel.epsilon == 0.0:
        kernel = kernel.with_epsilon(ref.default_epsilon())
    return kernel


def exhaustion_study(sequence: Sequence[DiscreteCondenser], kernel: KernelSpec | None = None,
                     opts: SolveOptions | None = None, jobs: int = 1, levels: Sequence | None = None) -> StudyTable:
    """Capacity, constants and distance to the final distribution along a nested sequence.

    One kernel is shared by every level; without smoothing it takes the
    default epsilon of the final level.  Distances are energy norms with the
    final level's matrix, each gamma embedded by exact point matching.
    """
    if not sequence:
        raise CapacityError("empty sequence")
    if not is_nested(sequence):
        raise CapacityError("exhaustion study needs a nested sequence")
    final = sequence[-1]
    kernel = _shared_kernel(kernel, final)
    out = _pmap(_level_task, [(c, kernel, opts) for c in sequence], jobs)

    K_final = assemble_matrix(kernel, final.points, certify=False).entries

    def embed(c: DiscreteCondenser, gamma: CondenserMeasure) -> np.ndarray:
        v = np.zeros(len(final.points))
        for p, w, fp, s_final in zip(c.plates, gamma.weights, final.plates, final.slices):
            pos = {row.tobytes(): k for k, row in enumerate(np.ascontiguousarray(fp.points))}
            for row, wk in zip(np.ascontiguousarray(p.points), w):
                v[s_final.start + pos[row.tobytes()]] += p.sign * wk
        return v

    g_final = embed(final, out[-1][0].gamma)
    m = final.n_plates
    columns = ["level", "n_points", "cap"] + [f"C_{p.id}" for p in final.plates] + ["sum_constants", "dist_to_final", "converged"]
    rows = []
    for k, (c, (rep, conv)) in enumerate(zip(sequence, out)):
        e = embed(c, rep.gamma) - g_final
        dist = float(np.sqrt(max(e @ (K_final @ e), 0.0)))
        lvl = levels[k] if levels is not None else k
        rows.append([lvl, len(c.points), rep.cap] + list(rep.constants[:m]) + [rep.sum_constants, dist, conv])
    caps = [r[2] for r in rows]
    dists = [r[-2] for r in rows]
    flags = {"epsilon": kernel.epsilon,
             "cap_nondecreasing": all(b >= a * (1 - 1e-10) for a, b in zip(caps, caps[1:])),
             "dist_strictly_decreasing": all(b < a for a, b in zip(dists, dists[1:])),
             "all_converged": all(r[-1] for r in rows)}
    return StudyTable(columns, rows, flags)


def _single_plate_capacity(args):
    spec, wf, kernel, opts, seed = args
    c = discretize([PlateSpec(spec.id, 1, spec.shape, spec.point_count, 1.0)], wf, seed, kernel)
    K = assemble_matrix(kernel, c.points)
    return 1.0 / solve_min_energy(c, K, opts).minimal_energy


def family_positivity_study(family: Callable[[int], PlateSpec], N_list: Sequence[int], weight_function=None,
                            kernel: KernelSpec | None = None, opts: SolveOptions | None = None, seed: int = 0,
                            jobs: int = 1, huge_capacity: float = 1e6) -> StudyTable:
    """cap of truncated families against the partial sums of ``a_k^2 / C(A_k)``.

    ``C(A_k)`` is estimated from a unit-mass solve on plate k alone.  Plates
    whose estimate exceeds ``huge_capacity`` are listed as effectively
    infinite-capacity plates.
    """
    N_list = sorted(set(int(n) for n in N_list))
    largest = truncate_family(family, N_list[-1], weight_function, seed)
    kernel = _shared_kernel(kernel, largest)
    specs = [family(k) for k in range(1, N_list[-1] + 1)]
    single = _pmap(_single_plate_capacity, [(s, weight_function, kernel, opts, seed) for s in specs], jobs)
    conds = [truncate_family(family, N, weight_function, seed, kernel) for N in N_list]
    out = _pmap(_level_task, [(c, kernel, opts) for c in conds], jobs)
    columns = ["N", "cap", "partial_sum", "relative_change", "converged"]
    rows = []
    prev = None
    for N, (rep, conv) in zip(N_list, out):
        psum = float(sum(specs[k].mass_target ** 2 / single[k] for k in range(N)))
        rel = abs(rep.cap - prev) / rep.cap if prev is not None else float("nan")
        rows.append([N, rep.cap, psum, rel, conv])
        prev = rep.cap
    caps = [r[1] for r in rows]
    flags = {"epsilon": kernel.epsilon,
             "single_plate_capacities": single,
             "cap_strictly_decreasing": all(b < a for a, b in zip(caps, caps[1:])),
             "last_relative_change": rows[-1][3],
             "cap_converging": bool(len(rows) > 1 and rows[-1][3] < 0.01),
             "huge_capacity_plates": [specs[k].id for k in range(len(specs)) if single[k] > huge_capacity]}
    return StudyTable(columns, rows, flags)
