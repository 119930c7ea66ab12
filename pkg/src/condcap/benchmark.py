"""Built-in analytic benchmark suite.

Each criterion compares a computed quantity against a closed-form target
(shell theorem values for spheres and balls) or against an independent route
(brute-force oracle, scaling identities).  Solves are cached on a shared
context so criteria that inspect the same condenser do not re-solve it.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .capacity import build_report, exhaustion_study, family_positivity_study
from .condenser import (BallVolume, ExplicitPoints, PlateSpec, RadialPolynomial, SphereShell, discretize,
                        exhaustion_sequence, shell_row_family)
from .kernels import KernelSpec, assemble_matrix
from .solver import SolveOptions, brute_force_oracle, solve_min_energy

ORIGIN = (0.0, 0.0, 0.0)


@dataclass
class CriterionResult:
    id: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.id}: {self.title} -- {self.detail} ({self.seconds:.1f}s)"


@dataclass
class BenchmarkContext:
    gap_tolerance: float = 1e-10
    sum_rule_log: list = field(default_factory=list)

    @property
    def opts(self) -> SolveOptions:
        return SolveOptions(gap_tolerance=self.gap_tolerance)

    def solve(self, label, c, kernel=None, opts=None, duality_tests=10):
        kernel = kernel or KernelSpec.newtonian(3, c.default_epsilon())
        K = assemble_matrix(kernel, c.points)
        res = solve_min_energy(c, K, opts or self.opts)
        rep = build_report(c, K, res, duality_tests=duality_tests)
        if res.converged:
            self.sum_rule_log.append((label, rep.sum_constants))
        return c, K, res, rep

    def log_table(self, label, table):
        j = table.columns.index("sum_constants") if "sum_constants" in table.columns else None
        if j is not None:
            for r in table.rows:
                if r[-1]:
                    self.sum_rule_log.append((f"{label}[{r[0]}]", r[j]))

    @cached_property
    def concentric(self):
        specs = [PlateSpec(1, 1, SphereShell(ORIGIN, 1.0), 400, 1.0),
                 PlateSpec(2, -1, SphereShell(ORIGIN, 2.0), 400, 1.0)]
        return self.solve("concentric", discretize(specs))

    @cached_property
    def single_shell(self):
        return self.solve("single_shell", discretize([PlateSpec(1, 1, SphereShell(ORIGIN, 1.0), 400, 1.0)]))

    @cached_property
    def growing_ball(self):
        levels = [0.5, 0.75, 1.0]
        seq = exhaustion_sequence([PlateSpec(1, 1, BallVolume(ORIGIN, 1.0), 400, 1.0)], levels=levels, mode="radius")
        table = exhaustion_study(seq, opts=self.opts, levels=levels)
        self.log_table("growing_ball", table)
        return table

    @cached_property
    def shell_refinement(self):
        levels = [100, 400, 1600]
        specs = [PlateSpec(1, 1, SphereShell(ORIGIN, 1.0), 100, 1.0),
                 PlateSpec(2, -1, SphereShell(ORIGIN, 2.0), 100, 1.0)]
        seq = exhaustion_sequence(specs, levels=levels, mode="points")
        table = exhaustion_study(seq, opts=self.opts, levels=levels)
        self.log_table("shell_refinement", table)
        return table

    def family(self, rule):
        return family_positivity_study(shell_row_family(points=100, mass_rule=rule), range(1, 9), opts=self.opts)

    @cached_property
    def family_unit(self):
        return self.family(lambda k: 1.0)

    @cached_property
    def family_square(self):
        return self.family(lambda k: 1.0 / k ** 2)


def random_tiny_instance(rng: np.random.Generator):
    """Random condenser with 3 to 6 points in 2 or 3 plates (at most 4 per plate)."""
    while True:
        m = int(rng.integers(2, 4))
        sizes = rng.integers(1, 5, size=m)
        if 3 <= sizes.sum() <= 6:
            break
    specs = []
    for i, n in enumerate(sizes):
        pts = rng.normal(size=(n, 3)) * 0.6 + np.array([3.0 * i, 0.0, 0.0])
        sign = 1 if (i % 2 == 0 or rng.random() < 0.3) else -1
        specs.append(PlateSpec(i + 1, sign, ExplicitPoints(tuple(map(tuple, pts))), int(n), float(rng.uniform(0.5, 2.0))))
    wf = RadialPolynomial((1.0, 0.0, float(rng.uniform(0.0, 0.3))))
    c = discretize(specs, wf)
    eps = float(rng.uniform(0.2, 0.6))
    return c, KernelSpec.newtonian(3, eps)


def _rel(a, b):
    return abs(a - b) / abs(b)


def crit_spherical(ctx: BenchmarkContext):
    _, _, res, rep = ctx.concentric
    C = rep.constants
    ok = _rel(rep.cap, 2.0) <= 0.03 and abs(C[0] - 1) <= 0.05 and abs(C[1]) <= 0.05
    return ok, f"cap={rep.cap:.6f} (target 2, 3%), C=({C[0]:.4f}, {C[1]:.4f}) (target (1,0) +-0.05)"


def crit_single_shell(ctx: BenchmarkContext):
    _, _, _, rep = ctx.single_shell
    ok = _rel(rep.cap, 1.0) <= 0.02 and abs(rep.constants[0] - 1) <= 1e-10
    return ok, f"cap={rep.cap:.6f} (target 1, 2%), |C1-1|={abs(rep.constants[0] - 1):.2e}"


def crit_sum_rule(ctx: BenchmarkContext):
    for name in ("concentric", "single_shell", "growing_ball", "shell_refinement", "family_unit", "family_square"):
        getattr(ctx, name)
    if not ctx.sum_rule_log:
        return False, "no converged solves recorded"
    worst = max(abs(s - 1.0) for _, s in ctx.sum_rule_log)
    return worst <= 1e-10, f"{len(ctx.sum_rule_log)} converged solves, max |sum C - 1| = {worst:.2e}"


def crit_oracle(ctx: BenchmarkContext):
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for _ in range(20):
        c, kernel = random_tiny_instance(rng)
        K = assemble_matrix(kernel, c.points)
        res = solve_min_energy(c, K, SolveOptions(gap_tolerance=min(ctx.gap_tolerance, 1e-13)))
        orc = brute_force_oracle(c, K, 100)
        worst = max(worst, _rel(res.minimal_energy, orc.energy))
        if res.converged:
            ctx.sum_rule_log.append(("oracle", float(np.sum(c.signs * res.per_plate_interaction) / res.minimal_energy)))
    return worst <= 1e-9, f"20 instances, max relative energy difference {worst:.2e} (tol 1e-9)"


def crit_frostman(ctx: BenchmarkContext):
    worst_low, worst_supp, worst_inf = 0.0, -np.inf, 0.0
    for _, _, _, rep in (ctx.concentric, ctx.single_shell):
        fr = rep.frostman
        worst_low = min(worst_low, float(fr.min_residual.min()))
        worst_supp = max(worst_supp, float(fr.max_support_residual.max()))
        worst_inf = max(worst_inf, float(fr.inf_error.max()))
    ok = worst_low >= -1e-5 and worst_supp <= 1e-5 and worst_inf <= 1e-4
    return ok, f"min residual {worst_low:.2e}, support max {worst_supp:.2e}, |inf - C| {worst_inf:.2e}"


def crit_exhaustion(ctx: BenchmarkContext):
    ball = ctx.growing_ball
    caps = ball.column("cap")
    ball_ok = ball.flags["cap_nondecreasing"] and all(_rel(c, r) <= 0.05 for c, r in zip(caps, (0.5, 0.75, 1.0)))
    ref = ctx.shell_refinement
    rc = ref.column("cap")
    errs = [abs(c - 2.0) for c in rc]
    ref_ok = (ref.flags["dist_strictly_decreasing"] and ref.flags["cap_nondecreasing"]
              and all(b < a for a, b in zip(errs, errs[1:])))
    detail = (f"ball caps {', '.join(f'{c:.4f}' for c in caps)}; shell caps {', '.join(f'{c:.4f}' for c in rc)}; "
              f"dist {', '.join(f'{d:.3g}' for d in ref.column('dist_to_final'))}")
    return ball_ok and ref_ok, detail


def crit_duality(ctx: BenchmarkContext):
    _, _, _, rep = ctx.concentric
    d = rep.duality
    pair_cap = min(t["pairing_at_cap_level"] for t in d.tests)
    pair_unit = min(t["pairing"] for t in d.tests)
    ok = (d.min_feasibility_residual >= -1e-5 and d.energy_relative_error <= 1e-8
          and len(d.tests) == 10 and pair_cap >= 1 - 1e-4 and pair_unit >= 1 - 1e-4)
    return ok, (f"feasibility {d.min_feasibility_residual:.2e}, |E(omega)-cap|/cap {d.energy_relative_error:.2e}, "
                f"min pairing at a*cap {pair_cap:.6f}, at a {pair_unit:.6f}")


def crit_homogeneity(ctx: BenchmarkContext):
    c, K, res, rep = ctx.concentric
    c2 = c.with_masses(2.0 * c.masses)
    res2 = solve_min_energy(c2, K, ctx.opts)
    cap2 = 1.0 / res2.minimal_energy
    cap_err = _rel(cap2, rep.cap / 4.0)
    lam, lam2 = res.minimizer.concat(), res2.minimizer.concat()
    w_err = float(np.max(np.abs(lam2 - 2.0 * lam)) / np.max(np.abs(2.0 * lam)))
    return cap_err <= 1e-10 and w_err <= 1e-10, f"cap rel err {cap_err:.2e}, minimizer rel err {w_err:.2e}"


def crit_family(ctx: BenchmarkContext):
    unit, sq = ctx.family_unit, ctx.family_square
    ok = unit.flags["cap_strictly_decreasing"] and sq.flags["last_relative_change"] < 0.01
    return ok, (f"a_k=1 caps {unit.column('cap')[0]:.4f} -> {unit.column('cap')[-1]:.4f}; "
                f"a_k=1/k^2 |cap8-cap7|/cap8 = {sq.flags['last_relative_change']:.2e}")


CRITERIA: dict = {
    1: ("spherical condenser capacity and constants", crit_spherical),
    2: ("single shell capacity, C1 = 1", crit_single_shell),
    3: ("sum of capacitary constants equals 1", crit_sum_rule),
    4: ("solver matches brute-force oracle", crit_oracle),
    5: ("Frostman/KKT two-sided conditions", crit_frostman),
    6: ("exhaustion monotonicity and convergence", crit_exhaustion),
    7: ("duality sandwich", crit_duality),
    8: ("homogeneity under mass scaling", crit_homogeneity),
    9: ("family positivity trend", crit_family),
}


def run_criterion(cid: int, ctx: BenchmarkContext) -> CriterionResult:
    title, fn = CRITERIA[cid]
    t0 = time.perf_counter()
    try:
        passed, detail = fn(ctx)
    except Exception as exc:  # a crash is a failed criterion, not a crashed suite
        passed, detail = False, f"error: {type(exc).__name__}: {exc}"
    return CriterionResult(cid, title, bool(passed), detail, time.perf_counter() - t0)


def run_suite(ids=None, gap_tolerance: float = 1e-10, echo: Callable[[str], None] | None = print) -> list:
    ctx = BenchmarkContext(gap_tolerance=gap_tolerance)
    out = []
    order = sorted(ids or CRITERIA)
    # the sum rule inspects every other solve, so it runs last
    if 3 in order:
        order = [i for i in order if i != 3] + [3]
    for cid in order:
        r = run_criterion(cid, ctx)
        if echo:
            echo(r.line())
        out.append(r)
    return out
