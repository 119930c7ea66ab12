import numpy as np
import pytest

from condcap.capacity import (CapacityError, build_report, exhaustion_study, family_positivity_study, solve_capacity,
                              verify_characterization, verify_duality, verify_frostman)
from condcap.condenser import BallVolume, PlateSpec, SphereShell, discretize, exhaustion_sequence, shell_row_family
from condcap.kernels import KernelSpec, assemble_matrix
from condcap.measures import CondenserMeasure, energy, flatten
from condcap.solver import SolveOptions, solve_min_energy

from conftest import ORIGIN, concentric_specs

TIGHT = SolveOptions(gap_tolerance=1e-10)


def test_concentric_values(concentric):
    c, K, res, rep = concentric
    # frozen from the reference run: 400 + 400 pole-including Fibonacci points, default epsilon
    assert rep.cap == pytest.approx(1.9504626014, rel=1e-8)
    assert abs(rep.cap - 2.0) / 2.0 <= 0.03
    np.testing.assert_allclose(rep.constants, [0.956896, 0.043104], atol=1e-5)
    assert rep.sum_constants == pytest.approx(1.0, abs=1e-10)
    assert rep.cap == 1.0 / rep.minimal_energy
    assert energy(c, K, rep.gamma) == pytest.approx(rep.cap, rel=1e-10)
    assert not rep.provisional


def test_single_plate_constant_is_one(single_shell):
    _, _, _, rep = single_shell
    assert rep.constants[0] == pytest.approx(1.0, abs=1e-12)
    assert rep.cap == pytest.approx(1.0097023246, rel=1e-8)


def test_frostman_concentric(concentric):
    c, K, res, rep = concentric
    fr = rep.frostman
    assert fr.passed and fr.support_asserted
    # potential of gamma is flat on the inner plate
    assert np.abs(fr.residuals[0]).max() < 1e-8
    np.testing.assert_allclose(fr.inf_value, rep.constants, atol=1e-8)
    assert fr.support_size[0] == c.plates[0].n
    d = fr.to_dict()
    assert d["passed"] and "every sample point" in d["interpretation"]


def test_frostman_single_point_plate():
    c = discretize([PlateSpec(1, 1, SphereShell(ORIGIN, 1.0), 1), PlateSpec(2, -1, SphereShell(ORIGIN, 3.0), 1)])
    rep, _, _ = solve_capacity(c, KernelSpec.newtonian(3, 0.5), TIGHT)
    for r in rep.frostman.residuals:
        assert np.abs(r).max() < 1e-14


def test_residuals_shrink_with_tighter_gap():
    c = discretize(concentric_specs(400))
    worst = []
    for gap in (1e-4, 1e-6, 1e-8):
        rep, _, _ = solve_capacity(c, opts=SolveOptions(gap_tolerance=gap), duality_tests=0)
        worst.append((-rep.frostman.min_residual.min(), rep.frostman.max_support_residual.max()))
    for (lo_a, hi_a), (lo_b, hi_b) in zip(worst, worst[1:]):
        assert lo_b <= lo_a / 9 and hi_b <= hi_a / 9


def test_duality(concentric):
    c, K, res, rep = concentric
    d = rep.duality
    assert d.min_feasibility_residual >= -1e-5
    assert d.energy_relative_error <= 1e-8
    assert len(d.tests) == 10
    for t in d.tests:
        assert t["pairing"] >= 1 - 1e-4
        assert t["pairing_at_cap_level"] >= rep.cap * (1 - 1e-4)
        assert t["energy_at_cap_level"] >= rep.cap * (1 - 1e-10)
        assert t["pairing"] <= t["cauchy_schwarz_product"] * (1 + 1e-12)
    assert d.constants_sum == pytest.approx(1.0, abs=1e-10)


def test_duality_uniform_and_self_pairing(concentric):
    c, K, res, rep = concentric
    omega = flatten(c, rep.gamma)
    uni = flatten(c, CondenserMeasure.uniform(c))
    assert omega @ (K.entries @ uni) >= 1 - 1e-6
    # mu = lambda (gamma at level a) saturates Cauchy-Schwarz
    lam = flatten(c, res.minimizer)
    pairing = omega @ (K.entries @ lam)
    assert pairing == pytest.approx(1.0, rel=1e-10)
    assert pairing == pytest.approx(np.sqrt((omega @ K.entries @ omega) * (lam @ K.entries @ lam)), rel=1e-10)


def test_scaled_problem_minimum_is_cap(concentric):
    c, K, res, rep = concentric
    scaled = solve_min_energy(c.with_masses(c.masses * rep.cap), K, TIGHT)
    assert scaled.minimal_energy == pytest.approx(rep.cap, rel=1e-10)
    for seed in range(5):
        mu = CondenserMeasure.random(c, seed, c.masses * rep.cap)
        assert energy(c, K, mu) >= rep.cap


def test_characterization(concentric):
    c, K, res, rep = concentric
    ok = verify_characterization(c, K, rep.gamma, rep.constants, rep)
    assert ok.passed and ok.tau_sum == pytest.approx(ok.target_sum, abs=1e-9)
    bad = verify_characterization(c, K, rep.gamma.scaled(1.1), rep.constants, rep)
    assert not bad.passed and bad.target_sum == pytest.approx((1 + 1.21) / 2, rel=1e-9)
    # an independent re-solve from a random start lands on the same distribution
    other = solve_min_energy(c, K, SolveOptions(gap_tolerance=1e-12, warm_start=CondenserMeasure.random(c, 42)))
    rep2 = build_report(c, K, other, duality_tests=0)
    again = verify_characterization(c, K, rep2.gamma, rep2.constants, rep)
    assert again.passed and again.distance <= 1e-4


def test_homogeneity(concentric):
    c, K, res, rep = concentric
    for s in (2.0, 0.5):
        r2 = build_report(c.with_masses(s * c.masses), K, solve_min_energy(c.with_masses(s * c.masses), K, TIGHT),
                          duality_tests=0)
        assert r2.cap == pytest.approx(rep.cap / s ** 2, rel=1e-10)
        np.testing.assert_allclose(r2.constants, rep.constants, atol=1e-9)


def test_log_kernel_support_not_asserted():
    c = discretize([PlateSpec(1, 1, SphereShell((0.0, 0.0), 0.5), 60)])
    rep, res, _ = solve_capacity(c, KernelSpec.log_unit_disk(), TIGHT)
    assert res.converged and not rep.frostman.support_asserted
    assert rep.constants[0] == pytest.approx(1.0, abs=1e-12)


def test_provisional_report():
    c = discretize(concentric_specs(100))
    rep, res, _ = solve_capacity(c, opts=SolveOptions(max_iterations=2, gap_tolerance=1e-14), duality_tests=0)
    assert rep.provisional and not res.converged
    # the sum rule is an identity of the formulas, independent of convergence
    assert rep.sum_constants == pytest.approx(1.0, abs=1e-10)


def test_duality_refuses_infinite_cap(concentric):
    c, K, res, rep = concentric
    from dataclasses import replace
    with pytest.raises(CapacityError):
        verify_duality(c, K, replace(rep, cap=float("inf")))


def test_report_dict(concentric):
    d = concentric[3].to_dict()
    assert set(d) >= {"cap", "constants", "frostman", "duality", "kernel", "provisional"}


def test_exhaustion_growing_ball():
    levels = [0.5, 0.75, 1.0]
    seq = exhaustion_sequence([PlateSpec(1, 1, BallVolume(ORIGIN, 1.0), 400)], levels=levels, mode="radius")
    t = exhaustion_study(seq, opts=TIGHT, levels=levels)
    caps = t.column("cap")
    assert t.flags["cap_nondecreasing"] and t.flags["all_converged"]
    for cap, r in zip(caps, levels):
        assert abs(cap - r) / r <= 0.05
    assert t.column("dist_to_final")[-1] == 0.0
    np.testing.assert_allclose(t.column("sum_constants"), 1.0, atol=1e-10)


def test_exhaustion_refinement():
    seq = exhaustion_sequence(concentric_specs(100), levels=[100, 400, 1600])
    t = exhaustion_study(seq, opts=TIGHT, levels=[100, 400, 1600])
    caps = t.column("cap")
    assert t.flags["dist_strictly_decreasing"] and t.flags["cap_nondecreasing"]
    errs = [abs(x - 2.0) for x in caps]
    assert errs[0] > errs[1] > errs[2]


def test_constant_sequence_rows_identical():
    c = discretize(concentric_specs(60))
    t = exhaustion_study([c, c, c], opts=TIGHT)
    assert t.rows[0][1:] == t.rows[1][1:] == t.rows[2][1:]
    assert t.column("dist_to_final") == [0.0, 0.0, 0.0]


def test_exhaustion_single_level_matches_solve():
    c = discretize(concentric_specs(80))
    t = exhaustion_study([c], opts=TIGHT)
    rep, _, _ = solve_capacity(c, opts=TIGHT, duality_tests=0)
    assert t.rows[0][2] == rep.cap


def test_exhaustion_rejects_unnested():
    a, b = discretize(concentric_specs(30)), discretize(concentric_specs(31))
    with pytest.raises(CapacityError):
        exhaustion_study([a, b])


def test_parallel_matches_serial():
    seq = exhaustion_sequence(concentric_specs(50), levels=[50, 100])
    s = exhaustion_study(seq, opts=TIGHT, jobs=1)
    p = exhaustion_study(seq, opts=TIGHT, jobs=2)
    assert s.rows == p.rows


def test_family_unit_masses():
    t = family_positivity_study(shell_row_family(points=100), range(1, 9), opts=TIGHT)
    caps = t.column("cap")
    assert t.flags["cap_strictly_decreasing"]
    # each plate alone contributes at least a_k^2 / C(A_k), so energy grows at least like the partial sums
    for cap, psum in zip(caps, t.column("partial_sum")):
        assert 1.0 / cap >= psum * (1 - 1e-9)
    assert t.flags["huge_capacity_plates"] == []


def test_family_inverse_square():
    t = family_positivity_study(shell_row_family(points=100, mass_rule=lambda k: 1.0 / k ** 2), range(1, 9), opts=TIGHT)
    assert t.flags["last_relative_change"] < 0.01 and t.flags["cap_converging"]
    assert t.column("cap")[-1] > 0.5


def test_family_n1_matches_standalone():
    fam = shell_row_family(points=100)
    t = family_positivity_study(fam, [1], opts=TIGHT)
    c = discretize([fam(1)])
    rep, _, _ = solve_capacity(c, opts=TIGHT, duality_tests=0)
    assert t.rows[0][1] == pytest.approx(rep.cap, rel=1e-12)
    assert t.flags["single_plate_capacities"][0] == pytest.approx(rep.cap, rel=1e-12)
