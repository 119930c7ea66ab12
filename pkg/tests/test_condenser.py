import numpy as np
import pytest
from scipy.spatial.distance import cdist

from condcap.condenser import (BallVolume, CondenserError, Constant, ExplicitPoints, PlateSpec, RadialPolynomial,
                               Segment, SphereShell, discretize, exhaustion_sequence, farthest_point_order,
                               fibonacci_sphere, is_nested, plate_points, shape_from_dict, shape_to_dict,
                               shell_row_family, truncate_family, validate, weight_function_from_dict)
from condcap.kernels import KernelSpec

from conftest import ORIGIN, concentric_specs


def test_four_point_shell():
    c = discretize([PlateSpec(1, 1, SphereShell(ORIGIN, 1.0), 4)])
    pts = c.plates[0].points
    assert pts.shape == (4, 3)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, rtol=1e-15)
    d = cdist(pts, pts)
    assert d[~np.eye(4, dtype=bool)].min() > 0
    assert c.plates[0].g_values.tolist() == [1.0, 1.0, 1.0, 1.0]


def test_concentric_separation_and_sup_bound():
    c = discretize(concentric_specs(200), kernel=KernelSpec.newtonian(3))
    assert c.separation == pytest.approx(1.0, abs=1e-12)
    assert c.kernel_sup_bound == pytest.approx(1.0, abs=1e-12)


def test_separation_matches_brute_force():
    specs = [PlateSpec(1, 1, SphereShell((0, 0, 0), 1.0), 60), PlateSpec(2, -1, SphereShell((2.5, 0.3, 0), 1.0), 70)]
    c = discretize(specs)
    assert c.separation == pytest.approx(cdist(c.plates[0].points, c.plates[1].points).min(), rel=1e-14)


def test_validate_cases():
    assert validate(discretize(concentric_specs(50))).passed
    bad = discretize([PlateSpec(1, 1, SphereShell(ORIGIN, 1.0), 30), PlateSpec(2, -1, SphereShell(ORIGIN, 1.0), 30)])
    rep = validate(bad)
    assert not rep.passed and [f.name for f in rep.failures] == ["opposite_sign_separation"]
    single = validate(discretize([PlateSpec(1, 1, SphereShell(ORIGIN, 1.0), 30)]))
    assert single.passed
    skipped = {ch.name for ch in single.checks if ch.skipped}
    assert {"opposite_sign_separation", "g_inf_positive"} <= skipped
    assert "FAIL" in str(rep) and rep.to_dict()["passed"] is False


def test_determinism():
    specs = [PlateSpec(1, 1, BallVolume(ORIGIN, 1.0), 80), PlateSpec(2, -1, SphereShell(ORIGIN, 3.0), 50)]
    a, b = discretize(specs, seed=3), discretize(specs, seed=3)
    for p, q in zip(a.plates, b.plates):
        assert np.array_equal(p.points, q.points)
    assert a.fingerprint() == b.fingerprint()
    assert discretize(specs, seed=4).fingerprint() != a.fingerprint()


def test_ball_points_inside_and_include_boundary():
    pts = plate_points(PlateSpec(1, 1, BallVolume((1.0, 0, 0), 2.0), 100), 0)
    r = np.linalg.norm(pts - np.array([1.0, 0, 0]), axis=1)
    assert r.max() <= 2.0 + 1e-12
    assert np.sum(np.isclose(r, 2.0)) == 100
    assert len(pts) > 100


def test_segment_and_explicit():
    pts = plate_points(PlateSpec(1, 1, Segment((0, 0, 0), (1, 0, 0)), 5))
    np.testing.assert_allclose(pts[:, 0], [0, 0.25, 0.5, 0.75, 1.0])
    ex = plate_points(PlateSpec(1, 1, ExplicitPoints(((0, 0, 1), (0, 1, 0))), 2))
    assert ex.tolist() == [[0, 0, 1], [0, 1, 0]]


def test_fibonacci_dims():
    for dim, n in ((2, 10), (3, 37), (4, 20)):
        pts = fibonacci_sphere(n, dim)
        assert pts.shape == (n, dim)
        np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, rtol=1e-12)


def test_shape_and_weight_dict_roundtrip():
    for shape in (SphereShell((0.0, 1.0, 2.0), 1.5), BallVolume((0.0, 0.0, 0.0), 2.0, 7),
                  Segment((0.0, 0.0), (1.0, 1.0)), ExplicitPoints(((0.0, 1.0),))):
        assert shape_from_dict(shape_to_dict(shape)) == shape
    for wf in (Constant(2.0), RadialPolynomial((1.0, 0.0, 1.0))):
        assert weight_function_from_dict(wf.to_dict()) == wf
    spec = PlateSpec(3, -1, SphereShell((0.0, 0.0, 0.0), 1.0), 12, 0.5)
    assert PlateSpec.from_dict(spec.to_dict()) == spec


@pytest.mark.parametrize("kw", [dict(sign=0), dict(point_count=0), dict(mass_target=0.0)])
def test_platespec_invariants(kw):
    base = dict(id=1, sign=1, shape=SphereShell(ORIGIN, 1.0), point_count=10, mass_target=1.0)
    base.update(kw)
    with pytest.raises(CondenserError):
        PlateSpec(**base)
    with pytest.raises(CondenserError):
        PlateSpec(1, 1, SphereShell(ORIGIN, -1.0), 10)


def test_nonpositive_g_and_duplicates_rejected():
    with pytest.raises(CondenserError):
        RadialPolynomial((0.0, 1.0))
    with pytest.raises(CondenserError):
        discretize([PlateSpec(1, 1, ExplicitPoints(((0, 0, 0), (0, 0, 0))), 2)])
    # smoothing makes duplicates legal
    c = discretize([PlateSpec(1, 1, ExplicitPoints(((0, 0, 0), (0, 0, 0))), 2)], kernel=KernelSpec.newtonian(3, 0.1))
    assert c.plates[0].n == 2
    with pytest.raises(CondenserError):
        discretize([PlateSpec(1, 1, SphereShell(ORIGIN, 1.0), 3), PlateSpec(1, -1, SphereShell(ORIGIN, 2.0), 3)])


def test_g_on_unit_shell():
    c = discretize([PlateSpec(1, 1, SphereShell(ORIGIN, 1.0), 20)], RadialPolynomial((1.0, 0.0, 1.0)))
    np.testing.assert_allclose(c.g, 2.0, rtol=1e-14)


def test_radius_exhaustion_nested():
    seq = exhaustion_sequence([PlateSpec(1, 1, BallVolume(ORIGIN, 1.0), 100)], levels=[0.5, 0.75, 1.0], mode="radius")
    assert len(seq) == 3 and is_nested(seq)
    sizes = [len(c.points) for c in seq]
    assert sizes == sorted(sizes) and sizes[0] < sizes[-1]


def test_point_exhaustion_prefix_nested():
    seq = exhaustion_sequence([PlateSpec(1, 1, SphereShell(ORIGIN, 1.0), 16)], levels=[16, 64, 256])
    for a, b in zip(seq, seq[1:]):
        pa, pb = a.plates[0].points, b.plates[0].points
        assert np.array_equal(pa, pb[: len(pa)])
    assert is_nested(seq) and not is_nested(seq[::-1])


def test_exhaustion_rejects_bad_levels():
    spec = [PlateSpec(1, 1, SphereShell(ORIGIN, 1.0), 16)]
    with pytest.raises(CondenserError):
        exhaustion_sequence(spec, levels=[64, 16])
    with pytest.raises(CondenserError):
        exhaustion_sequence(spec, levels=[0.5, 1.5], mode="radius")


def test_farthest_point_order_is_permutation():
    pts = fibonacci_sphere(50)
    order = farthest_point_order(pts)
    assert sorted(order.tolist()) == list(range(50))
    assert order[0] == 0


def test_truncated_family():
    c = truncate_family(shell_row_family(points=20), 3)
    assert c.n_plates == 3 and not c.has_negative
    assert validate(c).passed
    fam = shell_row_family(points=20, mass_rule=lambda k: 1.0 / k ** 2)
    np.testing.assert_allclose(truncate_family(fam, 5).masses, [1, 1 / 4, 1 / 9, 1 / 16, 1 / 25])
    with pytest.raises(CondenserError):
        truncate_family(fam, 0)


def test_with_masses_and_diagnostics():
    c = discretize(concentric_specs(30))
    c2 = c.with_masses([2.0, 3.0])
    assert c2.masses.tolist() == [2.0, 3.0] and c.masses.tolist() == [1.0, 1.0]
    assert c.total_mass == 2.0
    with pytest.raises(CondenserError):
        c.with_masses([1.0])
    same = discretize([PlateSpec(1, 1, SphereShell(ORIGIN, 1.0), 10), PlateSpec(2, 1, SphereShell(ORIGIN, 1.0), 10)],
                      kernel=KernelSpec.newtonian(3, 0.1))
    assert same.shared_point_count() == 10
    assert same.equal_sign_min_gap() == 0.0
    assert c.default_epsilon() > 0
