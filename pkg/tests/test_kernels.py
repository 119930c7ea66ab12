import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condcap.condenser import fibonacci_sphere
from condcap.kernels import (KernelError, KernelSpec, assemble_matrix, eval_kernel, kernel_block, pd_certificate,
                             shell_potential_oracle)


def test_eval_examples():
    assert eval_kernel(KernelSpec.newtonian(3), (0, 0, 0), (0, 0, 2)) == pytest.approx(0.5, rel=1e-15)
    assert eval_kernel(KernelSpec.newtonian(3, 1.0), (1, 2, 3), (1, 2, 3)) == pytest.approx(1.0, rel=1e-15)
    assert eval_kernel(KernelSpec.log_unit_disk(), (0, 0), (0.5, 0)) == pytest.approx(math.log(2), rel=1e-15)
    assert eval_kernel(KernelSpec.riesz(1.0, 2), (0, 0), (3, 4)) == pytest.approx(0.2, rel=1e-15)


def test_unsmoothed_diagonal_is_infinite():
    assert eval_kernel(KernelSpec.newtonian(3), (0, 0, 0), (0, 0, 0)) == math.inf


@pytest.mark.parametrize("kw", [dict(alpha=3.0, dim=3), dict(alpha=0.0, dim=3), dict(alpha=1.0, dim=1),
                                dict(alpha=2.0, dim=3, epsilon=-1.0)])
def test_bad_riesz_parameters(kw):
    with pytest.raises(KernelError):
        KernelSpec.riesz(**kw)


def test_unknown_family_and_dict_roundtrip():
    with pytest.raises(KernelError):
        KernelSpec.from_dict({"family": "gauss"})
    spec = KernelSpec.newtonian(3, 0.05)
    assert KernelSpec.from_dict(spec.to_dict()) == spec
    assert KernelSpec.from_dict({"family": "riesz"}, default_epsilon=0.3).epsilon == 0.3
    assert KernelSpec.from_dict(KernelSpec.log_unit_disk(0.01).to_dict()).family == "log_unit_disk"


def test_log_kernel_rejects_points_outside_disk():
    with pytest.raises(KernelError):
        eval_kernel(KernelSpec.log_unit_disk(), (0, 0), (1.5, 0))


def test_assemble_two_points():
    K = assemble_matrix(KernelSpec.newtonian(3, 1.0), [(0, 0, 0), (0, 0, 1)])
    expect = np.array([[1, 2 ** -0.5], [2 ** -0.5, 1]])
    np.testing.assert_allclose(K.entries, expect, rtol=1e-15)
    assert K.pd_certified


def test_assemble_single_point_and_symmetry():
    spec = KernelSpec.riesz(1.5, 3, 1.0)
    K = assemble_matrix(spec, [(0.3, 0.1, -0.2)])
    assert K.entries.shape == (1, 1)
    assert K.entries[0, 0] == eval_kernel(spec, (0.3, 0.1, -0.2), (0.3, 0.1, -0.2))
    pts = np.random.default_rng(0).normal(size=(30, 3))
    K = assemble_matrix(spec, pts)
    assert np.array_equal(K.entries, K.entries.T)
    assert not K.entries.flags.writeable


def test_assemble_refuses_unsmoothed():
    with pytest.raises(KernelError):
        assemble_matrix(KernelSpec.newtonian(3), [(0, 0, 0), (1, 0, 0)])


def test_fibonacci_matrix_is_certified():
    K = assemble_matrix(KernelSpec.newtonian(3, 0.1), fibonacci_sphere(50))
    assert K.pd_certified and K.min_pivot > 0


def test_certificate_rejects_indefinite():
    ok, piv = pd_certificate(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert not ok and piv < 0


def test_shell_oracle():
    assert shell_potential_oracle(3, 1.0, (0, 0, 0.5)) == pytest.approx(1.0)
    assert shell_potential_oracle(3, 1.0, (0, 0, 4)) == pytest.approx(0.25)
    assert shell_potential_oracle(3, 2.0, (0, 2.0, 0)) == pytest.approx(0.5)
    with pytest.raises(KernelError):
        shell_potential_oracle(2, 1.0, (0, 0))


def test_symmetry_bit_exact_random_pairs():
    rng = np.random.default_rng(7)
    for spec in (KernelSpec.newtonian(3, 0.05), KernelSpec.riesz(0.7, 3), KernelSpec.riesz(1.3, 3, 0.2)):
        X, Y = rng.normal(size=(1000, 3)), rng.normal(size=(1000, 3))
        a = np.array([eval_kernel(spec, x, y) for x, y in zip(X, Y)])
        b = np.array([eval_kernel(spec, y, x) for x, y in zip(X, Y)])
        assert np.array_equal(a, b)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(0.05, 3.0), st.floats(0.1, 2.9))
def test_smoothing_monotone(e1, e2, r, alpha):
    lo, hi = sorted((e1, e2))
    k_lo = eval_kernel(KernelSpec.riesz(alpha, 3, lo), (0, 0, 0), (r, 0, 0))
    k_hi = eval_kernel(KernelSpec.riesz(alpha, 3, hi), (0, 0, 0), (r, 0, 0))
    assert k_hi <= k_lo


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 25), st.floats(0.05, 1.0), st.integers(0, 10_000))
def test_positive_definite_random_clouds(n, eps, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, size=(n, 3))
    K = assemble_matrix(KernelSpec.newtonian(3, eps), pts)
    assert K.pd_certified
    v = rng.normal(size=n)
    assert v @ (K.entries @ v) > 0


def test_shell_potential_converges_under_refinement():
    probes = np.array([[0, 0, 0.3], [0.2, 0.1, 0.0], [0, 0, 3.0], [2.0, 1.0, 0.5]])
    exact = np.array([shell_potential_oracle(3, 1.0, p) for p in probes])
    errs = []
    for n in (100, 400, 1600):
        pts = fibonacci_sphere(n)
        pot = kernel_block(KernelSpec.newtonian(3), probes, pts).mean(axis=1)
        errs.append(np.max(np.abs(pot - exact)))
    assert errs[1] < errs[0] / 2 and errs[2] < errs[1] / 2
