import os

import numpy as np
import pytest

from mtc.curves import MonotoneProfile, increasing_family, monotone_curve, segment_curve, staircase_curve
from mtc.gramian import (
    Subspace,
    curve_gramian,
    im_gramian_space,
    image_subspace,
    intersect_subspaces,
    kernel_vanishing,
    largest_principal_angle,
    matrix_to_csv,
    path_independence_check,
    reversal_check,
    thread_count,
    w_flow_check,
)

SEG = segment_curve((0, 0), (1, 1))
E = np.eye(3)


def test_zero_input_gramian(zero_n):
    g = curve_gramian(zero_n, SEG)
    assert np.array_equal(g.matrix, np.zeros((2, 2)))
    assert g.rank() == 0


def test_t2_identity_segment_gramian(sys4a):
    g = curve_gramian(sys4a, SEG)
    assert np.max(np.abs(g.matrix - np.eye(2) / 3)) < 1e-9
    assert g.rank() == 2


def test_unit_inputs_segment_gramian(sys7):
    assert np.max(np.abs(curve_gramian(sys7, SEG).matrix - np.eye(2))) < 1e-12


def test_gramian_against_quadrature_oracle(sys4a):
    # Profile (tau^3, tau^0.5): C = int_0^1 tau * 3 tau^2 dtau I = 3/4 I.
    c = monotone_curve((0, 0), (1, 1), MonotoneProfile.pure((3, 0.5)))
    assert np.max(np.abs(curve_gramian(sys4a, c).matrix - 0.75 * np.eye(2))) < 1e-9


def test_symmetric_and_psd_on_increasing_curves(oscillator, nilpotent, sys4a, sys7, degenerate):
    for system in (oscillator, nilpotent, sys4a, sys7, degenerate):
        for c in increasing_family((0, 0), (1, 1), 4, seed=9):
            g = curve_gramian(system, c)
            assert g.symmetry_residual < 1e-10
            assert np.array_equal(g.matrix, g.matrix.T)
            assert g.min_eigenvalue >= -1e-9


def test_reversal_identity(sys4a, sys7, zero_n, oscillator):
    assert reversal_check(zero_n, SEG).residual == 0.0
    assert reversal_check(sys4a, SEG).residual < 1e-8
    assert reversal_check(sys7, segment_curve((0.2, -1), (3, 0))).residual < 1e-8
    c = monotone_curve((0, 0), (1.5, 1), MonotoneProfile((0.2, 0.6), (2, 3)))
    rep = reversal_check(oscillator, c)
    assert rep.residual < 1e-8 and rep.ranks_match


def test_image_subspace_thresholds():
    assert image_subspace(np.zeros((2, 2))).dim == 0
    full = image_subspace(np.eye(2) / 3)
    assert full.dim == 2 and full.orthonormality_error() < 1e-15
    tiny = image_subspace(np.diag([1.0, 1e-16]), sigma_tol=1e-10)
    assert tiny.dim == 1 and abs(abs(tiny.basis[0, 0]) - 1) < 1e-15
    assert image_subspace(-np.eye(2)).dim == 2


def test_intersections():
    assert intersect_subspaces([Subspace.full(2)]).dim == 2
    assert intersect_subspaces([Subspace.span(E[:2, :1]), Subspace.span(E[:2, 1:2])]).dim == 0
    s = intersect_subspaces([Subspace.span(E[:, :2]), Subspace.span(E[:, 1:])])
    assert s.dim == 1 and np.allclose(np.abs(s.basis[:, 0]), E[1])
    assert intersect_subspaces([], n=3).vacuous


def test_principal_angle():
    assert largest_principal_angle(Subspace.zero(2), Subspace.zero(2)) == 0.0
    assert largest_principal_angle(Subspace.full(2), Subspace.span(E[:2, :1])) == pytest.approx(np.pi / 2)
    tilted = Subspace.span(np.array([[1.0], [1.0]]))
    assert largest_principal_angle(tilted, Subspace.span(E[:2, :1])) == pytest.approx(np.pi / 4)


def test_w_estimates(sys4a, zero_n, sys7):
    assert im_gramian_space(sys4a, (0, 0), (1, 1), count=4, seed=1).dim == 2
    assert im_gramian_space(zero_n, (0, 0), (1, 1), count=2, seed=1).dim == 0
    est = im_gramian_space(sys7, (0, 0), (1, 1), count=4, seed=5)
    assert est.dim == 2 and all(r == 2 for r in est.ranks)
    assert est.as_dict()["curves"][0]["curve_id"] == "monotone-000"


def test_w_estimate_deterministic(oscillator):
    a = im_gramian_space(oscillator, (0, 0), (1, 2), count=3, seed=4).as_dict()
    b = im_gramian_space(oscillator, (0, 0), (1, 2), count=3, seed=4).as_dict()
    assert a == b


def test_w_estimate_equal_endpoints_warns(sys7):
    with pytest.warns(UserWarning):
        assert im_gramian_space(sys7, (1, 1), (1, 1)).dim == 0


def test_w_flow(sys4a, zero_n, nilpotent):
    assert w_flow_check(sys4a, (0, 0), (1, 1), count=2, seed=0) < 1e-8
    assert w_flow_check(zero_n, (0, 0), (1, 1), count=2, seed=0) == 0.0
    assert w_flow_check(nilpotent, (0, 0), (1, 1), count=2, seed=0) < 1e-6


def test_path_independence(sys7, sys4a, oscillator):
    assert path_independence_check(sys7, [SEG, staircase_curve((0, 0), (1, 1))]) < 1e-8
    assert path_independence_check(sys4a, [SEG]) == 0.0
    profile = monotone_curve((0, 0), (1, 1), MonotoneProfile.pure((1, 2)))
    assert path_independence_check(sys4a, [SEG, profile]) == pytest.approx(2 / 15, abs=1e-9)
    fam = increasing_family((0, 0), (1, 1), 3, seed=2) + [staircase_curve((0, 0), (1, 1))]
    assert path_independence_check(oscillator, fam) < 1e-8
    with pytest.raises(ValueError):
        path_independence_check(sys7, [SEG, segment_curve((0, 0), (2, 1))])


def test_kernel_directions_vanish(degenerate, zero_n):
    assert kernel_vanishing(degenerate, SEG) < 1e-12
    assert kernel_vanishing(zero_n, SEG) == 0.0


def test_thread_cap(monkeypatch, sys4a):
    monkeypatch.setenv("MTC_THREADS", "1")
    assert thread_count() == 1
    one = im_gramian_space(sys4a, (0, 0), (1, 1), count=3, seed=8)
    monkeypatch.setenv("MTC_THREADS", "4")
    four = im_gramian_space(sys4a, (0, 0), (1, 1), count=3, seed=8)
    assert one.as_dict() == four.as_dict()


def test_csv_output():
    text = matrix_to_csv(np.array([[1 / 3, 0.0], [0.0, 1.0]]))
    assert text.splitlines()[0] == "0.33333333333333331,0"
