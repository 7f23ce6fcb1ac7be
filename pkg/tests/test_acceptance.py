"""Acceptance criteria, one test and one printed PASS/FAIL line each."""
import math
import time

import numpy as np
from scipy.linalg import expm

from mtc.control import (
    NO_MINIMUM,
    UNIQUE_MINIMUM,
    FunctionalSpec,
    descent_phi,
    extended_functional,
    functional_value,
    functional_value_dual,
    minimize_functional,
    plan_transfer,
    verify_transfer,
)
from mtc.curves import (
    MonotoneProfile,
    increasing_family,
    monotone_curve,
    segment_curve,
    staircase_curve,
)
from mtc.demos import builtin_systems, load_builtin_system
from mtc.expressions import matrix_from_rows
from mtc.gramian import (
    Subspace,
    curve_gramian,
    im_gramian_space,
    kernel_vanishing,
    largest_principal_angle,
    path_independence_check,
    reversal_check,
)
from mtc.propagator import Phase, PropagatorConfig, compose_check, fundamental_matrix, solve_state
from mtc.system import check_control, check_II6, load_control

A = np.array([[0.0, 1.0], [0.0, 0.0]])
B = np.array([[0.0, 1.0], [-1.0, 0.0]])
SEG = segment_curve((0, 0), (1, 1))


def _random_box(rng):
    t0 = rng.uniform(-2, 2, size=2)
    return t0, t0 + rng.uniform(0.2, 3, size=2)


def test_c1_unit_input_closed_form_minimum(sys7, criterion):
    start = time.perf_counter()
    res = minimize_functional(FunctionalSpec(curve_gramian(sys7, SEG), [1, 2]))
    errs = [np.max(np.abs(res.v0 - [1, 2])), abs(res.value + 5)]
    ok = res.status == UNIQUE_MINIMUM
    rng = np.random.default_rng(101)
    for _ in range(20):
        t0, t = _random_box(rng)
        a, b = rng.normal(size=2) * 2
        d = t - t0
        r = minimize_functional(FunctionalSpec(curve_gramian(sys7, segment_curve(t0, t)), [a, b]))
        ok &= r.status == UNIQUE_MINIMUM
        errs += [np.max(np.abs(r.v0 - [a / d[0], b / d[1]])),
                 abs(r.value - (-a * a / d[0] - b * b / d[1]))]
    elapsed = time.perf_counter() - start
    err = max(errs)
    criterion(1, "closed-form minimum", ok and err < 1e-8 and elapsed < 1,
              f"v0=(1,2) value=-5 plus 20 random cases, max|delta|={err:.2e} (<1e-8), {elapsed:.2f}s (<1s)")


def test_c2_unbounded_extension(sys7, criterion):
    start = time.perf_counter()
    qs = [1, 10, 100]
    J = [extended_functional(sys7, SEG, (1, 2), descent_phi(q, 1, 2, (0, 0))) for q in qs]
    ref = [9 * math.atan(2 * q) - 18 * math.sqrt(q) for q in qs]
    Jm = [extended_functional(sys7, SEG, (1.5, -1.5), descent_phi(q, 1.5, -1.5, (0, 0))) for q in qs]
    refm = [2.25 * math.atan(2 * q) - 9 * math.sqrt(q) for q in qs]
    err = max(abs(x - y) for x, y in zip(J + Jm, ref + refm))
    decreasing = J[2] < J[1] < J[0] and Jm[2] < Jm[1] < Jm[0]
    elapsed = time.perf_counter() - start
    criterion(2, "unbounded extension", err < 1e-6 and decreasing and elapsed < 2,
              f"J(1,10,100)=({J[0]:.6f}, {J[1]:.6f}, {J[2]:.6f}), b=-a variant too, "
              f"max|delta|={err:.2e} (<1e-6), decreasing={decreasing}, {elapsed:.2f}s (<2s)")


def test_c3_case_a(sys4a, criterion):
    fam = increasing_family((0, 0), (1, 1), 4, seed=7)
    gs = [curve_gramian(sys4a, c) for c in fam]
    ranks = [g.rank() for g in gs]
    min_eig = min(g.min_eigenvalue for g in gs)
    seg_err = np.max(np.abs(curve_gramian(sys4a, SEG).matrix - np.eye(2) / 3))
    W = im_gramian_space(sys4a, (0, 0), (1, 1), curves=fam)
    gap = largest_principal_angle(W.subspace, Subspace.full(2))
    c = -0.75
    u = load_control({"u": [[str(c), str(c)], ["0", "0"]]}, sys4a)
    res = check_control(sys4a, u).max_abs_residual
    ok = (len(fam) == 5 and ranks == [2] * 5 and min_eig > 1e-6 and seg_err < 1e-9
          and W.dim == 2 and gap == 0 and res >= abs(c) - 1e-9)
    criterion(3, "case a gramians, W and inadmissible constants", ok,
              f"ranks={ranks} min eig={min_eig:.3f} (>1e-6), |C_seg - I/3|={seg_err:.1e} (<1e-9), "
              f"dim W={W.dim} gap={gap}, constant-control residual={res} (>=|c|={abs(c)})")


def test_c4_case_b(sys4b, criterion):
    t0, t = np.array([-0.5, 0.25]), np.array([1.5, 2.0])
    dt = t[0] - t0[0]
    rng = np.random.default_rng(404)
    residual, err = 0.0, 0.0
    for _ in range(10):
        v = rng.normal(size=2) * 3
        u1 = [f"({float(v[0] / dt)!r})/t2", f"({float(v[1] / dt)!r})/t2"]
        u = load_control({"u": [u1, ["0", "0"]]}, sys4b)
        residual = max(residual, check_control(sys4b, u).max_abs_residual)
        x0 = rng.normal(size=2)
        x = solve_state(sys4b, u, Phase(t0, x0), segment_curve(t0, t))
        err = max(err, np.max(np.abs(x - x0 - v)))
    criterion(4, "case b admissible control reaches v", residual < 1e-9 and err < 1e-7,
              f"admissibility residual={residual:.1e} (<1e-9), max|increment - v|={err:.1e} (<1e-7) over 10 v")


def test_c5_fundamental_matrix(nilpotent, oscillator, criterion):
    still = segment_curve((0.3, 0.8), (0.3, 0.8))
    identity = all(np.array_equal(fundamental_matrix(s, still), np.eye(2)) for s in (nilpotent, oscillator))
    comp = max(compose_check(nilpotent, (0, 0), (0.3, 0.7), (1, 1)),
               compose_check(oscillator, (0, 0), (0.3, 0.7), (1, 1.2)))
    nil_errs = [np.max(np.abs(fundamental_matrix(nilpotent, SEG, PropagatorConfig(s, s)) - expm(3 * A)))
                for s in (8, 16, 32, 64, 256)]
    osc_errs = [np.max(np.abs(fundamental_matrix(oscillator, SEG, PropagatorConfig(s, s)) - expm(2 * B)))
                for s in (8, 16, 32, 64)]
    ratios = [a / b for a, b in zip(osc_errs, osc_errs[1:])]
    ok = identity and comp < 1e-8 and max(nil_errs) < 1e-10 and min(ratios) >= 8
    criterion(5, "fundamental matrix", ok,
              f"chi(s,s)=I exact={identity}, composition={comp:.1e} (<1e-8), "
              f"nilpotent vs expm={max(nil_errs):.1e} (<1e-10, exact at every step count), "
              f"RK4 doubling ratios on the rotation demo={[round(float(r), 1) for r in ratios]} (>=8)")


def test_c6_gramian_properties(criterion):
    systems = [load_builtin_system(name) for name in builtin_systems()]
    sym, min_eig, rev, indep = 0.0, math.inf, 0.0, 0.0
    for s in systems:
        t0, t = ((0, 0.5), (1, 1.5)) if s.name == "sys4b" else ((0, 0), (1, 1))
        fam = increasing_family(t0, t, 3, seed=12)
        for c in fam:
            g = curve_gramian(s, c)
            sym = max(sym, g.symmetry_residual)
            min_eig = min(min_eig, g.min_eigenvalue)
            rev = max(rev, reversal_check(s, c).residual)
        if check_II6(s).passed:
            indep = max(indep, path_independence_check(s, fam + [staircase_curve(t0, t)]))
    sys4a = load_builtin_system("sys4a")
    pair = path_independence_check(sys4a, [SEG, monotone_curve((0, 0), (1, 1), MonotoneProfile.pure((1, 2)))])
    ok = sym < 1e-10 and min_eig >= -1e-9 and rev < 1e-8 and indep < 1e-8 and pair > 1e-3
    criterion(6, "gramian properties", ok,
              f"symmetry={sym:.1e} (<1e-10), min eig={min_eig:.1e} (>=-1e-9), reversal={rev:.1e} (<1e-8), "
              f"path independence (II6 systems)={indep:.1e} (<1e-8), case-a profile pair={pair:.4f} (>1e-3)")


def test_c7_duality_and_optimality(criterion):
    rng = np.random.default_rng(707)
    systems = [load_builtin_system(n) for n in ("oscillator", "nilpotent", "sys4a", "sys7", "degenerate")]
    dual = 0.0
    for _ in range(10):
        s = systems[rng.integers(len(systems))]
        curve = increasing_family((0, 0), tuple(rng.uniform(0.3, 1.5, size=2)), 1,
                                  seed=int(rng.integers(10**6)))[-1]
        v, x0 = rng.normal(size=2), rng.normal(size=2)
        primal = functional_value(FunctionalSpec(curve_gramian(s, curve), x0), v)
        dual = max(dual, abs(primal - functional_value_dual(s, curve, x0, v)))

    spec = FunctionalSpec(curve_gramian(systems[0], SEG), rng.normal(size=2))
    best = minimize_functional(spec)
    beaten = sum(functional_value(spec, best.v0 + 1e-3 * rng.normal(size=2)) <= best.value
                 for _ in range(100))

    deg = FunctionalSpec(curve_gramian(systems[4], SEG), [0.4, -1.0])
    res = minimize_functional(deg)
    descent = functional_value(deg, 1e6 * res.orthogonal_part)

    agree = 0
    for i in range(20):
        g = curve_gramian(systems[i % len(systems)], SEG)
        rank = g.rank()
        x0 = g.matrix @ rng.normal(size=2) if rng.random() < 0.5 else rng.normal(size=2)
        r = minimize_functional(FunctionalSpec(g, x0))
        agree += (r.status == UNIQUE_MINIMUM) == (rank == 2)
    ok = dual < 1e-7 and beaten == 0 and res.status == NO_MINIMUM and descent < -1e5 and agree == 20
    criterion(7, "duality and optimality", ok,
              f"primal/dual={dual:.1e} (<1e-7), perturbations not worse than minimum={beaten}/100, "
              f"F(1e6 x0perp)={descent:.2e} (<-1e5), rank-n <=> unique agreement {agree}/20")


def test_c8_transfer_end_to_end(sys7, oscillator, criterion):
    rng = np.random.default_rng(808)
    worst_err, worst_time = 0.0, 0.0
    for s in (sys7, oscillator):
        assert check_II6(s).passed
        for _ in range(10):
            t0, t = _random_box(rng)
            x0, y = rng.normal(size=2) * 2, rng.normal(size=2) * 2
            start = time.perf_counter()
            plan = plan_transfer(s, t0, x0, t, y)
            err = verify_transfer(s, plan) if plan.feasible else math.inf
            worst_time = max(worst_time, time.perf_counter() - start)
            worst_err = max(worst_err, err)
    criterion(8, "transfer end to end", worst_err < 1e-6 and worst_time < 5,
              f"20 random pairs on two II6-passing full-rank systems, max error={worst_err:.1e} (<1e-6), "
              f"slowest pair {worst_time:.2f}s (<5s)")


def test_c9_kernel_directions(criterion):
    worst, kernels = 0.0, 0
    for name in builtin_systems():
        s = load_builtin_system(name)
        t0, t = ((0, 0.5), (1, 1.5)) if name == "sys4b" else ((0, 0), (1, 1))
        for c in increasing_family(t0, t, 3, seed=99):
            if curve_gramian(s, c).rank() < s.n:
                kernels += 1
            worst = max(worst, kernel_vanishing(s, c))
    criterion(9, "kernel directions annihilate the inputs", worst < 1e-6 and kernels > 0,
              f"max |v^T chi N_a| over kernel vectors={worst:.1e} (<1e-6), {kernels} rank-deficient gramians probed")
