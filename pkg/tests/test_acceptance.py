"""Acceptance checks, one test per numbered criterion.

Each test records a PASS/FAIL line that is shown in the pytest terminal summary.
The benchmark fixture trains the full-size model once (about 4 minutes on one CPU).
"""
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import rosen, rosen_der

from motionopt import benchmark
from motionopt.cli import main
from motionopt.dataio import generate_synthetic
from motionopt.evaluation import EvalSample, build_eval_samples, evaluate, interp_wrist_predict
from motionopt.gru import backprop_params, init_model, rollout
from motionopt.kinematics import Joint, Skeleton, default_skeleton, fk_jacobian, forward_kinematics, make_state
from motionopt.lbfgs import LbfgsConfig, lbfgs_minimize
from motionopt.statespace import wrap_diff, wraparound_loss
from motionopt.trajopt import GoalConstraint, cost_V, grad_V, predict_optimized

INSTANCES = 100


def random_instance(seed):
    """Small chain skeleton (state dim 6, 9 or 12), random model, context, offsets and goal."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    joints = [Joint("j0", None, (0.0, 0.0, 0.0))]
    joints += [Joint(f"j{i}", i - 1, tuple(rng.normal(size=3) * 0.3)) for i in range(1, n)]
    skel = Skeleton(tuple(joints), {"tip": n - 1})
    anchored = bool(rng.integers(0, 2))
    m = init_model(skel.state_dim, int(rng.integers(2, 17)), seed=seed, anchored=anchored,
                   input_scale=float(rng.uniform(0.5, 3.0)) if anchored else 1.0)
    flat = m.params.flatten()
    m = m.with_params(m.params.unflatten(flat + rng.normal(size=flat.size) * 0.1))
    obs = rng.normal(size=(int(rng.integers(1, 6)), skel.state_dim)) * 0.5
    horizon = int(rng.integers(1, 9))
    delta = rng.normal(size=(horizon, skel.state_dim)) * 0.1
    goal = GoalConstraint(n - 1, tuple(rng.normal(size=3)), float(rng.uniform(1.0, 100.0)))
    return skel, m, obs, delta, goal, rng


def rel_error(ana, num):
    return float(np.max(np.abs(ana - num)) / max(np.max(np.abs(num)), 1e-12))


def test_criterion_01_trajopt_gradient_exact(report):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(INSTANCES):
        skel, m, obs, delta, goal, _ = random_instance(seed)
        ana = grad_V(m, obs, delta, goal, skel)
        num = np.empty_like(delta)
        eps = 1e-6
        for idx in np.ndindex(delta.shape):
            a, b = delta.copy(), delta.copy()
            a[idx] += eps
            b[idx] -= eps
            num[idx] = (cost_V(m, obs, a, goal, skel) - cost_V(m, obs, b, goal, skel)) / (2 * eps)
        worst = max(worst, rel_error(ana, num))
    secs = time.perf_counter() - t0
    assert report(1, worst <= 1e-4 and secs < 60,
                  f"offset gradient vs central differences on {INSTANCES} instances: "
                  f"worst rel error {worst:.2e} (<= 1e-4), {secs:.1f} s")


def test_criterion_02_bptt_exact(report):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(INSTANCES):
        skel, m, obs, delta, _, rng = random_instance(seed)
        w = rng.normal(size=delta.shape)

        def loss(model):
            return float(np.sum(w * rollout(model, obs, len(delta), delta)[0].states))

        _, cache = rollout(m, obs, len(delta), delta)
        ana = backprop_params(m, cache, w).flatten()
        flat = m.params.flatten()
        num = np.empty_like(flat)
        eps = 1e-6
        for i in range(flat.size):
            a, b = flat.copy(), flat.copy()
            a[i] += eps
            b[i] -= eps
            num[i] = (loss(m.with_params(m.params.unflatten(a)))
                      - loss(m.with_params(m.params.unflatten(b)))) / (2 * eps)
        worst = max(worst, rel_error(ana, num))
    secs = time.perf_counter() - t0
    assert report(2, worst <= 1e-4 and secs < 60,
                  f"parameter gradient vs central differences on {INSTANCES} instances: "
                  f"worst rel error {worst:.2e} (<= 1e-4), {secs:.1f} s")


def test_criterion_03_forward_kinematics(report):
    skel = Skeleton((Joint("root", None, (0, 0, 0)), Joint("elbow", 0, (1.0, 0, 0)), Joint("hand", 1, (0.7, 0, 0))))
    rng = np.random.default_rng(0)
    worst_exact = 0.0
    for _ in range(100):
        t1, t2 = rng.uniform(-np.pi, np.pi, size=2)
        base = rng.normal(size=3)
        pos = forward_kinematics(skel, make_state(base, [[0, 0, t1], [0, 0, t2], [0, 0, 0]]))
        elbow = base + [np.cos(t1), np.sin(t1), 0.0]
        hand = elbow + 0.7 * np.array([np.cos(t1 + t2), np.sin(t1 + t2), 0.0])
        worst_exact = max(worst_exact, np.max(np.abs(pos[1:] - [elbow, hand])))
    full = default_skeleton()
    worst_jac = 0.0
    eps = 1e-6
    for i in range(100):
        state = rng.normal(size=full.state_dim) * 0.5
        joint = int(rng.integers(0, full.num_joints))
        ana = fk_jacobian(full, state, joint)
        num = np.empty_like(ana)
        for k in range(state.size):
            e = np.zeros_like(state)
            e[k] = eps
            num[:, k] = (forward_kinematics(full, state + e)[joint] - forward_kinematics(full, state - e)[joint]) / (2 * eps)
        worst_jac = max(worst_jac, float(np.max(np.abs(ana - num))))
    assert report(3, worst_exact <= 1e-12 and worst_jac <= 1e-5,
                  f"planar two-link max error {worst_exact:.1e} (<= 1e-12); "
                  f"Jacobian vs differences on 100 states {worst_jac:.1e} (<= 1e-5)")


_wrap_checks = {"n": 0, "worst_shift": 0.0, "worst_abs": 0.0}
angles = arrays(np.float64, 9, elements=st.floats(-50, 50, allow_nan=False))


@settings(max_examples=1000, derandomize=True, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(angles, angles, arrays(np.int64, 9, elements=st.integers(-5, 5)))
def _wrap_property(a, b, k):
    pred = np.concatenate([[0.1, 0.2, 0.3], a])
    shifted = np.concatenate([[0.1, 0.2, 0.3], a + 2 * np.pi * k])
    _wrap_checks["n"] += 1
    _wrap_checks["worst_shift"] = max(_wrap_checks["worst_shift"], wraparound_loss(shifted[None], pred[None]))
    d = wrap_diff(a, b)
    _wrap_checks["worst_abs"] = max(_wrap_checks["worst_abs"], float(np.max(np.abs(d))))
    assert wraparound_loss(shifted[None], pred[None]) <= 1e-24
    assert np.all(np.abs(d) <= np.pi)
    np.testing.assert_allclose(np.cos(d), np.cos(a - b), atol=1e-9)


def test_criterion_04_wraparound(report):
    ok = True
    try:
        _wrap_property()
    except AssertionError:
        ok = False
    assert report(4, ok and _wrap_checks["n"] >= 1000,
                  f"{_wrap_checks['n']} random pairs: loss under 2pi shifts <= {_wrap_checks['worst_shift']:.1e}, "
                  f"max |wrap_diff| {_wrap_checks['worst_abs']:.4f} (<= pi)")


def test_criterion_05_zero_offsets_bitwise(report):
    mismatches = 0
    for seed in range(50):
        skel, m, obs, delta, _, _ = random_instance(1000 + seed)
        plain, _ = rollout(m, obs, len(delta))
        zero, _ = rollout(m, obs, len(delta), np.zeros_like(delta))
        mismatches += not np.array_equal(plain.states, zero.states)
    assert report(5, mismatches == 0, f"zero schedule vs plain prediction on 50 models: {mismatches} mismatches")


@pytest.fixture(scope="module")
def bench():
    skel = default_skeleton()
    run = benchmark.run_benchmark(skel, seed=0)
    trajs, reaches = generate_synthetic(benchmark.synthetic_config(0), skel)
    cfg = benchmark.train_config(0)
    samples = build_eval_samples(trajs[benchmark.TRAIN_COUNT:], reaches[benchmark.TRAIN_COUNT:],
                                 cfg.context_frames, benchmark.LEAD_FRAMES)
    return skel, run, samples


def test_criterion_06_anytime_improvement(bench, report):
    skel, run, samples = bench
    violations = sum(r.final_cost > r.initial_cost for r in run.results)
    assert report(6, violations == 0 and len(run.results) == len(samples) == 10,
                  f"final cost <= cost at zero offsets on {len(run.results)} test reaches: {violations} violations")


def test_criterion_07_goal_satisfaction(bench, report):
    skel, run, samples = bench
    ratios, errs, times = [], [], []
    for s in samples:
        plain, _ = rollout(run.model, s.observed, 24)
        plain_err = np.linalg.norm(forward_kinematics(skel, plain.states[-1])[s.end_effector] - s.goal)
        t0 = time.perf_counter()
        res = predict_optimized(run.model, s.observed, 24, GoalConstraint(s.end_effector, s.goal, 100.0), skel)
        times.append(time.perf_counter() - t0)
        err = np.linalg.norm(forward_kinematics(skel, res.trajectory.states[-1])[s.end_effector] - s.goal)
        errs.append(err)
        ratios.append(err / plain_err)
    ok = max(ratios) <= 0.1 and max(errs) <= 0.01 and run.train_seconds <= 600 and max(times) <= 5
    assert report(7, ok, f"final wrist error max {max(errs) * 100:.3f} cm (<= 1 cm), "
                         f"max {max(ratios) * 100:.2f}% of plain GRU (<= 10%); training {run.train_seconds:.0f} s "
                         f"(<= 600), optimization max {max(times):.2f} s per trajectory (<= 5)")


def test_criterion_08_method_ordering(bench, report):
    _, run, _ = bench
    t = run.table
    zv, gru, ours = (np.array(t.row(f"{n} (b)")) for n in ("Zerovel", "GRU", "Ours"))
    late = np.array(t.horizons) >= 750
    bad = [f"{h:g} ms" for h, a, b, c in zip(t.horizons, zv, gru, ours) if not a >= b >= c]
    ok = not bad and bool(np.all(gru[late] < zv[late]))
    detail = ", ".join(f"{h:g}: {a:.3f}/{b:.3f}/{c:.3f}" for h, a, b, c in zip(t.horizons, zv, gru, ours))
    assert report(8, ok, f"body error Zerovel/GRU/Ours {detail}"
                         + (f"; ordering violated at {', '.join(bad)}" if bad else ""))


def test_criterion_09_interp_exact(bench, report):
    skel, _, samples = bench
    exact = []
    for s in samples:
        goal = tuple(forward_kinematics(skel, s.truth.states)[-1, s.end_effector])
        exact.append(EvalSample(s.observed, s.truth, s.end_effector, goal))
    interp = lambda s: interp_wrist_predict(s.observed, len(s.truth), skel, s.end_effector, s.goal)  # noqa: E731
    table = evaluate(exact, [("Interp (w)", interp)], skel, joints=[samples[0].end_effector])
    final = float(table.row("Interp (w)")[-1])
    assert report(9, final == 0.0, f"interpolation final wrist error at 1000 ms: {final!r}")


def test_criterion_10_lbfgs(report):
    worst_q, iters_q = 0.0, 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(4, 4))
        A = M @ M.T + 4 * np.eye(4)
        b = rng.normal(size=4)
        res = lbfgs_minimize(lambda x: (0.5 * x @ A @ x - b @ x, A @ x - b), np.zeros(4),
                             LbfgsConfig(grad_tol=1e-10, max_iters=10))
        worst_q = max(worst_q, float(np.max(np.abs(res.x - np.linalg.solve(A, b)))))
        iters_q = max(iters_q, res.iterations)
    ros = lbfgs_minimize(lambda x: (rosen(x), rosen_der(x)), np.array([-1.2, 1.0]),
                         LbfgsConfig(max_iters=200, grad_tol=1e-9))
    ros_err = float(np.max(np.abs(ros.x - 1.0)))
    monotone = True
    for x0 in (np.array([-1.2, 1.0]), np.array([2.0, 2.0, -1.0, 0.5]), np.full(6, -0.5)):
        hist = np.array(lbfgs_minimize(lambda x: (rosen(x), rosen_der(x)), x0, LbfgsConfig(max_iters=200)).history)
        monotone &= bool(np.all(np.diff(hist) <= 0))
    ok = worst_q <= 1e-8 and iters_q <= 10 and ros_err <= 1e-6 and ros.iterations <= 200 and monotone
    assert report(10, ok, f"quadratic error {worst_q:.1e} in <= {iters_q} iterations; Rosenbrock error {ros_err:.1e} "
                          f"in {ros.iterations} iterations; monotone iterates {monotone}")


def test_criterion_11_reproducible_pipeline(tmp_path, report):
    def run(root):
        assert main(["gen-data", "--out", str(root / "data"), "--num-trajectories", "5", "--train-count", "3",
                     "--seed", "7"]) == 0
        assert main(["train", "--data", str(root / "data"), "--out", str(root / "model.json"), "--seed", "7",
                     "--epochs", "2", "--hidden", "8", "--stride", "6"]) == 0
        assert main(["evaluate", "--model", str(root / "model.json"), "--data", str(root / "data"),
                     "--out", str(root / "table.csv")]) == 0
        return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}

    a, b = run(tmp_path / "a"), run(tmp_path / "b")
    differ = sorted(k for k in a if a[k] != b.get(k))
    ok = a.keys() == b.keys() and not differ
    assert report(11, ok, f"gen-data/train/evaluate twice with seed 7: {len(a)} artifacts, "
                          f"{len(differ)} differ" + (f" ({', '.join(differ)})" if differ else ""))
