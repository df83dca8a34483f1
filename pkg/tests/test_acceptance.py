"""End-to-end acceptance criteria 1-13.

Each test records one PASS/FAIL line (printed in the terminal summary) and
then asserts. Tolerances and runtime budgets are the stated ones; nothing is
relaxed to make a criterion pass.
"""

import filecmp
import math
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from qfe.baseline import fit_gate_count_regressor
from qfe.dataset import DatasetConfig, build_dataset, split_dataset
from qfe.evaluation import (
    kendall_tau,
    kendall_tau_bruteforce,
    threshold_score_curve,
    wilson_interval,
)
from qfe.lattice import (
    CLIFFORD_PALETTE,
    FULL_PALETTE,
    Tiling,
    clifford_reducible_circuit,
    encode_one_hot,
    gate_count_features,
    random_circuit,
    reduce_to_clifford,
    tiled_circuit,
)
from qfe.nn import NetworkSpec, SgdConfig, build_network, cnn3d_spec, gradient_check, lc2d_spec, train_sgd
from qfe.noise import SimNoiseModel, compile_noisy_program, crosstalk_unitary, depolarizing_kraus
from qfe.pipeline import REGIMES, ReportConfig, run_report
from qfe.simulator import (
    exact_fidelity,
    fidelity_pure,
    simulate_density,
    simulate_ideal,
    simulate_trajectories,
    tiled_fidelity,
)


def _record(n, ok, detail, elapsed, budget):
    in_time = elapsed <= budget
    status = "PASS" if ok and in_time else "FAIL"
    ACCEPTANCE[n] = f"criterion {n:2d}: {status}  {detail}  [{elapsed:.1f}s / {budget:.0f}s]"
    print(ACCEPTANCE[n])
    assert ok, detail
    assert in_time, f"runtime {elapsed:.1f}s exceeds {budget}s"


def test_criterion_01_architecture_parity():
    t = time.time()
    lc = [r[2] for r in lc2d_spec().summary()]
    cn = [r[2] for r in cnn3d_spec().summary()]
    lc_rows = [0, 0, 13568, 4352, 4352, 272, 0, 1088, 4160, 65]
    cn_rows = [48050, 160050, 160050, 0, 7500500, 250500, 250500, 250500, 25050, 51, 2]
    ok = lc == lc_rows and cn == cn_rows and sum(lc) == 27857 and sum(cn) == 8645253
    _record(1, ok, f"lc2d-3x3 {sum(lc)}, cnn3d {sum(cn)}", time.time() - t, 1)


def _kind_specs():
    return {
        "dense": NetworkSpec((6,), [("dense", {"units": 5}), ("dense", {"units": 1, "activation": "linear"})]),
        "lc2d": NetworkSpec((4, 4, 3), [("lc2d", {"filters": 3, "kernel": [2, 2]}), ("flatten", {}),
                                        ("dense", {"units": 1, "activation": "linear"})]),
        "conv3d": NetworkSpec((3, 3, 3, 2), [("conv3d", {"filters": 3, "kernel": [4, 4, 4]}), ("flatten", {}),
                                             ("dense", {"units": 1, "activation": "linear"})]),
        "reshape+zeropad2d+flatten": NetworkSpec((27,), [("reshape", {"target": [3, 3, 3]}), ("zeropad2d", {"pad": 1}),
                                                         ("lc2d", {"filters": 2, "kernel": [2, 2]}), ("flatten", {}),
                                                         ("dense", {"units": 1, "activation": "linear"})]),
    }


def test_criterion_02_gradient_correctness():
    t = time.time()
    rng = np.random.default_rng(0)
    errs = {}
    nets = {k: build_network(s, seed=1) for k, s in _kind_specs().items()}
    nets["lc2d-3x3"] = build_network("lc2d-3x3", seed=1)
    nets["cnn3d (reduced channels)"] = build_network("cnn3d", seed=1, input_shape=(12, 3, 3, 15), filters=4,
                                                     hidden=8, narrow=6)
    for name, net in nets.items():
        x = rng.normal(size=(3,) + tuple(net.spec.input_shape))
        y = rng.random(3)
        errs[name] = gradient_check(net, x, y, h=1e-6, n_coords=200)
    worst = max(errs.values())
    _record(2, worst < 1e-4, f"worst rel err {worst:.2e} over {len(errs)} networks", time.time() - t, 300)


def test_criterion_03_channel_inference():
    t = time.time()
    c = random_circuit(3, 3, 12, FULL_PALETTE, 0.3, seed=3)
    channels = encode_one_hot(c, FULL_PALETTE).shape[-1]
    first = cnn3d_spec(input_shape=(12, 5, 5, channels)).summary()[0][2]
    ok = channels == 15 and first == 4**3 * 15 * 50 + 50 == 48050
    _record(3, ok, f"{channels} channels, first conv {first} params", time.time() - t, 60)


def test_criterion_04_noise_oracles():
    t = time.time()
    rho = np.diag([1.0, 0.0]).astype(complex)
    d1 = sum(k @ rho @ k.conj().T for k in depolarizing_kraus(1, 0.01))
    a = np.abs(d1 - np.diag([0.995, 0.005])).max()
    phase = np.angle(crosstalk_unitary(150000, 1e-8)[3, 3])
    b = abs(phase - (-0.009424778))
    zero = SimNoiseModel(eps1=0.0, eps2=0.0, zeta=0.0)
    c = max(abs(exact_fidelity(random_circuit(3, 3, 4, FULL_PALETTE, 0.3, seed=s), zero) - 1) for s in range(100))
    ok = a <= 1e-12 and b <= 1e-9 and c <= 1e-10
    _record(4, ok, f"(a) {a:.1e} (b) phase {phase:.9f} (c) max |F-1| {c:.1e}", time.time() - t, 60)


def test_criterion_05_tiled_factorization():
    t = time.time()
    tiling = Tiling(((0, 0, 2, 2), (0, 2, 2, 2)))
    m = SimNoiseModel()
    worst = 0.0
    for s in range(50):
        c = tiled_circuit(2, 4, tiling, 12, FULL_PALETTE, 0.3, seed=s)
        worst = max(worst, abs(tiled_fidelity(c, tiling, m).value - exact_fidelity(c, m)))
    _record(5, worst <= 1e-8, f"max |prod - exact| {worst:.1e} on 50 circuits", time.time() - t, 600)


def test_criterion_06_clifford_reducible_soundness():
    t = time.time()
    worst = 0.0
    for s in range(100):
        c = clifford_reducible_circuit(3, 3, 12, 0.15, seed=s, palette=CLIFFORD_PALETTE)
        a, b = simulate_ideal(c), simulate_ideal(reduce_to_clifford(c))
        worst = max(worst, abs(abs(np.vdot(a, b)) ** 2 - 1), np.abs(a - b).max())
    _record(6, worst <= 1e-10, f"max deviation {worst:.1e} on 100 circuits", time.time() - t, 120)


def test_criterion_07_trajectory_unbiasedness():
    t = time.time()
    rng = np.random.default_rng(7)
    inside = 0
    for s in range(20):
        m = SimNoiseModel(eps1=float(rng.uniform(0.005, 0.05)), eps2=float(rng.uniform(0.02, 0.15)))
        c = random_circuit(1, 3, 8, FULL_PALETTE, 0.4, seed=s)
        p = compile_noisy_program(c, m)
        exact = fidelity_pure(simulate_ideal(c), simulate_density(p))
        est = simulate_trajectories(p, shots=10_000, seed=s)
        inside += abs(est.value - exact) <= 5 * est.stderr
    _record(7, inside >= 19, f"{inside}/20 within 5 standard errors", time.time() - t, 600)


def _lc2d_run(noise, labeler, master_seed, lr=0.01):
    cfg = DatasetConfig(rows=3, cols=3, depth=1, count=2500, palette="clifford", noise=noise, labeler=labeler,
                        master_seed=master_seed)
    train, test = split_dataset(build_dataset(cfg), 1000, seed=master_seed)
    net = build_network("lc2d-3x3", seed=master_seed)
    x, y = train.tensors(np.float64), train.labels()
    net.calibrate_output(x, y)
    train_sgd(net, x, y, SgdConfig(lr=lr, momentum=0.9, batch_size=8, epochs=500, seed=master_seed))
    xt, yt = test.tensors(np.float64), test.labels()
    pred = net.predict(xt)
    # tau of a tie-free predictor that orders the label classes perfectly; labels
    # equal up to round-off form one class and are ordered arbitrarily inside it
    ceiling = kendall_tau(np.argsort(np.argsort(np.round(yt, 12), kind="stable")), yt)
    return float(np.mean((pred - yt) ** 2)), kendall_tau(pred, yt), ceiling


@pytest.mark.slow
def test_criterion_08_stochastic_learnability():
    t = time.time()
    parts, ok = [], True
    for model in (1, 2, 3, 4):
        mse, tau, ceiling = _lc2d_run({"kind": "stochastic", "model": model}, "product-model", 800 + model)
        ok &= mse < 1e-5 and tau > 0.99
        parts.append(f"m{model}: mse {mse:.1e} tau {tau:.3f} (class-order tau {ceiling:.3f})")
    _record(8, ok, "; ".join(parts), time.time() - t, 1800)


def test_criterion_09_baseline_exactness():
    t = time.time()
    cfg = DatasetConfig(rows=3, cols=3, depth=1, count=1500, palette="clifford",
                        noise={"kind": "stochastic", "model": 1}, labeler="product-model", master_seed=9)
    ds = build_dataset(cfg)
    f = np.array([gate_count_features(r.circuit) for r in ds.records])
    y = ds.labels()
    reg = fit_gate_count_regressor(f, y)
    coef_err = max(np.abs(reg.coef[:9] - math.log(0.99)).max(), np.abs(reg.coef[9:] - math.log(0.95)).max(),
                   abs(reg.intercept))
    pred_err = np.abs(reg.predict(f) - y).max()
    ok = coef_err <= 1e-6 and pred_err <= 1e-8
    _record(9, ok, f"coef err {coef_err:.1e}, label err {pred_err:.1e}", time.time() - t, 60)


@pytest.mark.slow
def test_criterion_10_sim_noise_regression():
    t = time.time()
    mse, tau, ceiling = _lc2d_run({"kind": "sim"}, "exact-density", 1000, lr=0.2)
    _record(10, tau >= 0.9, f"tau {tau:.3f} (class-order tau {ceiling:.3f}), mse {mse:.1e}", time.time() - t, 3600)


def test_criterion_12_evaluation_metrics():
    t = time.time()
    rng = np.random.default_rng(12)
    worst = 0.0
    for k in range(200):
        n = int(rng.integers(2, 80))
        x, y = rng.normal(size=n), rng.normal(size=n)
        if k % 2:
            x, y = np.round(x), np.round(y)
        if np.all(x == x[0]) or np.all(y == y[0]):
            x[0], y[0] = x[0] + 1, y[0] + 1
        worst = max(worst, abs(kendall_tau(x, y) - kendall_tau_bruteforce(x, y)))
    lo, hi = wilson_interval(0, 10, 1.96)
    trues = rng.random(10_000)
    grid = np.round(np.arange(0.05, 1.0, 0.05), 10)
    perfect = [p.score for p in threshold_score_curve(trues, trues, grid) if p.defined]
    rand = [p.score for p in threshold_score_curve(rng.random(10_000), trues, grid) if p.defined]
    ok = (worst <= 1e-12 and abs(lo) <= 1e-4 and abs(hi - 0.2775) <= 1e-4 and all(s == 1.0 for s in perfect)
          and all(abs(s - 0.5) <= 0.05 for s in rand))
    detail = f"tau err {worst:.1e}, wilson(0,10) ({lo:.4f}, {hi:.4f}), random scores {min(rand):.3f}..{max(rand):.3f}"
    _record(12, ok, detail, time.time() - t, 60)


@pytest.fixture(scope="module")
def report_dirs(tmp_path_factory):
    base = tmp_path_factory.mktemp("report")
    return str(base / "run1"), str(base / "run2")


@pytest.fixture(scope="module")
def first_report(report_dirs):
    t = time.time()
    summary = run_report(ReportConfig(), report_dirs[0])
    return summary, time.time() - t


@pytest.mark.slow
def test_criterion_11_generalization_ladder(first_report):
    summary, elapsed = first_report
    r = summary["regimes"]
    nn = [r[name]["nn"]["kendall_tau"] for name in REGIMES]
    bl = [r[name]["baseline"]["kendall_tau"] for name in REGIMES]
    ok = nn[0] >= 0.7 and nn[1] >= 0.5 and nn[2] >= 0.5 and nn[2] > bl[2]
    detail = "nn tau a/b/c {:.3f}/{:.3f}/{:.3f}, baseline {:.3f}/{:.3f}/{:.3f}".format(*nn, *bl)
    _record(11, ok, detail, elapsed, 4 * 3600)


@pytest.mark.slow
def test_criterion_13_report_determinism(first_report, report_dirs):
    _, first_elapsed = first_report
    t = time.time()
    run_report(ReportConfig(), report_dirs[1])
    elapsed = time.time() - t
    names = sorted(os.listdir(report_dirs[0]))
    same = names == sorted(os.listdir(report_dirs[1]))
    _, mismatch, errors = filecmp.cmpfiles(report_dirs[0], report_dirs[1], names, shallow=False)
    ok = same and not mismatch and not errors
    _record(13, ok, f"{len(names)} files, {len(mismatch) + len(errors)} differ", elapsed,
            max(4 * 3600, 2 * first_elapsed))
