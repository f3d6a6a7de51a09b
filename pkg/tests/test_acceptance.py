"""Acceptance suite: one test per primary criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
Every tolerance is pinned here; the helper runs reuse the public harness so the
artifacts exercised are the shipped ones.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from ntklab import (Dataset, InitSnapshot, NetworkParams, Ntk1Kernel,
                    Xor2Separator, build_u_bar, empirical_risk, finite_margin,
                    gram, init_network, init_output_check, k1, k2, make_xor2,
                    population_margin_mc, risk_gradient, solve_margin,
                    witness_margins, witness_supnorm_check)
from ntklab.harness import DistConfig, ExperimentConfig, EXPERIMENTS
from ntklab.util import substream

from oracles import central_difference_gradient, grid_min_margin

SEED = 20260809


def _report(name: str, ok: bool, detail: str = "") -> bool:
    print(f"{'PASS' if ok else 'FAIL'} {name}" + (f"  [{detail}]" if detail else ""))
    return ok


@pytest.fixture(scope="module")
def margin_instances():
    """Twenty converged small margin problems shared by two criteria."""
    out = []
    for i in range(20):
        rng = substream(SEED, "acc-margin", i)
        n = int(rng.integers(3, 7))
        d = int(rng.integers(3, 7))
        X = rng.standard_normal((n, d))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        y = rng.choice([-1.0, 1.0], size=n)
        ds = Dataset.from_arrays(X, y)
        g = gram(Ntk1Kernel(), ds)
        res = solve_margin(g, ds.y, tol=1e-8, max_iters=200_000)
        out.append((ds, g, res))
    return out


def test_gradient_correctness():
    t0 = time.time()
    worst = 0.0
    checked = 0
    i = 0
    while checked < 20:
        rng = substream(SEED, "acc-grad", i)
        i += 1
        params = init_network(8, 5, rng)
        X = rng.standard_normal((6, 5))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        ds = Dataset.from_arrays(X, rng.choice([-1.0, 1.0], size=6))
        if np.min(np.abs(params.W @ ds.X.T)) <= 1e-3:
            continue  # stay away from activation kinks
        a = params.a
        fd = central_difference_gradient(
            lambda W: empirical_risk(NetworkParams(W=W, a=a), ds), params.W, h=1e-5)
        worst = max(worst, float(np.max(np.abs(fd - risk_gradient(params, ds)))))
        checked += 1
    elapsed = time.time() - t0
    ok = worst <= 1e-6 and elapsed < 1.0
    assert _report("gradient-correctness", ok, f"max dev {worst:.2e}, {elapsed:.2f}s")


def test_kernel_closed_forms():
    t0 = time.time()
    assert k1(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 0.5
    assert k1(np.array([1.0, 0.0]), np.array([-1.0, 0.0])) == 0.0
    assert k1(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    fails = 0
    n_mc = 1_000_000
    for i in range(100):
        rng = substream(SEED, "acc-kernel", i)
        x = rng.standard_normal(7)
        x /= np.linalg.norm(x)
        xp = rng.standard_normal(7)
        xp /= np.linalg.norm(xp)
        # Inline oracle: average the defining Gaussian integrands over one
        # shared direction bank per pair.
        W = rng.standard_normal((n_mc, 7))
        g, gp = W @ x, W @ xp
        vals1 = float(np.dot(x, xp)) * ((g > 0) & (gp > 0)).astype(np.float64)
        vals2 = np.maximum(g, 0.0) * np.maximum(gp, 0.0)
        for vals, analytic in ((vals1, k1(x, xp)), (vals2, k2(x, xp))):
            se = float(np.std(vals, ddof=1)) / math.sqrt(n_mc)
            fails += int(abs(analytic - float(np.mean(vals))) > 4.0 * se)
    elapsed = time.time() - t0
    ok = fails <= 2 and elapsed < 30.0
    assert _report("kernel-closed-forms", ok, f"{fails} band misses, {elapsed:.1f}s")


def test_margin_solver_oracle_equivalence(margin_instances):
    t0 = time.time()
    worst_dev = 0.0
    worst_gap = 0.0
    for ds, g, res in margin_instances:
        assert res.converged
        worst_gap = max(worst_gap, res.duality_gap)
        grid_gamma = grid_min_margin(g.matrix, ds.y, resolution=2e-3)
        worst_dev = max(worst_dev, abs(res.gamma - grid_gamma))
    elapsed = time.time() - t0
    ok = worst_dev <= 1e-3 and worst_gap <= 1e-8 and elapsed < 60.0
    assert _report("margin-solver-oracle-equivalence", ok,
                   f"max |fw-grid| {worst_dev:.2e}, max gap {worst_gap:.2e}, {elapsed:.1f}s")


def test_margin_witness(margin_instances):
    worst_margin_slack = math.inf
    worst_sup = 0.0
    audited = 0
    for i, (ds, g, res) in enumerate(margin_instances):
        if res.gamma <= 1e-4:
            continue
        margins = witness_margins(res, g, ds.y)
        worst_margin_slack = min(worst_margin_slack, float(np.min(margins) - (res.gamma - 1e-3)))
        sup = witness_supnorm_check(res, ds, 10_000, substream(SEED, "acc-witness", i))
        worst_sup = max(worst_sup, sup)
        audited += 1
    ok = worst_margin_slack >= 0.0 and worst_sup <= 1.0 + 1e-9 and audited >= 15
    assert _report("margin-witness", ok,
                   f"{audited} audited, min slack {worst_margin_slack:.2e}, sup {worst_sup:.6f}")


def test_xor_population_margin(tmp_path):
    t0 = time.time()
    ok = True
    details = []
    for d in (3, 8):
        cfg = ExperimentConfig(experiment="xor-margin", dist=DistConfig(kind="xor2", d=d),
                               seed=SEED, out_dir=str(tmp_path / f"xor{d}"),
                               mc_samples=400_000, noise_patterns=32)
        art = EXPERIMENTS["xor-margin"](cfg)
        ok = ok and art.passed
        details.append(f"d={d} min {art.summary['metrics']['min_estimate']:.4f} "
                       f"vs {art.summary['metrics']['threshold']:.5f}")
    elapsed = time.time() - t0
    ok = ok and elapsed < 120.0
    assert _report("xor-population-margin", ok, "; ".join(details) + f", {elapsed:.1f}s")


def test_random_label_margin(tmp_path):
    t0 = time.time()
    cfg = ExperimentConfig(experiment="random-label",
                           dist=DistConfig(kind="xor2", d=6, mode="exhaustive"),
                           seed=SEED, out_dir=str(tmp_path / "rl"), trials=200)
    art = EXPERIMENTS["random-label"](cfg)
    frac = art.summary["metrics"]["fraction_below"]
    elapsed = time.time() - t0
    ok = art.passed and frac >= 0.85 and elapsed < 300.0
    assert _report("random-label-margin", ok, f"fraction {frac:.3f} >= 0.85, {elapsed:.1f}s")


def test_degenerate_activation_patterns(tmp_path):
    t0 = time.time()
    cfg = ExperimentConfig(experiment="ntk-lb", seed=SEED, out_dir=str(tmp_path / "lb"),
                           ntk_d=102, ntk_m=2, ntk_trials=2000)
    art = EXPERIMENTS["ntk-lb"](cfg)
    freq = art.summary["metrics"]["frequency"]
    worst_margin = art.summary["metrics"]["max_degenerate_margin"]
    elapsed = time.time() - t0
    ok = art.passed and freq >= 0.466 and worst_margin <= 1e-6 and elapsed < 60.0
    assert _report("degenerate-activation-patterns", ok,
                   f"freq {freq:.3f} >= 0.466, max margin {worst_margin:.1e}, {elapsed:.1f}s")


def test_initialization_lemmas():
    t0 = time.time()
    d = 8
    ds = make_xor2(d, mode="exhaustive")
    n = ds.n
    probe = make_xor2(d, mode="iid", n=1, rng=substream(SEED, "acc-mu"))
    mu_hat, mu_se = population_margin_mc(Xor2Separator(d), probe.examples[0],
                                         1_000_000, substream(SEED, "acc-mu", "mc"))
    seeds = 50
    results = {}
    for m in (1_000, 10_000):
        viol_margin = viol_act = viol_out = 0
        delta_m, delta_a, delta_o = 0.05, 0.05, 0.1
        for s in range(seeds):
            params = init_network(m, d, substream(SEED, "acc-lemma", m, s))
            init = InitSnapshot.of(params)
            ub = build_u_bar(init, Xor2Separator(d))
            got, _ = finite_margin(params, ub, ds)
            viol_margin += int(got < mu_hat - math.sqrt(2.0 * math.log(n / delta_m) / m))
            eps2 = 0.05
            bound = math.sqrt(2.0 / math.pi) * eps2 + math.sqrt(math.log(n / delta_a) / (2.0 * m))
            alphas = np.mean(np.abs(params.W @ ds.X.T) <= eps2, axis=0)
            viol_act += int(np.max(alphas) > bound)
            viol_out += int(not init_output_check(params, ds, delta_o).ok)
        results[m] = (viol_margin / seeds, viol_act / seeds, viol_out / seeds)
    elapsed = time.time() - t0
    ok = all(vm <= 0.05 and va <= 0.05 and vo <= 0.1 for vm, va, vo in results.values())
    ok = ok and elapsed < 120.0
    assert _report("initialization-lemmas", ok,
                   f"violation rates {results}, mu {mu_hat:.4f}+-{mu_se:.1e}, {elapsed:.1f}s")


@pytest.fixture(scope="module")
def erm_artifacts(tmp_path_factory):
    out = tmp_path_factory.mktemp("erm")
    cfg = ExperimentConfig(experiment="train",
                           dist=DistConfig(kind="linear", d=20, gamma0=0.2, n=200),
                           seed=SEED, out_dir=str(out), m_list=[256, 1024, 4096],
                           eta=1.0, eps=0.05, delta=0.05, t_max=5000)
    t0 = time.time()
    art = EXPERIMENTS["train"](cfg)
    return art, time.time() - t0


@pytest.fixture(scope="module")
def sgd_artifacts(tmp_path_factory):
    out = tmp_path_factory.mktemp("sgd")
    cfg = ExperimentConfig(experiment="sgd",
                           dist=DistConfig(kind="linear", d=20, gamma0=0.2, n=200),
                           seed=SEED, out_dir=str(out), m=1024, stream_n=5000,
                           eps=0.05, heldout_n=1000, replicates=50,
                           rep_stream_n=1000, rep_m=256, rep_heldout_n=500,
                           rep_delta=0.1)
    t0 = time.time()
    art = EXPERIMENTS["sgd"](cfg)
    return art, time.time() - t0


def test_distance_inequality_slacks(erm_artifacts, sgd_artifacts):
    records = []
    for art in (erm_artifacts[0], sgd_artifacts[0]):
        records.extend(r for r in art.lemma_checks if "distance_inequality" in r["lemma"])
    worst = min(r["observed"] for r in records)
    ok = len(records) >= 6 and all(r["pass"] for r in records) and worst >= -1e-8
    assert _report("distance-inequality-slacks", ok,
                   f"{len(records)} monitored anchors, min slack {worst:.2e}")


def test_gd_trends_at_desk_scale(erm_artifacts):
    art, elapsed = erm_artifacts
    by_tag = {}
    for c in art.summary["claims"]:
        by_tag.setdefault(c["claim"], []).append(c)
    risk_ok = all(c["pass"] for c in by_tag["avg_risk_reaches_target"])
    move_ok = all(c["pass"] for c in by_tag["row_movement_bound"])
    scale_ok = all(c["pass"] for c in by_tag["row_movement_scales_inverse_sqrt_width"])
    ok = risk_ok and move_ok and scale_ok and elapsed < 180.0
    assert _report("gd-trends-desk-scale", ok,
                   f"risk {risk_ok}, movement {move_ok}, scaling {scale_ok}, {elapsed:.0f}s")


def test_sgd_and_generalization_inequality(sgd_artifacts):
    art, elapsed = sgd_artifacts
    by_tag = {c["claim"]: c for c in art.summary["claims"]}
    err = by_tag["sgd_running_avg_test_error"]
    reps = by_tag["sgd_generalization_inequality_replicates"]
    ok = err["pass"] and reps["pass"] and elapsed < 300.0
    assert _report("sgd-test-error-and-inequality", ok,
                   f"running avg {err['observed']:.4f} <= 0.05, "
                   f"replicate fraction {reps['observed']:.2f} >= 0.9, {elapsed:.0f}s")


def test_kernel_sample_complexity(tmp_path):
    # Known-red: over d in {6,8,10} the measured exponent is ~2.7 +- 0.15
    # (exact separator margins predict 2.33; the residual multiplicative log
    # factor adds ~0.35), so the 2.5 ceiling is reachable only through
    # replicate noise.  The ceiling is asserted unchanged; the run artifacts
    # carry bootstrap diagnostics quantifying the gap.
    t0 = time.time()
    cfg = ExperimentConfig(experiment="kernel-complexity", seed=SEED,
                           out_dir=str(tmp_path / "kc"))
    art = EXPERIMENTS["kernel-complexity"](cfg)
    m = art.summary["metrics"]
    slope = m["slope"]
    elapsed = time.time() - t0
    ok = art.passed and slope <= 2.5 and elapsed < 600.0
    assert _report("kernel-sample-complexity", ok,
                   f"slope {slope:.3f} (bootstrap std {m['slope_bootstrap_std']:.3f}) "
                   f"vs ceiling 2.5, medians {m['medians']}, {elapsed:.0f}s")


def test_determinism_across_thread_counts(tmp_path, monkeypatch):
    small = {
        "train": {"dist": {"kind": "linear", "d": 6, "gamma0": 0.3, "n": 24},
                  "m": 24, "t_max": 15, "eps": 0.5},
        "gen": {"dist": {"kind": "linear", "d": 6, "gamma0": 0.3, "n": 24},
                "m": 16, "gen_t_max": 12, "heldout_n": 1000, "eps": 0.9},
        "sgd": {"dist": {"kind": "linear", "d": 6, "gamma0": 0.3, "n": 24},
                "m": 16, "stream_n": 60, "heldout_n": 1000, "replicates": 3,
                "rep_stream_n": 30, "rep_m": 8, "rep_heldout_n": 200, "eps": 0.9},
        "margin": {"dist": {"kind": "xor2", "d": 4, "mode": "exhaustive"}},
        "kernel": {"dist": {"kind": "xor2", "d": 4, "mode": "exhaustive"},
                   "mc_pairs": 4, "pair_mc_samples": 20_000},
        "xor-margin": {"dist": {"kind": "xor2", "d": 3}, "mc_samples": 20_000,
                       "noise_patterns": 4},
        "ntk-lb": {"ntk_trials": 50},
        "random-label": {"dist": {"kind": "xor2", "d": 4, "mode": "exhaustive"},
                         "trials": 8},
        "kernel-complexity": {"kc_d_list": [4, 5], "kc_replicates": 2,
                              "kc_max_stream": 2000, "kc_stride": 20},
    }
    mismatches = []
    for name, tweaks in small.items():
        blobs = []
        for threads, tag in ((1, "a"), (4, "b")):
            monkeypatch.setenv("NTKLAB_THREADS", str(threads))
            raw = {"experiment": name, "seed": 17,
                   "out_dir": str(tmp_path / name / tag), **tweaks}
            cfg = ExperimentConfig.from_dict(raw)
            EXPERIMENTS[name](cfg)
            run_dir = tmp_path / name / tag
            blob = {}
            for p in sorted(run_dir.rglob("*")):
                if p.is_file() and p.name != "config.json":
                    blob[str(p.relative_to(run_dir))] = p.read_bytes()
            blobs.append(blob)
        if blobs[0] != blobs[1]:
            mismatches.append(name)
    ok = not mismatches
    assert _report("determinism-across-threads", ok,
                   "all experiments byte-identical" if ok else f"mismatch: {mismatches}")
