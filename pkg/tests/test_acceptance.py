"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

Set ``LENDBANDIT_REGEN_GOLDEN=1`` to rewrite the golden report tables.
"""

import csv
import io
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from lendbandit import cli
from lendbandit.data import SyntheticConfig, generate_synthetic
from lendbandit.domain import ARMS, ArmId, SpoofConfig
from lendbandit.policies import (
    CB_POLICIES,
    PolicyDecision,
    EpsilonSchedule,
    LinUcbArmState,
    LogisticArmState,
    eg_select,
    linucb_select,
    linucb_update,
    logistic_predict_mean,
    logistic_update,
    lructs_estimate_status,
)
from lendbandit.replay import ReplayConfig, make_policies, run_sliding, run_window
from lendbandit.reward import (
    booking_preference,
    booking_status,
    expected_revenue,
    oracle_arm,
    revenue_propensity,
)

from conftest import ACCEPTANCE_LINES
from oracles import brute_force_oracle, reward_table, ridge_argmax

GOLDEN = Path(__file__).parent / "golden"
BASELINES = ("OwnVWAF", "MLBased", "MarketVWAF", "RuleBased")


def report(n, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def rel_close(a, b, rtol):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) <= rtol * np.maximum(np.abs(b), np.finfo(float).tiny)


# -- 1 ---------------------------------------------------------------------------

def test_criterion_1_reward_math_oracle():
    rng = np.random.default_rng(2024)
    n = 100_000
    bid = rng.uniform(0, 0.1, n)
    ask = rng.uniform(0, 0.1, n)
    # Boundary cases: exact matches, zero bids and zero asks.
    ask[::10] = bid[::10]
    bid[1::50] = 0.0
    ask[2::50] = 0.0
    bid[3::100] = ask[3::100] = 0.0
    delta = rng.uniform(0.01, 1.0, n)
    bench = rng.uniform(0, 0.12, n)
    bench[4::20] = bid[4::20] / delta[4::20]  # threshold boundary
    mv = rng.uniform(0, 1e8, n)

    t0 = time.perf_counter()
    got = np.empty((n, 4))
    for i in range(n):
        b, a = float(bid[i]), float(ask[i])
        sp = SpoofConfig(delta=float(delta[i]))
        bp = booking_preference(b, a)
        st = booking_status(b, a, sp, float(bench[i]))
        rp = revenue_propensity(b, a, sp, float(bench[i]))
        got[i] = (bp, st, rp, expected_revenue(rp, float(mv[i]), a))
    elapsed = time.perf_counter() - t0
    ref = np.column_stack(reward_table(bid, ask, delta, bench, mv))
    ok_vals = bool(np.all(rel_close(got, ref, 1e-12)))
    worst = float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1e-300)))
    report(1, ok_vals and elapsed < 5.0,
           f"{n} tuples, max rel err {worst:.1e} (tol 1e-12), {elapsed:.2f}s (limit 5s)")


# -- 2 ---------------------------------------------------------------------------

def test_criterion_2_oracle_and_regret_identities():
    t0 = time.perf_counter()
    log = generate_synthetic(SyntheticConfig(seed=42, requests_per_day_range=(1400, 1500)))
    n = len(log)
    spoof = SpoofConfig()
    dominated = True
    oracles = []
    for rec in log:
        req, q = rec.request, rec.quotes
        bench = q.price(ArmId.MarketVwaf)
        arm, best = oracle_arm(req, q, spoof, bench)
        oracles.append((int(arm), best))
        for a in ARMS:
            rev = expected_revenue(revenue_propensity(req.bid, q.price(a), spoof, bench),
                                   req.market_value, q.price(a))
            dominated &= best >= rev
    cfg = ReplayConfig(train_days=1, test_days=6)
    rep = run_window(log.records, cfg).report
    worst = 0.0
    for p in rep.policies:
        gap = rep.oracle_revenue - p.revenue
        worst = max(worst, abs(gap - p.cumulative_regret) / max(rep.oracle_revenue, 1e-300))
    elapsed = time.perf_counter() - t0
    # Untimed cross-check against the independent enumeration.
    agree = all(
        brute_force_oracle(r.request.bid, r.quotes.prices, r.request.market_value, spoof.delta,
                           r.quotes.price(ArmId.MarketVwaf)) == o
        for r, o in zip(log, oracles))
    ok = n >= 10_000 and dominated and agree and worst <= 1e-9 and elapsed < 10.0
    report(2, ok, f"{n} requests, oracle dominates={dominated}, matches brute force={agree}, "
                  f"max regret identity rel err {worst:.1e} (tol 1e-9), "
                  f"{elapsed:.2f}s (limit 10s)")


# -- 3 ---------------------------------------------------------------------------

def test_criterion_3_headline_revenue_uplift():
    t0 = time.perf_counter()
    seeds = range(42, 47)
    totals = {}
    n_regimes = []
    for seed in seeds:
        synth = generate_synthetic(SyntheticConfig(seed=seed))
        n_regimes.append(len(set(synth.regime)))
        for res in run_sliding(synth.records, ReplayConfig(seed=seed), threads=3):
            for p in res.report.policies:
                totals.setdefault(p.name, []).append(p.revenue)
    # Average test-window revenue per policy, over windows and seeds.
    avg = {k: float(np.mean(v)) for k, v in totals.items()}
    base_mean = float(np.mean([avg[b] for b in BASELINES]))
    ratios = {k: avg[k] / base_mean for k in ("LRUCB", "LRTS", "EG")}
    lrts_beats_all = all(avg["LRTS"] >= avg[b] for b in BASELINES)
    elapsed = time.perf_counter() - t0
    ok = (all(r >= 1.15 for r in ratios.values()) and lrts_beats_all and elapsed < 120
          and min(n_regimes) >= 2)
    detail = ", ".join(f"{k} {r:.3f}x" for k, r in ratios.items())
    report(3, ok, f"vs baseline mean (need >= 1.15x): {detail}; "
                  f"LRTS >= every baseline={lrts_beats_all}; {elapsed:.1f}s (limit 120s)")


# -- 4 ---------------------------------------------------------------------------

def _golden(name, text):
    path = GOLDEN / name
    if os.environ.get("LENDBANDIT_REGEN_GOLDEN") == "1" or not path.exists():
        path.parent.mkdir(exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    return path.read_text(encoding="utf-8") == text


def test_criterion_4_table_shapes_and_goldens(tmp_path):
    log = tmp_path / "log.csv"
    assert cli.main(["generate", "--out", str(log)]) == 0
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli.main(["replay", str(log), "--out-dir", str(out)]) == 0
        outs.append(out)
    rev = list(csv.reader(io.StringIO((outs[0] / cli.REVENUE_CSV).read_text())))
    windows = len(rev[0]) - 1
    shape_ok = len(rev) - 1 == 8 and windows >= 1 and all(len(r) == windows + 1 for r in rev)
    ratios = list(csv.reader(io.StringIO((outs[0] / cli.RATIOS_CSV).read_text())))
    worst = max(abs(sum(float(v) for v in r[2:]) - 1.0) for r in ratios[1:])
    names = (cli.REPORTS_FILE, cli.REVENUE_CSV, cli.REVENUE_TXT, cli.RATIOS_CSV,
             cli.MANIFEST_FILE)
    identical = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    golden_ok = (_golden(cli.REVENUE_TXT, (outs[0] / cli.REVENUE_TXT).read_text())
                 and _golden(cli.RATIOS_CSV, (outs[0] / cli.RATIOS_CSV).read_text()))
    ok = shape_ok and worst <= 1e-9 and identical and golden_ok
    report(4, ok, f"revenue table {len(rev) - 1} rows x {windows} windows, ratio rows sum "
                  f"to 1 within {worst:.1e} (tol 1e-9), two runs byte-identical={identical}, "
                  f"goldens match={golden_ok}")


# -- 5 ---------------------------------------------------------------------------

def test_criterion_5_policy_unit_properties():
    rng = np.random.default_rng(5)
    d = 6

    ridge_ok = 0
    for _ in range(1000):
        states = [LinUcbArmState.fresh(d, 0.0) for _ in ARMS]
        for _ in range(int(rng.integers(0, 10))):
            x = rng.uniform(0, 1, d)
            linucb_update(states[int(rng.integers(4))], x, float(rng.normal(0, 1e4)))
        x = rng.uniform(0, 1, d)
        ref, _ = ridge_argmax([s.A for s in states], [s.b for s in states], x)
        ridge_ok += int(linucb_select(states, x).chosen_arm) == ref

    ucb_ok = 0
    for _ in range(1000):
        st = LogisticArmState(rng.normal(0, 2, d), rng.uniform(0.01, 50, d),
                              float(rng.uniform(0, 5)))
        x = rng.uniform(0, 1, d)
        ucb_ok += lructs_estimate_status(st, x, "ucb") >= lructs_estimate_status(st, x, "greedy")

    x = np.array([0.4, 0.6, 0.2, 0.7, 0.9, 1.0])
    st = LogisticArmState.fresh(d)
    steps = None
    for k in range(1, 201):
        st = logistic_update(st, x, 1)
        if logistic_predict_mean(st, x) > 0.99:
            steps = k
            break

    erng = np.random.default_rng(2024)
    greedy = PolicyDecision(ArmId.OwnVwaf, (1.0, 0.0, 0.0, 0.0))
    eps = EpsilonSchedule(1.0).epsilon(1)
    counts = np.bincount([int(eg_select(greedy, eps, erng).chosen_arm) for _ in range(10_000)],
                         minlength=4)
    freq = counts / counts.sum()
    eg_ok = bool(np.all(np.abs(freq - 0.25) <= 0.02))

    ok = ridge_ok == 1000 and ucb_ok == 1000 and steps is not None and eg_ok
    report(5, ok, f"ridge argmax {ridge_ok}/1000, UCB >= greedy {ucb_ok}/1000, "
                  f"p > 0.99 after {steps} updates (limit 200), "
                  f"EG freqs {np.round(freq, 3).tolist()} (0.25 +/- 0.02)")


# -- 6 ---------------------------------------------------------------------------

def test_criterion_6_replay_match_gate_recount():
    synth = generate_synthetic(SyntheticConfig(seed=6, n_securities=10, days=5,
                                               requests_per_day_range=(195, 205)))
    log = synth.records
    cfg = ReplayConfig(mode="replay-match", seed=6)
    policies = make_policies(cfg, log[0].context.dim)
    seen = {p.name: [] for p in policies}
    for pol in policies:
        inner = pol.select

        def select(rec, inner=inner, name=pol.name):
            dec = inner(rec)
            seen[name].append(dec.chosen_arm == rec.request.logged_arm)
            return dec
        pol.select = select
    rep = run_window(log, cfg, policies=policies).report
    mismatched = []
    for pol, pr in zip(policies, rep.policies):
        recount = sum(seen[pol.name])
        if not (pr.n_updates == recount == sum(pol.update_counts) == sum(pr.update_counts)):
            mismatched.append(pol.name)
        test_matches = sum(seen[pol.name][rep.n_train:])
        if round(pr.match_rate * rep.n_test) != test_matches:
            mismatched.append(pol.name + " (match rate)")
    n = rep.n_train + rep.n_test
    ok = n >= 1000 and not mismatched
    report(6, ok, f"{n} requests, {len(policies)} policies, update counts equal the "
                  f"instrumented match recount for all={not mismatched}")


# -- 7 ---------------------------------------------------------------------------

def test_criterion_7_pipeline_determinism(tmp_path):
    trees = []
    for run in ("one", "two"):
        root = tmp_path / run
        assert cli.main(["generate", "--out", str(root / "log.csv")]) == 0
        assert cli.main(["replay", str(root / "log.csv"), "--out-dir", str(root / "out"),
                         "--threads", "2" if run == "two" else "1"]) == 0
        trees.append({p.relative_to(root).as_posix(): p.read_bytes()
                      for p in sorted(root.rglob("*")) if p.is_file()})
    same = trees[0] == trees[1]
    manifests = [k for k in trees[0] if k.endswith("manifest.json")]
    ok = same and len(manifests) == 2 and len(trees[0]) >= 7
    report(7, ok, f"{len(trees[0])} files incl. {len(manifests)} manifests, "
                  f"byte-identical across runs={same}")
