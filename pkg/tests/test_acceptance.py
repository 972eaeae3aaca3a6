"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that the conftest hook prints in the
terminal summary; ``pytest -s`` also shows it inline.
"""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

import oracles
from escm.analytics import (
    ChannelParams,
    DsaParams,
    InternalAttackParams,
    dsa_success_probability,
    hypergeometric_pmf_exact,
    internal_attack_probability,
    poso_overhead,
    ponc_overhead,
    static_success_rate,
)
from escm.cli import fig2_rows, fig11_rows, run_ablation, run_scenario
from escm.cn_coding import CodingVector, decode, determinant, encode, is_decodable, vandermonde_matrix, vandermonde_product
from escm.config import PoncConfig, ScenarioConfig, SweepConfig
from escm.ponc import (
    STRATEGIES,
    ConsensusNode,
    honest_optimum,
    inject_internal_attack,
    run_consensus,
    run_poso_baseline,
)
from test_cn_coding import ref_det, ref_rank


def _record(request, text):
    request.node.user_properties.append(("detail", text))
    print(f"\n[{request.node.name}] {text}")


def _honest(k, cr):
    return [ConsensusNode(i, float(c)) for i, c in enumerate(cr)]


@pytest.mark.criterion(1, "static success quadrature vs Monte-Carlo, 20 parameter sets, 3 SE, < 30 s")
def test_static_success_quadrature_against_monte_carlo(request):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        p = ChannelParams(
            transmit_power=float(rng.uniform(0.1, 2.0)),
            noise_power=float(rng.uniform(0.01, 0.5)),
            path_loss_exponent=float(rng.uniform(2.0, 4.0)),
            snr_threshold_db=float(rng.uniform(0.0, 10.0)),
            density=float(rng.uniform(0.5, 5.0)),
            node_count=int(rng.integers(2, 21)),
        )
        quad = static_success_rate(p)
        est, se = oracles.static_success_mc(p.transmit_power, p.noise_power, p.path_loss_exponent,
                                            p.snr_threshold_db, p.density, p.node_count, 1_000_000, rng)
        worst = max(worst, abs(quad - est) / se)
    elapsed = time.perf_counter() - start
    _record(request, f"max |quad - mc| = {worst:.2f} SE, {elapsed:.1f} s")
    assert worst <= 3.0
    assert elapsed < 30.0


@pytest.mark.criterion(2, "mobile success curves ordered in density and speed, non-increasing in k")
def test_mobile_success_curve_orderings(request):
    curves = {}
    for row in fig2_rows(ScenarioConfig()):
        curves.setdefault(row.metric, []).append((row.sweep_value, row.value))
    slow_sparse = [v for _, v in curves["success_v3_gamma2"]]
    slow_dense = [v for _, v in curves["success_v3_gamma5"]]
    fast_dense = [v for _, v in curves["success_v5_gamma5"]]
    ks = [k for k, _ in curves["success_v3_gamma2"]]
    assert ks == list(map(float, range(2, 21)))
    density_ok = all(d >= s for d, s in zip(slow_dense, slow_sparse))
    speed_ok = all(s >= f for s, f in zip(slow_dense, fast_dense))
    k_ok = all(all(a >= b for a, b in zip(c, c[1:])) for c in (slow_sparse, slow_dense, fast_dense))
    _record(request, f"density {density_ok}, speed {speed_ok}, k {k_ok} over {len(ks)} points")
    assert density_ok and speed_ok and k_ok


@pytest.mark.criterion(3, "PoNC 2k^2-1 messages, PoSo mean 60 +/- 2 at k=5, crossover between k=4 and k=5")
def test_consensus_overheads(request):
    rng = np.random.default_rng(3)
    counts = {}
    for k in range(2, 13):
        res = run_consensus(_honest(k, rng.uniform(100, 300, k)), rng, max_retries=0)
        assert res.retries == 0
        counts[k] = res.messages_exchanged
    exact = all(counts[k] == 2 * k * k - 1 == ponc_overhead(k) for k in counts)
    poso = np.mean([run_poso_baseline(_honest(5, rng.uniform(100, 300, 5)), rng).messages_exchanged
                    for _ in range(10_000)])
    above = all(ponc_overhead(k) > poso_overhead(k) for k in (3, 4))
    below = all(ponc_overhead(k) < poso_overhead(k) for k in range(5, 13))
    _record(request, f"PoNC exact {exact}, PoSo mean {poso:.2f}, crossover {above and below}")
    assert exact and abs(poso - 60) <= 2 and above and below


@pytest.mark.criterion(4, "double-spend closed form vs race oracle within 1e-2; < 0.01 for z > 5")
def test_double_spend_probability(request):
    rng = np.random.default_rng(4)
    worst = 0.0
    regime_ok = True
    for ratio in (0.01, 0.1, 0.2):
        for z in range(11):
            closed = dsa_success_probability(DsaParams(p_m=ratio, p_h=1.0, z_blocks=z))
            mc = oracles.dsa_race_mc(ratio, 1.0, z, 200_000, rng)
            worst = max(worst, abs(closed - mc))
            if z > 5:
                regime_ok &= closed < 0.01
    _record(request, f"max |closed - race| = {worst:.4f}, z > 5 regime {regime_ok}")
    assert worst <= 1e-2 and regime_ok


@pytest.mark.criterion(5, "committee pmf exact for N <= 12; attack MC vs enumeration within 2e-2; success falls with k")
def test_internal_attack(request):
    exact_ok = True
    for N in range(1, 13):
        for X in range(N + 1):
            for k in range(1, N + 1):
                counts = {}
                for committee in itertools.combinations(range(N), k):
                    x = sum(1 for d in committee if d < X)
                    counts[x] = counts.get(x, 0) + 1
                total = math.comb(N, k)
                exact_ok &= all(hypergeometric_pmf_exact(x, N, X, k) == Fraction(c, total) for x, c in counts.items())
    enumerated, _ = oracles.internal_attack_enumeration(10, 2, 3)
    est = internal_attack_probability(InternalAttackParams(10, 2, 3), 200_000, 5)
    ordering = {}
    for R in (0.1, 0.2, 0.3, 0.4):
        ordering[R] = [internal_attack_probability(InternalAttackParams(50, round(50 * R), k), 200_000, [5, k])
                       for k in (5, 10, 15)]
    falls = all(a > b > c for a, b, c in ordering.values())
    # with equal honest and malicious populations the two sides are exchangeable
    even = [internal_attack_probability(InternalAttackParams(50, 25, k), 200_000, [6, k]) for k in (5, 10, 15)]
    _record(request, f"pmf exact {exact_ok}, mc {est:.4f} vs enum {enumerated:.4f}, falls in k {falls}, "
                     f"R=0.5 values {[round(v, 3) for v in even]}")
    assert exact_ok
    assert abs(est - enumerated) <= 2e-2
    assert falls
    assert all(abs(v - 0.5) <= 5e-3 for v in even)


@pytest.mark.criterion(6, "coding round trip, decodability iff distinct generators, product formula equals elimination")
def test_network_coding(request):
    rng = np.random.default_rng(6)
    round_trips = 0
    for k in range(2, 9):
        for _ in range(1000):
            msgs = [rng.integers(0, 256, int(rng.integers(1, 33)), dtype=np.uint8).tobytes()]
            msgs += [rng.integers(0, 256, len(msgs[0]), dtype=np.uint8).tobytes() for _ in range(k - 1)]
            gens = rng.choice(255, size=k, replace=False) + 1
            enc = [encode(msgs, CodingVector(int(g), k)) for g in gens]
            assert decode([enc[i] for i in rng.permutation(k)]) == msgs
            round_trips += 1
    violations = 0
    for _ in range(10_000):
        k = int(rng.integers(2, 9))
        gens = rng.integers(0, 16, size=k).tolist()
        violations += is_decodable([CodingVector(g, k) for g in gens]) != (len(set(gens)) == k)
    det_mismatch = 0
    for k in range(1, 7):
        for _ in range(200):
            gens = rng.integers(0, 256, size=k)
            V = vandermonde_matrix(gens)
            det = determinant(V)
            det_mismatch += det != vandermonde_product(gens)
            det_mismatch += (det != 0) != (ref_rank(V) == k)
            if k <= 4:
                det_mismatch += det != ref_det(V)
    _record(request, f"{round_trips} round trips, {violations} decodability violations, {det_mismatch} determinant mismatches")
    assert violations == 0 and det_mismatch == 0


@pytest.mark.criterion(7, "coded V2VC > uncoded V2VC > P2PC throughput over (n, q), 10 seeds; non-decreasing in n and q")
def test_throughput_orderings(request):
    cfg = ScenarioConfig(replications=10)
    tp = {(r.sweep_value, r.metric, r.seed): r.value for r in fig11_rows(cfg)}
    seeds = {s for _, _, s in tp}
    grid = {(n, int(m.rsplit("_q", 1)[1])) for n, m, _ in tp}
    order_bad = mono_bad = 0
    for n, q in grid:
        for s in seeds:
            coded, plain, phys = (tp[(n, f"{mode}_q{q}", s)] for mode in ("v2vc_coded", "v2vc_uncoded", "p2pc"))
            order_bad += not (coded > plain > phys)
            for mode in ("v2vc_coded", "v2vc_uncoded", "p2pc"):
                here = tp[(n, f"{mode}_q{q}", s)]
                if (n + 1, q) in grid:
                    mono_bad += tp[(n + 1, f"{mode}_q{q}", s)] < here
                if (n, q + 1) in grid:
                    mono_bad += tp[(n, f"{mode}_q{q + 1}", s)] < here
    _record(request, f"{len(grid)} grid points x {len(seeds)} seeds: {order_bad} ordering and {mono_bad} monotonicity violations")
    assert len(seeds) == 10 and all(q < 5 < n for n, q in grid)
    assert order_bad == 0 and mono_bad == 0


@pytest.mark.criterion(8, "consensus elects the honest argmax under every minority-malicious subset and strategy, k <= 7")
def test_consensus_safety(request):
    cases = failures = 0
    for k in range(1, 8):
        base = _honest(k, np.random.default_rng(80 + k).uniform(100, 300, k))
        for m in range((k - 1) // 2 + 1):
            for bad in itertools.combinations(range(k), m):
                for strategy in STRATEGIES:
                    nodes = inject_internal_attack(base, bad, strategy)
                    res = run_consensus(nodes, np.random.default_rng([k, m, cases]))
                    cases += 1
                    failures += res.elected != honest_optimum(nodes)
    _record(request, f"{cases} cases, {failures} unsafe elections")
    assert failures == 0


@pytest.mark.criterion(9, "full system arrival rate >= every ablation per seed (10 seeds, 10% malicious), > baseline in mean")
def test_ablation_ordering(request, tmp_path):
    cfg = ScenarioConfig(replications=10, ponc=PoncConfig(malicious_fraction=0.1))
    rows = run_ablation(cfg, tmp_path)
    rate = {(r.seed, r.metric.split(":")[0]): r.value for r in rows if r.metric.endswith(":arrival_rate")}
    seeds = sorted({s for s, _ in rate})
    ablated = ("no_coding", "no_ponc", "no_dt", "abc_only")
    per_seed_bad = sum(rate[(s, "full")] < rate[(s, a)] for s in seeds for a in ablated)
    means = {label: float(np.mean([rate[(s, label)] for s in seeds])) for label in ("full",) + ablated}
    _record(request, f"{per_seed_bad} per-seed violations; means " + ", ".join(f"{k} {v:.3f}" for k, v in means.items()))
    assert len(seeds) == 10
    assert per_seed_bad == 0
    assert means["full"] > means["abc_only"]


@pytest.mark.criterion(10, "every scenario rerun with the same config and seed writes byte-identical CSV")
def test_csv_determinism(request, tmp_path):
    quick = ScenarioConfig(seed=17, duration=30.0, replications=2,
                           ponc=PoncConfig(malicious_fraction=0.1),
                           sweeps=SweepConfig(n_drones=(20, 50), speed_kmh=(40.0, 100.0), poso_runs=2000,
                                              attack_trials=5000))
    identical = {}
    for name in ("fig2", "fig10", "fig11", "fig12", "fig13"):
        run_scenario(name, quick, tmp_path / "a")
        run_scenario(name, quick, tmp_path / "b")
        identical[name] = (tmp_path / "a" / f"{name}.csv").read_bytes() == (tmp_path / "b" / f"{name}.csv").read_bytes()
    run_ablation(quick, tmp_path / "a")
    run_ablation(quick, tmp_path / "b")
    identical["ablation"] = (tmp_path / "a" / "ablation.csv").read_bytes() == (tmp_path / "b" / "ablation.csv").read_bytes()
    _record(request, ", ".join(f"{k} {'same' if v else 'DIFFERENT'}" for k, v in identical.items()))
    assert all(identical.values())
