"""Experiment harness: sweeps, simulations and the ablation grid, written as CSV plus a plot script."""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import analytics
from .analytics import DsaParams, InternalAttackParams
from .config import ConfigError, FeatureFlags, ScenarioConfig, load_config
from .ponc import ConsensusNode, run_consensus, run_poso_baseline
from .sim_core import THROUGHPUT_MODES, run, simulate_throughput

SCENARIOS = ("fig2", "fig10", "fig11", "fig12", "fig13")

# (speed m/s, density drones/m^2) triples for the mobile success curves
FIG2_CURVES = ((3.0, 2.0), (3.0, 5.0), (5.0, 5.0))

ABLATION_FLAGS = {
    "full": FeatureFlags(),
    "no_coding": FeatureFlags(coding=False),
    "no_ponc": FeatureFlags(ponc=False),
    "no_dt": FeatureFlags(dt=False),
    "abc_only": FeatureFlags(coding=False, ponc=False, dt=False),
}


class UnknownScenario(ValueError):
    pass


class OutputNotWritable(OSError):
    pass


@dataclass(frozen=True)
class ResultRow:
    scenario_id: str
    sweep_variable: str
    sweep_value: float
    metric: str
    value: float
    replication: int
    seed: int

    def __post_init__(self):
        if not (math.isfinite(self.sweep_value) and math.isfinite(self.value)):
            raise ValueError(f"non-finite value in row {self}")


COLUMNS = tuple(f.name for f in fields(ResultRow))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            ResultRow(d["scenario_id"], d["sweep_variable"], float(d["sweep_value"]), d["metric"],
                      float(d["value"]), int(d["replication"]), int(d["seed"]))
            for d in csv.DictReader(fh)
        ]


PLOT_TEMPLATE = '''\
"""Plot {csv_name}: mean of each metric against its sweep variable. Requires matplotlib."""
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
series = defaultdict(lambda: defaultdict(list))
with open(here / "{csv_name}", newline="", encoding="utf-8") as fh:
    for row in csv.DictReader(fh):
        series[(row["sweep_variable"], row["metric"])][float(row["sweep_value"])].append(float(row["value"]))

variables = sorted({{var for var, _ in series}})
fig, axes = plt.subplots(len(variables), 1, figsize=(7, 4 * len(variables)), squeeze=False)
for ax, var in zip(axes[:, 0], variables):
    for (v, metric), points in sorted(series.items()):
        if v != var:
            continue
        xs = sorted(points)
        ax.plot(xs, [sum(points[x]) / len(points[x]) for x in xs], marker="o", label=metric)
    ax.set_xlabel(var)
    ax.legend(fontsize="small")
fig.suptitle("{title}")
fig.tight_layout()
fig.savefig(here / "{png_name}")
'''


def write_outputs(name: str, rows: list, out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{name}.csv"
        path.write_text(rows_to_csv(rows), encoding="utf-8")
        (out / f"plot_{name}.py").write_text(
            PLOT_TEMPLATE.format(csv_name=path.name, png_name=f"{name}.png", title=name), encoding="utf-8")
    except OSError as exc:
        raise OutputNotWritable(f"cannot write results to {out}: {exc}") from None
    return path


# --- scenarios ------------------------------------------------------------

def _replicas(cfg: ScenarioConfig):
    return [(i, cfg.seed + i) for i in range(cfg.replications)]


def fig2_rows(cfg: ScenarioConfig) -> list:
    rows = []
    for speed, density in FIG2_CURVES:
        metric = f"success_v{speed:g}_gamma{density:g}"
        mob = replace(cfg.mobility, relative_speed=speed)
        for k in cfg.sweeps.fig2_k:
            ch = replace(cfg.channel, density=density, node_count=int(k))
            rows.append(ResultRow("fig2", "k", float(k), metric, analytics.mobile_success_rate(ch, mob), 0, cfg.seed))
    return rows


def _honest_nodes(cfg, k, rng):
    cr = analytics.truncated_normal(rng, cfg.cr.mean, cfg.cr.std, cfg.cr.min, cfg.cr.max, k)
    return [ConsensusNode(i, float(cr[i])) for i in range(k)]


def fig12_rows(cfg: ScenarioConfig) -> list:
    sw = cfg.sweeps
    seed = cfg.seed
    rows = []
    for k in sw.overhead_k:
        k = int(k)
        rng = np.random.default_rng([seed, 12, k])
        res = run_consensus(_honest_nodes(cfg, k, rng), rng, max_retries=0)
        poso = [run_poso_baseline(_honest_nodes(cfg, k, rng), rng).messages_exchanged for _ in range(sw.poso_runs)]
        rows += [
            ResultRow("fig12", "k", float(k), "ponc_messages", float(analytics.ponc_overhead(k)), 0, seed),
            ResultRow("fig12", "k", float(k), "ponc_messages_simulated", float(res.messages_exchanged), 0, seed),
            ResultRow("fig12", "k", float(k), "poso_messages", float(analytics.poso_overhead(k)), 0, seed),
            ResultRow("fig12", "k", float(k), "poso_messages_simulated", float(np.mean(poso)), 0, seed),
        ]
    k = cfg.k_candidates
    for b in sw.blocks:
        rows += [
            ResultRow("fig12", "blocks", float(b), "ponc_messages", float(b * analytics.ponc_overhead(k)), 0, seed),
            ResultRow("fig12", "blocks", float(b), "poso_messages", float(b * analytics.poso_overhead(k)), 0, seed),
        ]
    for ratio in sw.dsa_ratios:
        for z in sw.dsa_z:
            p = analytics.dsa_success_probability(DsaParams(p_m=ratio, p_h=1.0, z_blocks=int(z)))
            rows.append(ResultRow("fig12", "z", float(z), f"dsa_success_ratio{ratio:g}", p, 0, seed))
    N = sw.attack_population
    for k in sw.attack_k:
        for frac in sw.attack_fractions:
            params = InternalAttackParams(N, int(round(frac * N)), int(k), cfg.cr.mean, cfg.cr.std, cfg.cr.min, cfg.cr.max)
            p = analytics.internal_attack_probability(params, sw.attack_trials, np.random.default_rng([seed, 29, int(k), int(frac * 1000)]))
            rows.append(ResultRow("fig12", "malicious_fraction", float(frac), f"internal_attack_k{int(k)}", p, 0, seed))
    return rows


def fig11_rows(cfg: ScenarioConfig) -> list:
    sw = cfg.sweeps
    k = sw.fig11_k
    topo_cfg = replace(cfg, topology=replace(cfg.topology, k=k, n=max(max(sw.fig11_n), k)))
    n_max = max(sw.fig11_n)
    rows = []
    for n in sw.fig11_n:
        for rep, seed in _replicas(cfg):
            for q in sw.fig11_q:
                if not q < k < n:
                    continue
                tp = simulate_throughput(topo_cfg, int(n), int(q), seed, n_max=n_max)
                rows += [ResultRow("fig11", "n", float(n), f"{mode}_q{int(q)}", tp[mode], rep, seed)
                         for mode in THROUGHPUT_MODES]
    return rows


def _metrics_rows(scenario, variable, value, prefix, m, rep, seed):
    pairs = [("arrival_rate", m.arrival_rate), ("mean_delay", m.mean_delay), ("throughput", m.throughput),
             ("consensus_messages", float(m.consensus_messages))]
    return [ResultRow(scenario, variable, float(value), prefix + name, float(v), rep, seed) for name, v in pairs]


def _sweep_sim(cfg: ScenarioConfig, scenario: str, flag_sets: dict) -> list:
    points = [("n_drones", n, dict(n_drones=int(n))) for n in cfg.sweeps.n_drones]
    points += [("speed_kmh", v, dict(speed_kmh=float(v))) for v in cfg.sweeps.speed_kmh]
    rows = []
    for variable, value, change in points:
        for rep, seed in _replicas(cfg):
            for label, flags in flag_sets.items():
                m = run(replace(cfg, seed=seed, features=flags, **change))
                rows += _metrics_rows(scenario, variable, value, f"{label}:" if label else "", m, rep, seed)
    return rows


def fig10_rows(cfg: ScenarioConfig) -> list:
    return _sweep_sim(cfg, "fig10", {"": cfg.features})


def fig13_rows(cfg: ScenarioConfig) -> list:
    return _sweep_sim(cfg, "fig13", ABLATION_FLAGS)


def ablation_rows(cfg: ScenarioConfig) -> list:
    rows = []
    for rep, seed in _replicas(cfg):
        for label, flags in ABLATION_FLAGS.items():
            m = run(replace(cfg, seed=seed, features=flags))
            rows += _metrics_rows("ablation", "n_drones", cfg.n_drones, f"{label}:", m, rep, seed)
    return rows


_BUILDERS: dict[str, Callable[[ScenarioConfig], list]] = {
    "fig2": fig2_rows,
    "fig10": fig10_rows,
    "fig11": fig11_rows,
    "fig12": fig12_rows,
    "fig13": fig13_rows,
}


def run_scenario(name: str, cfg: ScenarioConfig, out_dir=None) -> list:
    """Compute one experiment, write ``<name>.csv`` and ``plot_<name>.py`` and return the rows."""
    if name not in _BUILDERS:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    rows = _BUILDERS[name](cfg)
    write_outputs(name, rows, out_dir if out_dir is not None else cfg.out_dir)
    return rows


def run_ablation(cfg: ScenarioConfig, out_dir=None) -> list:
    """The five feature configurations at the configured operating point, ``replications`` seeds each."""
    rows = ablation_rows(cfg)
    write_outputs("ablation", rows, out_dir if out_dir is not None else cfg.out_dir)
    return rows


# --- command line ---------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario file (defaults when omitted)")
    common.add_argument("--seed", type=int, help="base seed; replication i uses seed + i")
    common.add_argument("--out", help="output directory")
    common.add_argument("--reps", type=int, help="replications per sweep point")
    p = argparse.ArgumentParser(prog="escm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", parents=[common], help="analytical sweeps")
    a.add_argument("scenario", choices=("fig2", "fig12"))
    s = sub.add_parser("simulate", parents=[common], help="simulation sweeps")
    s.add_argument("scenario", choices=("fig10", "fig11", "fig13"))
    sub.add_parser("ablate", parents=[common], help="five-configuration ablation")
    return p


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.reps is not None:
        changes["replications"] = args.reps
    if args.out is not None:
        changes["out_dir"] = args.out
    try:
        return replace(cfg, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "ablate":
            rows = run_ablation(cfg)
            target = "ablation"
        else:
            rows = run_scenario(args.scenario, cfg)
            target = args.scenario
    except (ConfigError, UnknownScenario, OutputNotWritable, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(rows)} rows to {Path(cfg.out_dir) / (target + '.csv')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
