"""Paired-seed experiments over the variant set, and the segment-count sweep.

For each replicate seed the runner
  * scores every macro variant on the day-record world (wmape, mape, perf10),
  * logs behaviour days on the auction world's training days, which yield
    both the offline trajectories for the sequence policy and the day records
    for an auction-world price-volume model,
  * controls every held-out campaign-day under each variant and scores it
    against the hindsight oracle.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .. import __version__
from ..auction import STRATEGIES
from ..macro.data import DayRecord, history_matrix
from ..macro.model import MacroConfig, PriceVolumeModel, base_target
from ..macro.train import train_macro
from ..micro.control import behavior_day, control_day
from ..micro.dt import DecisionTransformer, MicroConfig, train_micro
from ..micro.mdp import Trajectory
from .config import BenchConfig
from .metrics import DayOutcome, constraint_satisfaction
from .oracle import achieved_value, oracle_value
from .synth import campaign_scale, day_budget, synth_impressions, synth_macro_records

log = logging.getLogger(__name__)

# variant -> (macro overrides, hourly mode)
VARIANTS: dict[str, tuple[dict, str]] = {
    "KBD": ({}, "FUSED"),
    "KBD w/o DT": ({}, "PID"),
    "KBD w/o PID": ({}, "DT"),
    "w/o IE": ({"use_ie": False}, "FUSED"),
    "w/o GLA": ({"use_gla": False}, "FUSED"),
    "w/o L_margin": ({"alpha_margin": 0.0}, "FUSED"),
    "w/o augmented data": ({"use_augmented": False}, "FUSED"),
}
METRICS = ("wmape", "mape", "perf10", "r_ratio", "constraint_satisfaction", "cost_exhaust", "gmv")
# direction in which a metric improves, for paired win counts
HIGHER_IS_BETTER = {
    "wmape": False, "mape": False, "perf10": True, "r_ratio": True,
    "constraint_satisfaction": True, "cost_exhaust": True, "gmv": True,
}


def macro_config(cfg: BenchConfig, seed: int, **overrides) -> MacroConfig:
    m = cfg.macro
    return replace(
        MacroConfig(
            segments=m.segments, epochs=m.epochs, batch_size=m.batch_size, lr=m.lr, history=m.history,
            mse_scale=m.mse_scale, head_gain=m.head_gain, seed=seed,
        ),
        **overrides,
    )


def micro_config(cfg: BenchConfig, seed: int, **overrides) -> MicroConfig:
    m = cfg.micro
    return replace(MicroConfig(epochs=m.epochs, batch_size=m.batch_size, lr=m.lr, beta=m.beta, seed=seed), **overrides)


def replicate_seeds(cfg: BenchConfig) -> list[int]:
    return [cfg.seed + i for i in range(cfg.bench.seeds)]


# auction world


@dataclass
class AuctionWorld:
    """Logged training days of one replicate seed."""

    cfg: BenchConfig
    seed: int
    trajectories: list[Trajectory] = field(default_factory=list)
    records: list[DayRecord] = field(default_factory=list)
    gmv_ref: dict[int, float] = field(default_factory=dict)
    budgets: dict[int, float] = field(default_factory=dict)
    caps: dict[int, float] = field(default_factory=dict)

    @property
    def scenario(self):
        return self.cfg.scenario.model_copy(update={"seed": self.seed})

    def eval_days(self) -> range:
        return range(self.cfg.micro.train_days, self.cfg.scenario.days)


def declared_cap(scenario, campaign: int) -> float:
    return float(scenario.cap_factor * np.exp(scenario.ppay.mu) * campaign_scale(scenario, campaign))


def log_training_days(cfg: BenchConfig, seed: int) -> AuctionWorld:
    """Behaviour days on the training window: the pacing rule, plus noisy copies.

    Every logged day runs at its own base target and budget drawn around the
    campaign's declared cap and budget, so the logs carry a price-volume signal.
    """
    world = AuctionWorld(cfg, seed)
    sc = world.scenario
    mc = cfg.micro
    if mc.train_days >= sc.days:
        raise ValueError("no held-out days: train_days must be smaller than scenario days")
    mix = np.asarray(cfg.macro_data.strategy_mix)
    for c in range(sc.campaigns):
        rng = np.random.default_rng([seed, 7, c])
        B, cap = day_budget(sc, c), declared_cap(sc, c)
        world.budgets[c], world.caps[c] = B, cap
        price = float(np.exp(sc.ppay.mu + sc.ppay.sigma ** 2 / 2) * campaign_scale(sc, c))
        pcvr = sc.pcvr.a / (sc.pcvr.a + sc.pcvr.b)
        days = []
        for d in range(mc.train_days):
            imps = synth_impressions(sc, c, d)
            target = cap * float(np.exp(rng.normal(0.0, sc.target_spread)))
            budget = B * float(np.exp(rng.normal(0.0, sc.budget_spread)))
            days.append((d, imps, target, budget))
        # GMV reference: average logged GMV of the pacing rule over the last week of the window
        runs = {d: behavior_day(imps, budget, target, 1.0, None, campaign=c, day=d, volume_curve=sc.volume_curve,
                                kp=mc.kp, ki=mc.ki)
                for d, imps, target, budget in days}
        recent = sorted(runs)[-7:]
        world.gmv_ref[c] = max(float(np.mean([runs[d].gmv for d in recent])), 1e-9)
        for d, imps, target, budget in days:
            for k in range(1 + mc.noisy_copies):
                res = behavior_day(
                    imps, budget, target, world.gmv_ref[c], rng, noise=mc.action_noise if k else 0.0,
                    campaign=c, day=d, volume_curve=sc.volume_curve, kp=mc.kp, ki=mc.ki,
                )
                world.trajectories.append(res.trajectory)
            base = runs[d]
            strategy = STRATEGIES[int(rng.choice(3, p=mix))]
            value = {"tCPA": target, "tROI": price / target, "tCPC": target * pcvr}[strategy]
            world.records.append(DayRecord(f"a{c:03d}", d, strategy, value, base.cost, base.gmv, pcvr, price))
    return world


@dataclass
class DayScore:
    value: float
    oracle: float
    approximate: bool
    outcome: DayOutcome
    gmv: float


def score_day(world: AuctionWorld, model: DecisionTransformer, c_ma: float, campaign: int, day: int, mode: str) -> DayScore:
    sc = world.scenario
    imps = synth_impressions(sc, campaign, day)
    B, cap = world.budgets[campaign], world.caps[campaign]
    res = control_day(
        imps, B, c_ma, mode, world.gmv_ref[campaign], model if mode != "PID" else None,
        campaign=campaign, day=day, volume_curve=sc.volume_curve, kp=world.cfg.micro.kp, ki=world.cfg.micro.ki,
    )
    star = oracle_value(imps, B, cap, sc.value, exact_max=world.cfg.bench.oracle_exact_max)
    got = achieved_value(imps, res.won_ids, B, cap, sc.value)
    return DayScore(got, star.value, star.approximate, DayOutcome(res.cost, B, res.conversions, cap), res.gmv)


def evaluate_control(world: AuctionWorld, model: DecisionTransformer, pv_model: PriceVolumeModel, mode: str) -> dict:
    scores = []
    for c in range(world.scenario.campaigns):
        hist = history_matrix(world.records, f"a{c:03d}", pv_model.config.history)
        c_ma = base_target(hist, world.budgets[c], pv_model)
        for d in world.eval_days():
            scores.append(score_day(world, model, c_ma, c, d, mode))
    oracle_total = sum(s.oracle for s in scores)
    return {
        "r_ratio": sum(s.value for s in scores) / oracle_total if oracle_total > 0 else float("nan"),
        "constraint_satisfaction": constraint_satisfaction(s.outcome for s in scores),
        "cost_exhaust": sum(s.outcome.cost for s in scores) / sum(s.outcome.budget for s in scores),
        "gmv": sum(s.gmv for s in scores),
        "oracle_approximate": any(s.approximate for s in scores),
    }


# benchmark


def _macro_key(overrides: dict) -> str:
    return json.dumps(overrides, sort_keys=True)


def run_benchmark(cfg: BenchConfig, variants: Iterable[str] | None = None) -> dict:
    """Train and evaluate each variant on every replicate seed; returns the report document."""
    names = list(cfg.bench.variants if variants is None else variants)
    unknown = [v for v in names if v not in VARIANTS]
    if unknown:
        raise ValueError(f"unknown variants {unknown}; choose from {list(VARIANTS)}")
    seeds = replicate_seeds(cfg)
    per_seed: dict[str, list[dict]] = {v: [] for v in names}
    notes = []
    for seed in seeds:
        if not names:
            break
        records = synth_macro_records(cfg.macro_data.model_copy(update={"seed": seed}))
        world = log_training_days(cfg, seed)
        needs_policy = any(VARIANTS[v][1] != "PID" for v in names)
        policy = train_micro(world.trajectories, micro_config(cfg, seed))[0] if needs_policy else None
        macro_cache: dict[str, dict] = {}
        pv_cache: dict[str, PriceVolumeModel] = {}
        for v in names:
            overrides, mode = VARIANTS[v]
            key = _macro_key(overrides)
            if key not in macro_cache:
                _, rep = train_macro(records, macro_config(cfg, seed, **overrides))
                macro_cache[key] = {"wmape": rep.wmape, "mape": rep.mape, "perf10": rep.perf10}
                pv_cache[key] = train_macro(world.records, macro_config(cfg, seed, **overrides))[0]
            row = {"seed": seed, **macro_cache[key], **evaluate_control(world, policy, pv_cache[key], mode)}
            per_seed[v].append(row)
    if any(r["oracle_approximate"] for rows in per_seed.values() for r in rows):
        notes.append(
            f"days above {cfg.bench.oracle_exact_max} impressions use the greedy oracle, a lower bound; "
            "r_ratio may exceed 1 slightly"
        )
    notes.append("shift-day multipliers are invented defaults, not measured values")
    return build_report(cfg, names, per_seed, seeds, notes)


def _mean(rows: list[dict], metric: str) -> float:
    vals = [r[metric] for r in rows]
    return float(np.mean(vals)) if vals else float("nan")


def paired_wins(per_seed: dict[str, list[dict]], reference: str = "KBD") -> dict:
    """Per variant and metric: seeds where ``reference`` is strictly better, equal, worse."""
    if reference not in per_seed:
        return {}
    out = {}
    ref = {r["seed"]: r for r in per_seed[reference]}
    for v, rows in per_seed.items():
        if v == reference:
            continue
        table = {}
        for m in METRICS:
            better = equal = worse = 0
            for r in rows:
                a, b = ref[r["seed"]][m], r[m]
                if a == b:
                    equal += 1
                elif (a > b) == HIGHER_IS_BETTER[m]:
                    better += 1
                else:
                    worse += 1
            table[m] = {"reference_better": better, "equal": equal, "reference_worse": worse}
        out[v] = table
    return out


def build_report(cfg: BenchConfig, names, per_seed, seeds, notes) -> dict:
    return {
        "format": "bidopt-report/1",
        "version": __version__,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "replicate_seeds": list(seeds),
        "config": cfg.model_dump(mode="json"),
        "variants": {
            v: {"per_seed": per_seed[v], "mean": {m: _mean(per_seed[v], m) for m in METRICS}} for v in names
        },
        "paired_vs_KBD": paired_wins(per_seed),
        "notes": notes,
    }


# segment sweep


def sweep_segments(cfg: BenchConfig, segments: Iterable[int]) -> dict:
    """Held-out wmape of the full macro model for each segment count, per replicate seed."""
    ns = sorted(set(int(n) for n in segments))
    if not ns or ns[0] < 2 or ns[-1] > 32:
        raise ValueError("segment counts must lie in 2..32")
    curve = {}
    for n in ns:
        vals = []
        for seed in replicate_seeds(cfg):
            records = synth_macro_records(cfg.macro_data.model_copy(update={"seed": seed}))
            vals.append(train_macro(records, macro_config(cfg, seed, segments=n))[1].wmape)
        curve[n] = float(np.mean(vals))
    spread = max(curve.values()) - min(curve.values())
    return {
        "format": "bidopt-sweep/1",
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "replicate_seeds": replicate_seeds(cfg),
        "wmape": {str(n): curve[n] for n in ns},
        "spread": spread,
    }


# persistence


def _dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=True) + "\n"


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def report_tables(report: dict) -> dict[str, str]:
    """One delimited table per metric: a row per seed, a column per variant."""
    variants = list(report["variants"])
    tables = {}
    for m in METRICS:
        rows = []
        for i, seed in enumerate(report["replicate_seeds"]):
            per = [report["variants"][v]["per_seed"][i][m] if i < len(report["variants"][v]["per_seed"]) else ""
                   for v in variants]
            rows.append([seed, *per])
        tables[f"{m}.csv"] = _csv(["seed", *variants], rows)
    return tables


def emit_report(report: dict, out_dir: str | Path) -> list[Path]:
    """Write ``report.json`` plus one CSV per metric; identical reports give identical bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.json"]
    written[0].write_text(_dumps(report))
    for name, text in report_tables(report).items():
        path = out / name
        path.write_text(text)
        written.append(path)
    return written


def emit_sweep(sweep: dict, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc, table = out / "sweep.json", out / "sweep_segments.csv"
    doc.write_text(_dumps(sweep))
    table.write_text(_csv(["segments", "wmape"], [(int(n), w) for n, w in sweep["wmape"].items()]))
    return [doc, table]
