"""Seeded synthetic worlds: day-level campaign records and impression streams.

Every stream is a pure function of ``(seed, campaign, day)`` so any piece of a
benchmark can be regenerated on its own.
"""

from __future__ import annotations

import numpy as np

from ..auction import HOURS, STRATEGIES, Impressions
from ..macro.data import DayRecord
from .config import MacroDataConfig, ScenarioConfig

_MACRO_STREAM = 1
_IMPRESSION_STREAM = 2
_CAMPAIGN_STREAM = 3


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in key])


# day-level records


def campaign_curve(cfg: MacroDataConfig, campaign: int) -> tuple[float, float, float]:
    """Cost scale ``s``, tCPA scale ``a`` and curvature ``gamma`` of one campaign."""
    rng = _rng(cfg.seed, _MACRO_STREAM, campaign)
    s = float(np.exp(rng.normal(cfg.cost_scale.mu, cfg.cost_scale.sigma)))
    a = float(np.exp(rng.normal(cfg.tcpa_scale.mu, cfg.tcpa_scale.sigma)))
    gamma = float(rng.uniform(cfg.gamma_low, cfg.gamma_high))
    return s, a, gamma


def true_tcpa(cfg: MacroDataConfig, campaign: int, cost) -> np.ndarray:
    s, a, gamma = campaign_curve(cfg, campaign)
    return a * (np.asarray(cost, dtype=np.float64) / s) ** gamma


def synth_macro_records(cfg: MacroDataConfig) -> list[DayRecord]:
    """Day records on concave per-campaign curves ``tCPA = a (cost/s)^gamma``.

    Days use a random strategy; non-tCPA days report the target in their own
    units (tROI against the listed price, tCPC against the average pCVR) with
    extra multiplicative noise.  The last day of every campaign is native tCPA.
    """
    records = []
    for c in range(cfg.campaigns):
        s, a, gamma = campaign_curve(cfg, c)
        rng = _rng(cfg.seed, _MACRO_STREAM, c, 1)
        price = float(np.exp(rng.normal(4.5, 0.4)))
        pcvr = float(rng.uniform(0.02, 0.08))
        for d in range(cfg.days):
            # the held-out last day is a budget change away from the usual spend
            spread = cfg.final_day_spread if d == cfg.days - 1 else cfg.day_spread
            cost = s * float(np.exp(rng.normal(0.0, spread)))
            tcpa = a * (cost / s) ** gamma * float(np.exp(rng.normal(0.0, cfg.noise)))
            strategy = "tCPA" if d == cfg.days - 1 else STRATEGIES[int(rng.choice(3, p=cfg.strategy_mix))]
            jitter = float(np.exp(rng.normal(0.0, cfg.conversion_noise)))
            gmv = cost * float(rng.uniform(2.0, 4.0))
            if strategy == "tCPA":
                target = tcpa
            elif strategy == "tROI":
                target = price / (tcpa * jitter)
            else:
                target = tcpa * jitter * pcvr
            records.append(DayRecord(f"c{c:03d}", d, strategy, target, cost, gmv, pcvr, price))
    return records


# impression streams


def campaign_scale(cfg: ScenarioConfig, campaign: int) -> float:
    """Per-campaign value multiplier so campaigns differ in size."""
    return float(np.exp(_rng(cfg.seed, _CAMPAIGN_STREAM, campaign).normal(0.0, 0.3)))


def synth_impressions(cfg: ScenarioConfig, campaign: int, day: int) -> Impressions:
    """Impression stream for one campaign-day in arrival order.

    Shift days draw ``volume_multiplier`` times as many impressions and scale
    every winning price by ``wp_multiplier``.
    """
    rng = _rng(cfg.seed, _IMPRESSION_STREAM, campaign, day)
    shift = cfg.shift.is_shift_day(day)
    n = int(round(cfg.impressions_per_day * (cfg.shift.volume_multiplier if shift else 1.0)))
    curve = np.asarray(cfg.volume_curve, dtype=np.float64)
    hours = np.sort(rng.choice(HOURS, size=n, p=curve / curve.sum()))
    pctr = np.clip(rng.beta(cfg.pctr.a, cfg.pctr.b, n), 1e-6, 1 - 1e-6)
    pcvr = np.clip(rng.beta(cfg.pcvr.a, cfg.pcvr.b, n), 1e-6, 1 - 1e-6)
    ppay = np.exp(rng.normal(cfg.ppay.mu, cfg.ppay.sigma, n)) * campaign_scale(cfg, campaign)
    value = pctr * pcvr * ppay
    wp = cfg.wp.value_ratio * value * np.exp(rng.normal(0.0, cfg.wp.sigma, n))
    if shift:
        wp = wp * cfg.shift.wp_multiplier
    return Impressions(np.arange(n), hours, pctr, pcvr, ppay, np.maximum(wp, 1e-9))


def day_budget(cfg: ScenarioConfig, campaign: int) -> float:
    """Budget as a fraction of the expected cost of winning every impression on a normal day."""
    mean_ctr = cfg.pctr.a / (cfg.pctr.a + cfg.pctr.b)
    mean_cvr = cfg.pcvr.a / (cfg.pcvr.a + cfg.pcvr.b)
    mean_pay = np.exp(cfg.ppay.mu + cfg.ppay.sigma ** 2 / 2)
    mean_wp = cfg.wp.value_ratio * mean_ctr * mean_cvr * mean_pay * np.exp(cfg.wp.sigma ** 2 / 2)
    return float(cfg.budget_fraction * cfg.impressions_per_day * mean_wp * campaign_scale(cfg, campaign))
