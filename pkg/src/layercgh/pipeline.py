"""Batch helpers shared by the CLI: scene suites, generation runs, aggregation."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fields import OpticalConfig, RgbdFrame
from .generation import HologramSample, Method, generate_color
from .propagation import DEFAULT_OPTIONS, PropagationOptions
from .quality import MetricsRecord, evaluate_sample, format_metric
from .scenes import SceneParams, synthesize_scene

CHANNEL_NAMES = ("r", "g", "b")


def scene_seed(base_seed: int, index: int) -> int:
    """Independent 63-bit seed for scene ``index`` of a run."""
    state = np.random.SeedSequence([int(base_seed), int(index)]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def sample_id(index: int) -> str:
    return f"s{index:05d}"


def _map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def make_suite(
    config: OpticalConfig, params: SceneParams, n: int, seed: int, workers: int = 1
) -> list[tuple[str, int, RgbdFrame]]:
    def one(i):
        s = scene_seed(seed, i)
        return sample_id(i), s, synthesize_scene(params.replace(seed=s), config)

    return _map(one, range(n), workers)


def run_method(
    frames: list[RgbdFrame],
    method: Method | str,
    options: PropagationOptions = DEFAULT_OPTIONS,
    workers: int = 1,
    ids: list[str] | None = None,
) -> list[HologramSample]:
    ids = ids or [sample_id(i) for i in range(len(frames))]
    return _map(
        lambda pair: generate_color(pair[1], method, options, sample_id=pair[0]),
        list(zip(ids, frames)),
        workers,
    )


def evaluate_all(
    samples: list[HologramSample],
    frames: list[RgbdFrame],
    n_fip_layers: int | None = None,
    options: PropagationOptions = DEFAULT_OPTIONS,
    workers: int = 1,
) -> list[MetricsRecord]:
    return _map(
        lambda pair: evaluate_sample(pair[0], pair[1], n_fip_layers, options),
        list(zip(samples, frames)),
        workers,
    )


@dataclass
class SummaryRow:
    method: str
    channel: str
    metric: str
    min: float
    avg: float
    max: float

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "channel": self.channel,
            "metric": self.metric,
            "min": format_metric(self.min),
            "avg": format_metric(self.avg),
            "max": format_metric(self.max),
        }


def _stats(values) -> tuple[float, float, float]:
    values = np.asarray(values, dtype=np.float64)
    finite = values[np.isfinite(values)]
    avg = float(np.mean(values)) if finite.size == values.size else math.inf
    return float(values.min()), avg, float(values.max())


def summarize(records: list[MetricsRecord]) -> list[SummaryRow]:
    """min/avg/max over samples, per channel and for the channel mean."""
    rows = []
    by_method: dict[str, list[MetricsRecord]] = {}
    for rec in records:
        by_method.setdefault(rec.method, []).append(rec)
    for method, recs in by_method.items():
        n_channels = len(recs[0].psnr_fip)
        names = [CHANNEL_NAMES[c] if n_channels == 3 else str(c) for c in range(n_channels)]
        for metric in ("psnr", "ssim"):
            per = np.array([getattr(r, f"{metric}_fip") for r in recs], dtype=np.float64)
            for c, name in enumerate(names):
                rows.append(SummaryRow(method, name, metric, *_stats(per[:, c])))
            rows.append(SummaryRow(method, "mean", metric, *_stats(per.mean(axis=1))))
    return rows
