"""Trace post-processing: metric series, smoothing, percentile bands, reports."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .model import SubstrateNetwork

MS_PER_MIN = 60_000
TRANSIENT_MS = 60 * MS_PER_MIN
SMOOTH_MS = 5 * MS_PER_MIN

METRICS = ("acceptance_ratio", "concurrent_apps", "average_latency", "bandwidth_utilization", "max_resource_use",
           "mean_resource_use")
UNITS = {"acceptance_ratio": "%", "concurrent_apps": "count", "average_latency": "ms",
         "bandwidth_utilization": "%", "max_resource_use": "%", "mean_resource_use": "%"}


@dataclass
class MetricSeries:
    name: str
    times: np.ndarray  # ms
    values: np.ndarray
    units: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.times) > 1 and not (np.diff(self.times) > 0).all():
            raise ValueError("sample times must be strictly increasing")


class Replay:
    """Walks trace events and exposes the system state after each timestamp."""

    def __init__(self, events: Sequence[dict], network: SubstrateNetwork, ms_per_hop: float = 10.0):
        self.events = events
        self.cap = network.capacity_array().astype(float)
        self.bw_cap = network.bandwidth_array().astype(float)
        self.ms_per_hop = ms_per_hop
        self.has = self.cap > 0
        self.reset()

    def reset(self):
        self.i = 0
        self.node_load = np.zeros_like(self.cap)
        self.edge_load = np.zeros_like(self.bw_cap)
        self.live: Dict[int, dict] = {}
        self.decided = set()
        self.deployed = 0
        self.rejected = 0

    def advance(self, t: int) -> None:
        """Apply every event with timestamp <= t."""
        ev = self.events
        while self.i < len(ev) and ev[self.i]["t"] <= t:
            e = ev[self.i]
            self.i += 1
            kind, rid = e["kind"], e["request_id"]
            if kind == "deploy":
                d = e["details"]
                for n, dem in zip(d["nodes"], d["demand"]):
                    self.node_load[n] += dem
                for edges, bw in zip(d["links"], d["bandwidth"]):
                    for edge in edges:
                        self.edge_load[edge] += bw
                hops = [len(edges) for edges in d["links"]]
                self.live[rid] = (d, float(np.mean(hops)) * self.ms_per_hop if hops else 0.0)
                self.decided.add(rid)
                self.deployed += 1
            elif kind == "departure":
                d, _ = self.live.pop(rid)
                for n, dem in zip(d["nodes"], d["demand"]):
                    self.node_load[n] -= dem
                for edges, bw in zip(d["links"], d["bandwidth"]):
                    for edge in edges:
                        self.edge_load[edge] -= bw
            elif kind == "fail":
                self.decided.add(rid)
            elif kind == "reject":
                self.decided.add(rid)
                self.rejected += 1

    # point metrics on the current state
    def acceptance_ratio(self) -> float:
        return 100.0 * self.deployed / len(self.decided) if self.decided else 100.0

    def concurrent_apps(self) -> float:
        return float(len(self.live))

    def average_latency(self) -> float:
        if not self.live:
            return 0.0
        return float(np.mean([lat for _, lat in self.live.values()]))

    def bandwidth_utilization(self) -> float:
        if len(self.bw_cap) == 0:
            return 0.0
        return 100.0 * float(np.mean(self.edge_load / self.bw_cap))

    def _util(self) -> np.ndarray:
        return np.where(self.has, self.node_load / np.where(self.has, self.cap, 1.0), 0.0)

    def max_resource_use(self) -> float:
        return 100.0 * float(self._util().max()) if self.cap.size else 0.0

    def mean_resource_use(self) -> float:
        """Max over attributes of the device-averaged utilisation."""
        util = self._util()
        per_attr = util.sum(axis=0) / np.maximum(self.has.sum(axis=0), 1)
        return 100.0 * float(per_attr.max())


def _replay(trace) -> Replay:
    return Replay(trace.events, trace.network)


def _at(trace, t: int, metric: str) -> float:
    r = _replay(trace)
    r.advance(t)
    return getattr(r, metric)()


def average_latency(trace, t: int) -> float:
    return _at(trace, t, "average_latency")


def bandwidth_utilization(trace, t: int) -> float:
    return _at(trace, t, "bandwidth_utilization")


def max_resource_use(trace, t: int) -> float:
    return _at(trace, t, "max_resource_use")


def sample_series(trace, metrics: Iterable[str] = METRICS, step_ms: int = 1000) -> Dict[str, MetricSeries]:
    """Sample each metric on a regular grid 0, step, ..., horizon."""
    metrics = list(metrics)
    times = np.arange(0, trace.horizon_ms + 1, step_ms, dtype=np.int64)
    out = {m: np.zeros(len(times)) for m in metrics}
    r = _replay(trace)
    for k, t in enumerate(times):
        r.advance(int(t))
        for m in metrics:
            out[m][k] = getattr(r, m)()
    return {m: MetricSeries(m, times, out[m], UNITS.get(m, "")) for m in metrics}


def acceptance_ratio(trace, window_ms: int = SMOOTH_MS, step_ms: int = MS_PER_MIN) -> MetricSeries:
    """Cumulative deployed / decided, sampled per minute and smoothed."""
    s = sample_series(trace, ["acceptance_ratio"], step_ms)["acceptance_ratio"]
    return MetricSeries(s.name, s.times, smooth(s.values, window_ms // step_ms), "%")


def smooth(values, window: int) -> np.ndarray:
    """Centred moving average over ``window`` samples, truncated at the ends."""
    values = np.asarray(values, dtype=float)
    if window <= 1 or len(values) == 0:
        return values.copy()
    half = window // 2
    c = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(len(values))
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + (window - half), len(values))
    return (c[hi] - c[lo]) / (hi - lo)


def smooth_and_band(series_per_seed: Sequence[np.ndarray], window: int):
    """Per-seed smoothing, then pointwise mean and 10th/90th percentiles (linear)."""
    if not series_per_seed:
        raise ValueError("need at least one series")
    stack = np.vstack([smooth(s, window) for s in series_per_seed])
    return stack.mean(axis=0), np.percentile(stack, 10, axis=0), np.percentile(stack, 90, axis=0)


def steady_state_mean(times, values, start_ms: int = TRANSIENT_MS) -> float:
    times = np.asarray(times)
    mask = times >= start_ms
    return float(np.mean(np.asarray(values)[mask])) if mask.any() else float("nan")


def run_statistics(trace) -> dict:
    """Scalar per-run statistics beyond the time series."""
    st = list(trace.status.values())
    sizes = [b["size"] for b in trace.batches]
    return {
        "arrivals": len(st),
        "deployed": st.count("deployed"),
        "rejected": st.count("rejected"),
        "still_pending": st.count("pending"),
        "rejection_rate": 100.0 * st.count("rejected") / len(st) if st else 0.0,
        "batch_size_mean": float(np.mean(sizes)) if sizes else 0.0,
        "batch_size_max": int(max(sizes)) if sizes else 0,
    }


@dataclass
class AggregateReport:
    step_ms: int
    series: Dict[str, Dict[str, tuple]]  # allocator -> metric -> (times, mean, p10, p90)
    steady: Dict[str, Dict[str, float]]  # allocator -> metric -> steady-state mean
    stats: Dict[str, dict]

    def summary(self) -> dict:
        return {"steady_state": self.steady, "run_statistics": self.stats,
                "transient_ms": TRANSIENT_MS, "smoothing_ms": SMOOTH_MS}

    def summary_json(self) -> str:
        return json.dumps(_round(self.summary()), sort_keys=True, indent=2) + "\n"

    def csv(self, allocator: str, metric: str) -> str:
        times, mean, p10, p90 = self.series[allocator][metric]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_ms", "mean", "p10", "p90"])
        for row in zip(times, mean, p10, p90):
            w.writerow([int(row[0])] + [f"{v:.6f}" for v in row[1:]])
        return buf.getvalue()


def _round(obj):
    if isinstance(obj, float):
        return round(obj, 6)
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round(v) for v in obj]
    return obj


def aggregate(traces_by_allocator: Dict[str, Sequence], step_ms: int = 1000, window_ms: int = SMOOTH_MS) -> AggregateReport:
    series, steady, stats = {}, {}, {}
    window = max(1, window_ms // step_ms)
    for name, traces in sorted(traces_by_allocator.items()):
        per_metric: Dict[str, List[np.ndarray]] = {m: [] for m in METRICS}
        times = None
        runs = []
        for tr in traces:
            s = sample_series(tr, METRICS, step_ms)
            for m in METRICS:
                per_metric[m].append(s[m].values)
            times = s[METRICS[0]].times
            runs.append(run_statistics(tr))
        series[name], steady[name] = {}, {}
        for m in METRICS:
            mean, p10, p90 = smooth_and_band(per_metric[m], window)
            series[name][m] = (times, mean, p10, p90)
            steady[name][m] = steady_state_mean(times, mean)
        stats[name] = {k: float(np.mean([r[k] for r in runs])) for k in runs[0]} if runs else {}
    return AggregateReport(step_ms, series, steady, stats)
