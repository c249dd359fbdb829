"""Monte Carlo coverage, length and cost studies on synthetic two-region images.

Every replication ``r`` draws from its own stream seeded by
``SeedSequence(master_seed, spawn_key=(r, k))`` (``k = 0`` for the image,
``k = 1..`` for each interval method), so results do not depend on how
replications are spread over worker processes or which methods are run.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bootstrap import FULL_T, METHODS, PERC, BootstrapConfig, confidence_interval
from .detectors import GambiniDetector, KruskalWallisDetector, PixelStrip, SplitSearchConfig
from .g0i import G0IParams, gamma_for_unit_mean, sample

AGGREGATIONS = ("window", "mean", "median", "center")


@dataclass(frozen=True)
class SyntheticImageSpec:
    """Two-region image; ``edge_j=None`` gives a single region (no edge).

    Leaving ``gamma_left``/``gamma_right`` unset picks the unit-mean scale for
    that side.
    """

    height: int = 20
    width: int = 100
    edge_j: Optional[int] = 50
    alpha_left: float = -2.0
    alpha_right: float = -10.0
    looks: float = 1.0
    gamma_left: Optional[float] = None
    gamma_right: Optional[float] = None

    def __post_init__(self):
        if self.height < 1 or self.width < 4:
            raise ValueError("image must be at least 1 x 4")
        if self.edge_j is not None and not 1 <= self.edge_j <= self.width - 1:
            raise ValueError(f"edge_j must lie in 1..{self.width - 1}")

    def params(self) -> tuple[G0IParams, G0IParams]:
        def side(alpha, gamma):
            if gamma is None:
                gamma = gamma_for_unit_mean(alpha, self.looks)
            return G0IParams(alpha, gamma, self.looks)

        left = side(self.alpha_left, self.gamma_left)
        if self.edge_j is None:
            return left, left
        return left, side(self.alpha_right, self.gamma_right)


def generate_image(spec: SyntheticImageSpec, rng: np.random.Generator) -> np.ndarray:
    """``(height, width)`` image; columns ``< edge_j`` come from the left law."""
    left, right = spec.params()
    split = spec.width if spec.edge_j is None else spec.edge_j
    a = sample(left, spec.height * split, rng).reshape(spec.height, split)
    if split == spec.width:
        return a
    b = sample(right, spec.height * (spec.width - split), rng)
    return np.hstack([a, b.reshape(spec.height, spec.width - split)])


def image_to_strip(image: np.ndarray, aggregation: str = "window") -> PixelStrip:
    """Turn a ``(rows, N)`` window into a strip along its columns.

    ``window`` keeps every pixel (strip of shape ``(N, rows)``), ``mean`` and
    ``median`` reduce each column, ``center`` takes the middle row.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("image must be a non-empty 2-D array")
    if aggregation == "window":
        values = img.T if img.shape[0] > 1 else img[0]
    elif aggregation == "mean":
        values = img.mean(axis=0)
    elif aggregation == "median":
        values = np.median(img, axis=0)
    elif aggregation == "center":
        values = img[img.shape[0] // 2]
    else:
        raise ValueError(f"unsupported aggregation {aggregation!r}; choose from {AGGREGATIONS}")
    return PixelStrip(values)


@dataclass(frozen=True)
class ExperimentConfig:
    spec: SyntheticImageSpec = field(default_factory=SyntheticImageSpec)
    R: int = 200
    bootstrap: BootstrapConfig = field(default_factory=lambda: BootstrapConfig(B=199, clamp=False))
    methods: tuple = METHODS
    master_seed: int = 0
    aggregation: str = "window"
    detector: str = "kw"

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("R must be >= 1")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if self.detector not in ("kw", "gambini"):
            raise ValueError("detector must be 'kw' or 'gambini'")

    def make_detector(self):
        if self.detector == "kw":
            return KruskalWallisDetector(SplitSearchConfig.full())
        return GambiniDetector(self.spec.looks)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d


@dataclass
class MethodSummary:
    coverage: Optional[float]
    distance: Optional[float]
    delta: Optional[float]
    mean_length: float
    mean_runtime: float
    n_ok: int
    n_failed: int


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    methods: dict
    nominal: float
    replications: list = field(default_factory=list, repr=False)

    @property
    def has_edge(self) -> bool:
        return self.config.spec.edge_j is not None

    def to_dict(self, trace: bool = False) -> dict:
        out = {
            "version": __version__,
            "numpy": np.__version__,
            "master_seed": self.config.master_seed,
            "config": self.config.to_dict(),
            "nominal": self.nominal,
            "methods": {m: asdict(s) for m, s in self.methods.items()},
        }
        if trace:
            out["replications"] = self.replications
        return out

    def to_json(self, trace: bool = False) -> str:
        return json.dumps(self.to_dict(trace), indent=2, sort_keys=True)

    def rows(self) -> list[dict]:
        spec = self.config.spec
        rows = []
        for m, s in self.methods.items():
            row = {"alpha_left": spec.alpha_left,
                   "alpha_right": spec.alpha_right if self.has_edge else spec.alpha_left,
                   "edge_j": "" if spec.edge_j is None else spec.edge_j,
                   "method": m, "R": self.config.R, "B": self.config.bootstrap.B,
                   "level": self.nominal}
            if self.has_edge:
                row.update(coverage=s.coverage, distance=s.distance, delta=s.delta)
            row.update(mean_length=s.mean_length, mean_runtime=s.mean_runtime,
                       n_ok=s.n_ok, n_failed=s.n_failed)
            rows.append(row)
        return rows

    def trace_rows(self) -> list[dict]:
        return [dict(r) for r in self.replications]


TIMING_COLUMNS = ("mean_runtime", "runtime")


def rows_to_csv(rows: Sequence[dict]) -> str:
    """CSV text with the union of keys as header, in first-seen order."""
    header: list[str] = []
    for r in rows:
        header += [k for k in r if k not in header]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, restval="", lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _stream(master_seed: int, r: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(r, k)))


def _replicate(config: ExperimentConfig, r: int) -> list[dict]:
    spec = config.spec
    image = generate_image(spec, _stream(config.master_seed, r, 0))
    strip = image_to_strip(image, config.aggregation)
    detector = config.make_detector()
    out = []
    for m in config.methods:
        rng = _stream(config.master_seed, r, 1 + METHODS.index(m))
        rec = {"r": r, "method": m}
        t0 = time.perf_counter()
        try:
            ci = confidence_interval(strip, detector, replace(config.bootstrap, method=m), rng)
        except Exception as exc:  # recorded, the run goes on
            rec.update(ok=False, error=f"{type(exc).__name__}: {exc}",
                       runtime=time.perf_counter() - t0)
        else:
            rec.update(ok=True, lower=ci.lower, upper=ci.upper, length=ci.length,
                       runtime=time.perf_counter() - t0)
            if spec.edge_j is not None:
                rec["covered"] = ci.contains(spec.edge_j)
        out.append(rec)
    return out


def _replicate_block(args):
    config, rs = args
    return [rec for r in rs for rec in _replicate(config, r)]


def summarize(config: ExperimentConfig, records: list[dict]) -> ExperimentReport:
    nominal = config.bootstrap.level
    has_edge = config.spec.edge_j is not None
    methods = {}
    for m in config.methods:
        recs = [x for x in records if x["method"] == m]
        ok = [x for x in recs if x["ok"]]
        timed = [x["runtime"] for x in recs if x["r"] != 0] or [x["runtime"] for x in recs]
        coverage = distance = None
        if has_edge and ok:
            coverage = float(np.mean([x["covered"] for x in ok]))
            distance = abs(coverage - nominal) * 100
        methods[m] = MethodSummary(
            coverage=coverage, distance=distance, delta=None,
            mean_length=float(np.mean([x["length"] for x in ok])) if ok else math.nan,
            mean_runtime=float(np.mean(timed)),
            n_ok=len(ok), n_failed=len(recs) - len(ok))
    if has_edge and PERC in methods and methods[PERC].distance is not None:
        for s in methods.values():
            if s.distance is not None:
                s.delta = methods[PERC].distance - s.distance
    return ExperimentReport(config, methods, nominal, records)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Run ``config.R`` replications, optionally over a process pool.

    The replication index is the only source of randomness, so any number of
    workers yields the same report apart from runtimes.
    """
    reps = list(range(config.R))
    if workers <= 1 or config.R == 1:
        records = _replicate_block((config, reps))
    else:
        blocks = [reps[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_replicate_block, [(config, b) for b in blocks if b])
            records = [rec for part in parts for rec in part]
        records.sort(key=lambda x: (x["r"], METHODS.index(x["method"])))
    return summarize(config, records)


def run_grid(base: ExperimentConfig, alpha_left: Sequence[float], alpha_right: Sequence[float],
             workers: int = 1) -> list[ExperimentReport]:
    """One experiment per (alpha_left, alpha_right) pair; equal pairs have no edge."""
    reports = []
    for al in alpha_left:
        for ar in alpha_right:
            edge = None if al == ar else (base.spec.edge_j or base.spec.width // 2)
            spec = replace(base.spec, alpha_left=al, alpha_right=ar, edge_j=edge)
            reports.append(run_experiment(replace(base, spec=spec), workers))
    return reports


def cost_benchmark(config: Optional[ExperimentConfig] = None, repeats: int = 3) -> dict:
    """Mean seconds per replication for each method and the share of bootstrap-t.

    One untimed warm-up replication runs first.  Only the ratios are meaningful
    across machines.
    """
    if config is None:
        config = ExperimentConfig(
            spec=SyntheticImageSpec(alpha_left=-2, alpha_right=-3),
            R=repeats, bootstrap=BootstrapConfig(B=1000, B_prime=50, B_double_prime=200, B_x=200))
    config = replace(config, R=repeats)
    _replicate(replace(config, master_seed=config.master_seed + 1), 0)
    records = _replicate_block((config, range(1, repeats + 1)))
    table = {}
    for m in config.methods:
        times = [x["runtime"] for x in records if x["method"] == m]
        table[m] = {"seconds": float(np.mean(times)), "median_seconds": float(np.median(times))}
    if FULL_T in table:
        base = table[FULL_T]["seconds"]
        for row in table.values():
            row["percent_of_full_t"] = 100.0 * row["seconds"] / base
    return table
