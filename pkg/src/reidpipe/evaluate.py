"""Split protocol, ranking, CMC computation, and report emission.

Identities are split in half into train/test per trial.  Train-side
descriptors fit PCA and the KISSME metric; test-side descriptors are
projected and ranked camera 1 (query) against camera 2 (gallery) with a
set-to-set distance.  Trials are averaged with each trial driven by its
own deterministically derived sub-seed, so runs are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import Dataset, RngHandle
from .cycle import SamplingStrategy
from .errors import (MissingGalleryEntry, NoCycleFound, TooFewIdentities)
from .feature import (CycleDescriptor, Extractor, ExternalFeatures,
                      HandcraftedExtractor, describe_sequence,
                      load_external_features)
from .metric import (MahalanobisModel, MetricModel, PairSet, PcaModel,
                     fit_kissme, fit_pca, identity_metric, maha_dist, project,
                     set_distance_avg, set_distance_min)

SUMMARY_RANKS = (1, 5, 20)


@dataclass(frozen=True)
class Config:
    """Resolved experiment configuration.

    Defaults follow the strongest settings found in the ablations: four
    representative frames per cycle, max pooling, 100 PCA dimensions,
    KISSME with the averaged set distance, ten averaged trials.
    """

    strategy: str = "representative"
    k: int = 4
    pooling: str = "max"
    extractor: str = "handcrafted"  # "handcrafted" or a path to an FVEC file
    pca_dim: int = 100
    metric: str = "kissme"          # "euclidean" | "kissme"
    measure: str = "avg"            # "min" | "avg"
    trials: int = 10
    seed: int = 0

    def fingerprint(self) -> str:
        """Flat ``key = value`` rendering, also used for config.lock."""
        lines = [f"{name} = {getattr(self, name)}"
                 for name in ("strategy", "k", "pooling", "extractor",
                              "pca_dim", "metric", "measure", "trials",
                              "seed")]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SplitPlan:
    """One trial's identity split and its derived seed."""

    trial_seed: int
    train_ids: frozenset[str]
    test_ids: frozenset[str]


@dataclass(frozen=True)
class CmcCurve:
    """Cumulative match rate per rank, rank 1 through gallery size."""

    rates: np.ndarray

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=np.float64)
        if rates.ndim != 1 or len(rates) == 0:
            raise ValueError("rates must be a nonempty 1-D array")
        if np.any(rates < -1e-12) or np.any(rates > 1 + 1e-12):
            raise ValueError("rates must lie in [0, 1]")
        if np.any(np.diff(rates) < -1e-12):
            raise ValueError("rates must be non-decreasing")
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)

    def rate_at(self, rank: int) -> float:
        """Rate at the given rank, clamped to the gallery size."""
        return float(self.rates[min(rank, len(self.rates)) - 1])


@dataclass(frozen=True)
class TrialReport:
    """Per-trial and averaged CMC plus the configuration fingerprint."""

    per_trial: tuple[CmcCurve, ...]
    average: CmcCurve
    config: Config
    fallbacks: tuple[tuple[int, str, int], ...] = ()  # (trial, person, camera)

    def summary(self) -> dict[int, float]:
        return {r: self.average.rate_at(r) for r in SUMMARY_RANKS}


def make_splits(ids, trials: int, seed: int) -> list[SplitPlan]:
    """Half splits of the identity set, one independent plan per trial."""
    ids = sorted(ids)
    if len(ids) < 2:
        raise TooFewIdentities(f"need >= 2 identities, got {len(ids)}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    root = RngHandle(seed)
    plans = []
    for t in range(trials):
        handle = root.child("trial", t)
        shuffled = list(ids)
        handle.generator().shuffle(shuffled)
        cut = math.ceil(len(ids) / 2)
        plans.append(SplitPlan(trial_seed=handle.seed,
                               train_ids=frozenset(shuffled[:cut]),
                               test_ids=frozenset(shuffled[cut:])))
    return plans


def rank_queries(queries: dict, gallery: dict, measure: str = "avg",
                 dist=None) -> dict:
    """Sort gallery identities by set distance for every query identity.

    Ties are broken by ascending identity label so rankings are
    deterministic.  Raises MissingGalleryEntry when a query identity has
    no gallery descriptors at all (the gallery must cover the queries).
    """
    if measure not in ("min", "avg"):
        raise ValueError(f"unknown measure {measure!r}")
    set_dist = set_distance_min if measure == "min" else set_distance_avg
    kwargs = {} if dist is None else {"dist": dist}

    missing = set(queries) - set(gallery)
    if missing:
        raise MissingGalleryEntry(f"identities absent from gallery: "
                                  f"{sorted(missing)}")
    gallery_ids = sorted(gallery)
    ranked = {}
    for qid in sorted(queries):
        scored = [(set_dist(queries[qid], gallery[gid], **kwargs), gid)
                  for gid in gallery_ids]
        ranked[qid] = [gid for _, gid in sorted(scored)]
    return ranked


def compute_cmc(ranked: dict, truth: dict) -> CmcCurve:
    """Fraction of queries whose true identity appears within each rank."""
    if not ranked:
        raise ValueError("no ranked queries")
    sizes = {len(lst) for lst in ranked.values()}
    if len(sizes) != 1:
        raise ValueError("ranked lists must all cover the same gallery")
    g = sizes.pop()
    hits = np.zeros(g)
    for qid, lst in ranked.items():
        try:
            position = lst.index(truth[qid])
        except ValueError:
            raise MissingGalleryEntry(
                f"true identity {truth[qid]!r} not ranked for {qid!r}") from None
        hits[position] += 1
    return CmcCurve(rates=np.cumsum(hits) / len(ranked))


def build_extractor(config: Config) -> Extractor:
    if config.extractor == "handcrafted":
        return HandcraftedExtractor()
    return ExternalFeatures(load_external_features(config.extractor))


class _CachingExtractor(Extractor):
    """Memoizes per-frame vectors across trials of one evaluation run."""

    def __init__(self, inner: Extractor):
        self.inner = inner
        self.dim = inner.dim
        self._cache: dict[tuple[str, int, int, int], np.ndarray] = {}

    def extract(self, frame):
        return self.inner.extract(frame)

    def vectors(self, seq, indices):
        rows = []
        for i in indices:
            key = (seq.person_id, seq.camera_id, id(seq), int(i))
            if key not in self._cache:
                self._cache[key] = self.inner.vectors(seq, [i])[0]
            rows.append(self._cache[key])
        return np.stack(rows)


def _describe_split(dataset: Dataset, ids, config: Config,
                    extractor: Extractor, trial_rng: RngHandle,
                    trial: int, fallbacks: list) -> list[CycleDescriptor]:
    strategy = SamplingStrategy(config.strategy, config.k)
    fallback = SamplingStrategy("random_halves", config.k)
    out = []
    for idx, seq in enumerate(dataset.sequences):
        if seq.person_id not in ids:
            continue
        rng = trial_rng.child("sample", seq.camera_id, seq.person_id, idx)
        try:
            out.extend(describe_sequence(seq, strategy, extractor,
                                         config.pooling, rng))
        except NoCycleFound:
            fallbacks.append((trial, seq.person_id, seq.camera_id))
            out.extend(describe_sequence(seq, fallback, extractor,
                                         config.pooling, rng))
    return out


def _build_pairs(projected: dict, train_ids, cam_q: int, cam_g: int,
                 rng: RngHandle) -> PairSet:
    """All cross-camera same-identity pairs, plus a 10x seeded sample of
    different-identity pairs (keeps the dissimilar covariance
    well-conditioned without enumerating the full quadratic set)."""
    q_rows = [(pid, v) for pid in sorted(train_ids)
              for v in projected.get((pid, cam_q), [])]
    g_rows = [(pid, v) for pid in sorted(train_ids)
              for v in projected.get((pid, cam_g), [])]
    similar = [(a, b) for pa, a in q_rows for pb, b in g_rows if pa == pb]
    diff_idx = [(i, j) for i, (pa, _) in enumerate(q_rows)
                for j, (pb, _) in enumerate(g_rows) if pa != pb]
    want = min(10 * len(similar), len(diff_idx))
    gen = rng.generator()
    chosen = gen.choice(len(diff_idx), size=want, replace=False)
    dissimilar = [(q_rows[diff_idx[c][0]][1], g_rows[diff_idx[c][1]][1])
                  for c in sorted(chosen.tolist())]
    return PairSet(similar=similar, dissimilar=dissimilar)


def fit_trial_models(train_descriptors: list[CycleDescriptor], config: Config,
                     cam_q: int, cam_g: int,
                     trial_rng: RngHandle) -> MetricModel:
    """Fit PCA on the training descriptors, then KISSME in PCA space."""
    pca = fit_pca([d.values for d in train_descriptors], config.pca_dim)
    projected: dict[tuple[str, int], list[np.ndarray]] = {}
    for d in train_descriptors:
        key = (d.source[0], d.source[1])
        projected.setdefault(key, []).append(project(pca, d.values))
    if config.metric == "euclidean":
        return MetricModel(pca=pca, maha=identity_metric(pca.p))
    train_ids = {d.source[0] for d in train_descriptors}
    pairs = _build_pairs(projected, train_ids, cam_q, cam_g,
                         trial_rng.child("pairs"))
    return MetricModel(pca=pca, maha=fit_kissme(pairs))


def _descriptor_sets(descriptors: list[CycleDescriptor], pca: PcaModel,
                     camera: int) -> dict[str, list[np.ndarray]]:
    out: dict[str, list[np.ndarray]] = {}
    for d in descriptors:
        if d.source[1] == camera:
            out.setdefault(d.source[0], []).append(project(pca, d.values))
    return out


def run_evaluation(dataset: Dataset, config: Config,
                   extractor: Extractor | None = None) -> TrialReport:
    """Full protocol: split, fit on train, rank test queries, average CMC."""
    cameras = dataset.cameras()
    if len(cameras) < 2:
        raise TooFewIdentities("evaluation needs two cameras")
    cam_q, cam_g = cameras[0], cameras[1]
    by_q, by_g = dataset.by_identity(cam_q), dataset.by_identity(cam_g)
    ids = sorted(set(by_q) & set(by_g))
    if len(ids) < 2:
        raise TooFewIdentities(
            f"{len(ids)} identities present in both cameras")

    extractor = _CachingExtractor(extractor or build_extractor(config))
    plans = make_splits(ids, config.trials, config.seed)

    curves = []
    fallbacks: list[tuple[int, str, int]] = []
    for trial, plan in enumerate(plans):
        trial_rng = RngHandle(plan.trial_seed)
        train_desc = _describe_split(dataset, plan.train_ids, config,
                                     extractor, trial_rng, trial, fallbacks)
        model = fit_trial_models(train_desc, config, cam_q, cam_g, trial_rng)
        test_desc = _describe_split(dataset, plan.test_ids, config,
                                    extractor, trial_rng, trial, fallbacks)
        queries = _descriptor_sets(test_desc, model.pca, cam_q)
        gallery = _descriptor_sets(test_desc, model.pca, cam_g)
        dist = (lambda a, b, m=model.maha: maha_dist(m, a, b))
        ranked = rank_queries(queries, gallery, config.measure, dist)
        curves.append(compute_cmc(ranked, {qid: qid for qid in queries}))

    average = CmcCurve(rates=np.mean([c.rates for c in curves], axis=0))
    return TrialReport(per_trial=tuple(curves), average=average,
                       config=config, fallbacks=tuple(fallbacks))


def render_cmc_csv(report: TrialReport) -> str:
    """``trial,rank,rate`` rows for each trial plus the averaged curve."""
    lines = ["trial,rank,rate"]
    for t, curve in enumerate(report.per_trial, start=1):
        lines.extend(f"{t},{r},{rate:.10f}"
                     for r, rate in enumerate(curve.rates, start=1))
    lines.extend(f"avg,{r},{rate:.10f}"
                 for r, rate in enumerate(report.average.rates, start=1))
    return "\n".join(lines) + "\n"


def render_report_text(report: TrialReport) -> str:
    summary = report.summary()
    per_trial_r1 = [c.rate_at(1) for c in report.per_trial]
    lines = [
        "walking-cycle re-id evaluation",
        "==============================",
        "",
        report.config.fingerprint().rstrip("\n"),
        "",
        f"trials: {len(report.per_trial)}, "
        f"gallery size: {len(report.average.rates)}",
        f"fallbacks to random-halves: {len(report.fallbacks)}",
        "",
        "rank  avg-rate  min-rate  max-rate",
    ]
    for r in SUMMARY_RANKS:
        per = [c.rate_at(r) for c in report.per_trial]
        lines.append(f"R-{r:<3} {summary[r]:8.4f}  {min(per):8.4f}  "
                     f"{max(per):8.4f}")
    lines.append("")
    lines.append("per-trial rank-1: " +
                 ", ".join(f"{v:.4f}" for v in per_trial_r1))
    return "\n".join(lines) + "\n"


def render_cmc_svg(report: TrialReport, width: int = 640,
                   height: int = 480) -> str:
    """Standalone SVG line plot of the averaged CMC curve."""
    rates = report.average.rates
    g = len(rates)
    left, right, top, bottom = 60, 20, 30, 50
    plot_w, plot_h = width - left - right, height - top - bottom

    def x(rank):
        return left + (rank - 1) / max(g - 1, 1) * plot_w

    def y(rate):
        return top + (1.0 - rate) * plot_h

    points = " ".join(f"{x(r):.2f},{y(v):.2f}"
                      for r, v in enumerate(rates, start=1))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">averaged CMC curve</text>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" '
        f'stroke="black"/>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" '
        f'y2="{top + plot_h}" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        yy = y(frac)
        parts.append(f'<line x1="{left - 4}" y1="{yy:.2f}" x2="{left}" '
                     f'y2="{yy:.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 8}" y="{yy + 4:.2f}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11">{frac:.2f}</text>')
    for rank in sorted({1, max(1, g // 2), g}):
        xx = x(rank)
        parts.append(f'<line x1="{xx:.2f}" y1="{top + plot_h}" '
                     f'x2="{xx:.2f}" y2="{top + plot_h + 4}" stroke="black"/>')
        parts.append(f'<text x="{xx:.2f}" y="{top + plot_h + 18}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{rank}</text>')
    parts.append(f'<text x="{left + plot_w / 2:.0f}" y="{height - 12}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12">rank</text>')
    parts.append(f'<polyline points="{points}" fill="none" stroke="#c62828" '
                 f'stroke-width="2"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def sweep(dataset: Dataset, base: Config, axis: str,
          values) -> list[tuple[str, TrialReport]]:
    """Re-run the evaluation varying one configuration axis."""
    fields = {"frames": "k", "pooling": "pooling", "pca-dim": "pca_dim",
              "measure": "measure", "strategy": "strategy",
              "metric": "metric"}
    if axis not in fields:
        raise ValueError(f"unknown sweep axis {axis!r}")
    name = fields[axis]
    out = []
    for value in values:
        typed = int(value) if name in ("k", "pca_dim") else str(value)
        config = replace(base, **{name: typed})
        out.append((str(value), run_evaluation(dataset, config)))
    return out


def render_sweep_csv(axis: str, results) -> str:
    lines = [f"{axis},R-1,R-5"]
    for value, report in results:
        s = report.summary()
        lines.append(f"{value},{s[1]:.10f},{s[5]:.10f}")
    return "\n".join(lines) + "\n"
