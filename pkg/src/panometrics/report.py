"""Dataset-level evaluation: aggregation across samples, report records,
quality indicators, and model rankings.

Aggregation is pixel-pooled: per-sample sufficient statistics (sums and
counts) are reduced with exact summation (`math.fsum`) and only then turned
into metrics, so every valid pixel counts once regardless of how pixels are
distributed over samples, and the result does not depend on sample processing
order or thread count. A mean-of-per-sample-means mode is available for
comparison with per-image protocols.
"""

from __future__ import annotations

import concurrent.futures
import json
import math
from dataclasses import dataclass, field, asdict

from .depthio import DEFAULT_D_MAX, DepthPanorama, SampleManifest
from .icosphere import build_icosphere
from .metrics import boundary as bnd
from .metrics import direct as drc
from .metrics import geom as geo
from .sphere import spherical_weights

SCHEMA_VERSION = "1"


@dataclass
class EvalOptions:
    """Evaluation pipeline knobs; defaults follow the standard protocol."""

    d_max: float = DEFAULT_D_MAX
    weights: str = "none"  # "none" or "spherical"
    ico_order: int | None = 6  # None disables icosphere accuracies
    delta_thresholds: tuple = drc.DELTA_THRESHOLDS
    alpha_thresholds: tuple = geo.ALPHA_THRESHOLDS_DEG
    edge_thresholds: tuple = bnd.EDGE_THRESHOLDS
    canny_sigma: float = bnd.CANNY_SIGMA
    canny_lo: float = bnd.CANNY_LO
    canny_hi: float = bnd.CANNY_HI
    dbe_trunc: float = bnd.DBE_TRUNCATION
    edge_tol: float = bnd.MATCH_RADIUS
    geom: bool = False
    disc_thresh: float = geo.DISCONTINUITY_THRESHOLD
    m2m_samples: int = geo.M2M_SAMPLES
    seed: int = 0
    jobs: int = 1
    per_sample_mean: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("delta_thresholds", "alpha_thresholds", "edge_thresholds"):
            d[k] = list(d[k])
        return d


@dataclass
class MetricsReport:
    """Aggregated metrics for one model over one manifest. JSON-serializable."""

    sample_count: int
    direct: dict
    boundary: dict
    smoothness: dict
    geometry: dict | None = None
    model: str | None = None
    resolution: str | None = None
    options: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(asdict(self), indent=indent, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        items = json.loads(text)
        known = {k: items[k] for k in cls.__dataclass_fields__ if k in items}
        return cls(**known)


def _tkey(t: float) -> str:
    return repr(float(t))


# ---------------------------------------------------------------------------
# Per-sample statistics


def sample_statistics(
    pred: DepthPanorama, gt: DepthPanorama, options: EvalOptions
) -> dict:
    """All pooled sufficient statistics of one prediction/ground-truth pair.

    The result is a flat dict mapping string keys to floats, so statistics
    from many samples can be reduced with exact summation.
    """
    stats: dict[str, float] = {}
    weights = None
    if options.weights == "spherical":
        weights = spherical_weights(gt.width, gt.height)

    for k, v in drc.error_sums(pred, gt, weights).items():
        stats[f"direct.{k}"] = v
    for k, v in drc.delta_sums(pred, gt, options.delta_thresholds).items():
        stats[f"delta.{k}"] = v
    if options.ico_order is not None:
        sphere = build_icosphere(options.ico_order)
        for k, v in drc.ico_delta_sums(pred, gt, sphere, options.delta_thresholds).items():
            stats[f"ico.{k}"] = v

    pred_canny = bnd.canny_edges(pred, options.canny_sigma, options.canny_lo, options.canny_hi)
    gt_canny = bnd.canny_edges(gt, options.canny_sigma, options.canny_lo, options.canny_hi)
    for k, v in bnd.dbe_sums(pred_canny, gt_canny, options.dbe_trunc).items():
        stats[f"dbe.{k}"] = v
    mag_pred = bnd.gradient_magnitude(pred)
    mag_gt = bnd.gradient_magnitude(gt)
    for t in options.edge_thresholds:
        pe = bnd.gradient_threshold_edges(pred, t, mag_pred)
        ge = bnd.gradient_threshold_edges(gt, t, mag_gt)
        for k, v in bnd.match_sums(pe, ge, options.edge_tol).items():
            stats[f"edges.{_tkey(t)}.{k}"] = v

    for k, v in geo.smoothness_sums(pred, gt, thresholds=options.alpha_thresholds).items():
        stats[f"smooth.{k}"] = v

    if options.geom:
        pred_cloud = geo.lift(pred)
        gt_cloud = geo.lift(gt)
        for k, v in geo.c2c_sums(pred_cloud, gt_cloud).items():
            stats[f"c2c.{k}"] = v
        pred_mesh = geo.grid_mesh(pred, options.disc_thresh)
        gt_mesh = geo.grid_mesh(gt, options.disc_thresh)
        h = geo.m2m_hausdorff(pred_mesh, gt_mesh, options.m2m_samples, options.seed)
        stats["m2m.value"] = h.max_distance
        stats["m2m.bbox_pct"] = h.bbox_pct
        stats["m2m.mean"] = h.mean_distance
        stats["m2m.count"] = 1.0
    return stats


def reduce_statistics(per_sample: list[dict]) -> dict:
    """Exactly sum per-sample statistics key by key.

    `math.fsum` returns the correctly rounded sum, so the reduction is
    independent of sample order and of how samples were distributed over
    workers. The per-sample Hausdorff maxima additionally reduce into a
    worst-case key.
    """
    keys = set()
    for s in per_sample:
        keys.update(s)
    out = {}
    for k in sorted(keys):
        vals = [s[k] for s in per_sample if k in s]
        out[k] = math.fsum(vals)
    if "m2m.value" in keys:
        out["m2m.worst"] = max(s["m2m.value"] for s in per_sample if "m2m.value" in s)
    return out


# ---------------------------------------------------------------------------
# Finalization


def _finalize_direct(stats: dict, options: EvalOptions) -> dict:
    direct: dict = {}
    n = stats["direct.n"]
    if n <= 0:
        raise ValueError("no valid pixels in any sample")
    direct["rmse"] = math.sqrt(stats["direct.sq_err"] / n)
    direct["rmsle"] = math.sqrt(stats["direct.sq_log_err"] / n)
    direct["abs_rel"] = stats["direct.abs_rel"] / n
    direct["sq_rel"] = stats["direct.sq_rel"] / n
    if options.weights == "spherical":
        w = stats["direct.w"]
        direct["w_rmse"] = math.sqrt(stats["direct.w_sq_err"] / w)
        direct["w_rmsle"] = math.sqrt(stats["direct.w_sq_log_err"] / w)
        direct["w_abs_rel"] = stats["direct.w_abs_rel"] / w
        direct["w_sq_rel"] = stats["direct.w_sq_rel"] / w
    direct["delta"] = {
        _tkey(t): stats[f"delta.hit_{t!r}"] / stats["delta.n"]
        for t in options.delta_thresholds
    }
    if options.ico_order is not None and stats.get("ico.n", 0) > 0:
        direct["delta_ico"] = {
            _tkey(t): stats[f"ico.hit_{t!r}"] / stats["ico.n"]
            for t in options.delta_thresholds
        }
    return direct


def _finalize_boundary(stats: dict, options: EvalOptions) -> dict:
    acc = stats["dbe.acc"] / stats["dbe.n_pred"] if stats["dbe.n_pred"] else options.dbe_trunc
    comp = stats["dbe.comp"] / stats["dbe.n_gt"] if stats["dbe.n_gt"] else options.dbe_trunc
    edges = {}
    for t in options.edge_thresholds:
        pr = bnd.finalize_match(
            {k: stats[f"edges.{_tkey(t)}.{k}"] for k in ("matched_pred", "n_pred", "matched_gt", "n_gt")}
        )
        edges[_tkey(t)] = {
            "precision": pr.precision,
            "recall": pr.recall,
            "f1": pr.f1,
            "degenerate": pr.degenerate,
        }
    return {"dbe_acc": acc, "dbe_comp": comp, "edges": edges}


def _finalize_smoothness(stats: dict, options: EvalOptions) -> dict:
    n = stats["smooth.n"]
    if n <= 0:
        return {"rmse_deg": None, "alpha": {}, "n": 0}
    return {
        "rmse_deg": math.sqrt(stats["smooth.sq_deg"] / n),
        "alpha": {
            _tkey(t): stats[f"smooth.hit_{t!r}"] / n for t in options.alpha_thresholds
        },
        "n": int(n),
    }


def _finalize_geometry(stats: dict, options: EvalOptions) -> dict | None:
    if "c2c.n" not in stats:
        return None
    n = stats["c2c.n"]
    mean = stats["c2c.sum"] / n
    var = max(stats["c2c.sum_sq"] / n - mean * mean, 0.0)
    count = stats["m2m.count"]
    return {
        "c2c_mean": mean,
        "c2c_std": math.sqrt(var),
        "m2m": stats["m2m.value"] / count,  # mean of per-sample Hausdorff values
        "m2m_worst": stats.get("m2m.worst", stats["m2m.value"] / count),
        "m2m_bbox_pct": stats["m2m.bbox_pct"] / count,
        "m2m_mean": stats["m2m.mean"] / count,
    }


def finalize(stats: dict, options: EvalOptions, sample_count: int, **meta) -> MetricsReport:
    return MetricsReport(
        sample_count=sample_count,
        direct=_finalize_direct(stats, options),
        boundary=_finalize_boundary(stats, options),
        smoothness=_finalize_smoothness(stats, options),
        geometry=_finalize_geometry(stats, options),
        options=options.to_dict(),
        **meta,
    )


def _mean_of_sample_reports(reports: list[MetricsReport], options: EvalOptions, **meta) -> MetricsReport:
    """Average already-finalized per-sample metrics (per-image protocol)."""

    def mean(values):
        values = [v for v in values if v is not None]
        return sum(values) / len(values) if values else None

    direct: dict = {}
    for k in reports[0].direct:
        if k in ("delta", "delta_ico"):
            direct[k] = {
                t: mean([r.direct[k][t] for r in reports if k in r.direct])
                for t in reports[0].direct[k]
            }
        else:
            direct[k] = mean([r.direct[k] for r in reports])
    edges = {}
    for t in reports[0].boundary["edges"]:
        per_t = [r.boundary["edges"][t] for r in reports]
        live = [e for e in per_t if not e["degenerate"]]
        edges[t] = {
            "precision": mean([e["precision"] for e in live]),
            "recall": mean([e["recall"] for e in live]),
            "f1": mean([e["f1"] for e in live]),
            "degenerate": not live,
        }
    boundary = {
        "dbe_acc": mean([r.boundary["dbe_acc"] for r in reports]),
        "dbe_comp": mean([r.boundary["dbe_comp"] for r in reports]),
        "edges": edges,
    }
    smoothness = {
        "rmse_deg": mean([r.smoothness["rmse_deg"] for r in reports]),
        "alpha": {
            t: mean([r.smoothness["alpha"][t] for r in reports])
            for t in reports[0].smoothness["alpha"]
        },
        "n": int(sum(r.smoothness["n"] for r in reports)),
    }
    geometry = None
    if reports[0].geometry is not None:
        geometry = {k: mean([r.geometry[k] for r in reports]) for k in reports[0].geometry}
        geometry["m2m_worst"] = max(r.geometry["m2m_worst"] for r in reports)
    return MetricsReport(
        sample_count=len(reports),
        direct=direct,
        boundary=boundary,
        smoothness=smoothness,
        geometry=geometry,
        options=options.to_dict(),
        **meta,
    )


# ---------------------------------------------------------------------------
# Evaluation drivers


def _align(pred: SampleManifest, gt: SampleManifest) -> list[tuple[int, int]]:
    """Pair up manifest records, by id when both sides have ids, else by order."""
    pred_ids = [r.id for r in pred.records]
    gt_ids = [r.id for r in gt.records]
    if all(i is not None for i in pred_ids) and all(i is not None for i in gt_ids):
        lookup = {}
        for k, i in enumerate(pred_ids):
            if i in lookup:
                raise ValueError(f"duplicate sample id {i!r} in prediction manifest")
            lookup[i] = k
        if set(lookup) != set(gt_ids) or len(gt_ids) != len(set(gt_ids)):
            raise ValueError("prediction and ground-truth manifests do not list the same sample ids")
        return [(lookup[i], k) for k, i in enumerate(gt_ids)]
    if len(pred.records) != len(gt.records):
        raise ValueError(
            f"manifests differ in length ({len(pred.records)} vs {len(gt.records)}) and lack ids"
        )
    return list(zip(range(len(pred.records)), range(len(gt.records))))


def evaluate_pair(pred: DepthPanorama, gt: DepthPanorama, options: EvalOptions | None = None) -> MetricsReport:
    """Evaluate a single in-memory pair (no manifests involved)."""
    options = options or EvalOptions()
    stats = sample_statistics(pred, gt, options)
    return finalize(stats, options, sample_count=1)


def evaluate(
    pred_manifest: SampleManifest,
    gt_manifest: SampleManifest,
    options: EvalOptions | None = None,
    model: str | None = None,
) -> MetricsReport:
    """Evaluate a prediction manifest against a ground-truth manifest.

    Samples are paired by id (when present on both sides) or by position.
    Loading and per-sample statistics may run on ``options.jobs`` threads;
    the aggregate is identical regardless of thread count.
    """
    options = options or EvalOptions()
    pairs = _align(pred_manifest, gt_manifest)
    if not pairs:
        raise ValueError("empty manifests")

    def one(pair: tuple[int, int]) -> dict:
        pi, gi = pair
        gt = gt_manifest.load(gi, d_max=options.d_max, clamp=False)
        pred = pred_manifest.load(pi, d_max=options.d_max, clamp=True)
        if pred.values.shape != gt.values.shape:
            raise ValueError(
                f"sample {gt_manifest.records[gi].id or gi}: prediction and ground truth shapes differ"
            )
        return sample_statistics(pred, gt, options)

    if options.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=options.jobs) as pool:
            per_sample = list(pool.map(one, pairs))
    else:
        per_sample = [one(p) for p in pairs]

    meta = {"model": model, "resolution": gt_manifest.resolution}
    if options.per_sample_mean:
        reports = [finalize(s, options, sample_count=1) for s in per_sample]
        return _mean_of_sample_reports(reports, options, **meta)
    stats = reduce_statistics(per_sample)
    return finalize(stats, options, sample_count=len(per_sample), **meta)


# ---------------------------------------------------------------------------
# Indicators


@dataclass
class Indicators:
    depth: float
    boundary: float
    smoothness: float
    degenerate: list


def indicator(accuracy: float, error: float) -> float:
    """Combined quality indicator: 1 / ((1 - accuracy) * error).

    Grows when either the accuracy approaches 1 or the error approaches 0;
    perfect inputs yield +inf (flagged by the caller).
    """
    miss = 1.0 - accuracy
    if miss <= 0.0 or error <= 0.0:
        return float("inf")
    return 1.0 / (miss * error)


def indicators(report: MetricsReport) -> Indicators:
    """The three per-trait indicators of a report.

    Depth pairs the 1.25-threshold accuracy with RMSE; boundary pairs the
    mean F1 over the edge thresholds with boundary accuracy error; smoothness
    pairs the mean angular accuracy with the normal RMSE in degrees.
    """
    delta = report.direct["delta"][_tkey(1.25)]
    i_d = indicator(delta, report.direct["rmse"])
    edges = report.boundary["edges"]
    f_mean = sum(edges[t]["f1"] for t in edges) / len(edges)
    i_b = indicator(f_mean, report.boundary["dbe_acc"])
    alpha = report.smoothness["alpha"]
    a_mean = sum(alpha.values()) / len(alpha)
    i_s = indicator(a_mean, report.smoothness["rmse_deg"])
    degenerate = [
        name
        for name, val in (("depth", i_d), ("boundary", i_b), ("smoothness", i_s))
        if math.isinf(val)
    ]
    return Indicators(depth=i_d, boundary=i_b, smoothness=i_s, degenerate=degenerate)


# ---------------------------------------------------------------------------
# Rankings


_LOWER_BETTER_PREFIXES = (
    "rmse", "rmsle", "abs_rel", "sq_rel", "w_rmse", "w_rmsle", "w_abs_rel",
    "w_sq_rel", "dbe", "rmse_deg", "c2c", "m2m",
)


def metric_value(report: MetricsReport, name: str) -> float:
    """Look up a metric by its friendly name.

    Names: rmse, rmsle, abs_rel, sq_rel, their w_ variants, delta_T,
    delta_ico_T, dbe_acc, dbe_comp, precision_T / recall_T / f1_T, rmse_deg,
    alpha_T, c2c_mean, c2c_std, m2m, m2m_bbox_pct, m2m_mean, and the
    indicator names indicator_depth / indicator_boundary /
    indicator_smoothness.
    """
    d = report.direct
    if name in ("rmse", "rmsle", "abs_rel", "sq_rel", "w_rmse", "w_rmsle", "w_abs_rel", "w_sq_rel"):
        if name not in d:
            raise KeyError(f"report has no {name!r} (weighted metrics need weighted evaluation)")
        return d[name]
    for prefix, table in (("delta_ico_", "delta_ico"), ("delta_", "delta")):
        if name.startswith(prefix):
            key = _tkey(float(name[len(prefix):]))
            if table not in d or key not in d[table]:
                raise KeyError(f"report has no {name!r}")
            return d[table][key]
    if name in ("dbe_acc", "dbe_comp"):
        return report.boundary[name]
    for prefix in ("precision_", "recall_", "f1_"):
        if name.startswith(prefix):
            key = _tkey(float(name[len(prefix):]))
            try:
                return report.boundary["edges"][key][prefix[:-1]]
            except KeyError:
                raise KeyError(f"report has no {name!r}") from None
    if name == "rmse_deg":
        return report.smoothness["rmse_deg"]
    if name.startswith("alpha_"):
        key = _tkey(float(name[len("alpha_"):]))
        if key not in report.smoothness["alpha"]:
            raise KeyError(f"report has no {name!r}")
        return report.smoothness["alpha"][key]
    if name in ("c2c_mean", "c2c_std", "m2m", "m2m_worst", "m2m_bbox_pct", "m2m_mean"):
        if report.geometry is None:
            raise KeyError(f"report has no geometry section for {name!r}")
        return report.geometry[name]
    if name.startswith("indicator_"):
        ind = indicators(report)
        return getattr(ind, name[len("indicator_"):])
    raise KeyError(f"unknown metric {name!r}")


def lower_is_better(name: str) -> bool:
    return name.startswith(_LOWER_BETTER_PREFIXES)


@dataclass
class RankingTable:
    models: list
    columns: list
    values: list  # values[row][col]
    ranks: list  # competition ranks, 1 = best; ties share the better rank

    def to_json(self) -> str:
        return json.dumps(
            {
                "models": self.models,
                "columns": self.columns,
                "values": self.values,
                "ranks": self.ranks,
            },
            indent=2,
        )

    def to_csv(self) -> str:
        lines = ["model," + ",".join(f"{c},{c}_rank" for c in self.columns)]
        for m, row, rrow in zip(self.models, self.values, self.ranks):
            cells = []
            for v, r in zip(row, rrow):
                cells.append(f"{v:.6g},{r}")
            lines.append(f"{m}," + ",".join(cells))
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        marks = {1: " (1st)", 2: " (2nd)", 3: " (3rd)"}
        header = "| model | " + " | ".join(self.columns) + " |"
        rule = "|" + "---|" * (len(self.columns) + 1)
        lines = [header, rule]
        for m, row, rrow in zip(self.models, self.values, self.ranks):
            cells = [f"{v:.4f}{marks.get(r, '')}" for v, r in zip(row, rrow)]
            lines.append(f"| {m} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def rank_models(reports: dict, columns: list) -> RankingTable:
    """Rank models per metric column.

    ``reports`` maps model name to MetricsReport. Ranks are competition
    style: 1 + the number of strictly better models, so ties share a rank.
    """
    models = list(reports)
    if not models:
        raise ValueError("no reports to rank")
    values = [[metric_value(reports[m], c) for c in columns] for m in models]
    ranks = []
    for row in range(len(models)):
        rrow = []
        for col, name in enumerate(columns):
            v = values[row][col]
            others = [values[r][col] for r in range(len(models))]
            if lower_is_better(name):
                better = sum(1 for o in others if o < v)
            else:
                better = sum(1 for o in others if o > v)
            rrow.append(1 + better)
        ranks.append(rrow)
    return RankingTable(models=models, columns=columns, values=values, ranks=ranks)
