"""
Baselines and validation: raw-count ranking, prior-year page-view ratio
with a trailing 7-day mean, and recovery of injected needs.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .errors import MalformedInputError
from .learn import NeedReport
from .prepare import RegionFlag
from .scenario import GroundTruth

MA_DAYS = 7


def raw_count_ranking(rows: pd.DataFrame, flag: RegionFlag | str = RegionFlag.INSIDE,
                      top_n: int = 15) -> list[tuple[str, int]]:
    """Rank one day's queries by user count within one region flag.

    This is the naive "most searched" baseline.
    """
    if rows.empty:
        return []
    sel = rows[rows["region_flag"] == RegionFlag(flag).value]
    ranked = sorted(zip(sel["query"], sel["user_count"]), key=lambda t: (-t[1], t[0]))
    return [(q, int(c)) for q, c in ranked[:top_n]]


# ---------------------------------------------------------------------------
# page-view baseline
# ---------------------------------------------------------------------------

def _prior_year(day: dt.date) -> dt.date | None:
    try:
        return day.replace(year=day.year - 1)
    except ValueError:  # Feb 29 has no same-calendar-day partner
        return None


def pv_score(pv: pd.DataFrame, start, end) -> pd.DataFrame:
    """Ratio of each day's PV to the same calendar day one year earlier.

    Returns a frame with ``date, pv, prior_pv, ratio, ma``. ``ratio`` is NaN
    when the prior-year day is missing or zero; ``ma`` is the mean of the
    defined ratios among the trailing ``MA_DAYS`` days of the requested range
    (fewer at the start of the range).
    """
    start = dt.date.fromisoformat(str(start))
    end = dt.date.fromisoformat(str(end))
    counts = {dt.date.fromisoformat(str(d)): float(c) for d, c in zip(pv["date"], pv["pv_count"])}
    days = [start + dt.timedelta(days=i) for i in range((end - start).days + 1)]
    cur = np.array([counts.get(d, np.nan) for d in days])
    prior = np.array([counts.get(p, np.nan) if (p := _prior_year(d)) else np.nan for d in days])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(prior > 0, cur / prior, np.nan)
    ma = np.full(len(days), np.nan)
    for i in range(len(days)):
        window = ratio[max(0, i - MA_DAYS + 1):i + 1]
        window = window[~np.isnan(window)]
        if len(window):
            ma[i] = window.mean()
    return pd.DataFrame({"date": [d.isoformat() for d in days], "pv": cur, "prior_pv": prior,
                         "ratio": ratio, "ma": ma})


def read_pv(path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype={"date": str}, keep_default_na=False)
        frame["pv_count"] = frame["pv_count"].astype(float)
    except (OSError, KeyError, ValueError, pd.errors.ParserError) as exc:
        raise MalformedInputError(f"{path}: {exc}") from None
    return frame[["date", "pv_count"]]


def peak_to_trough(values) -> float:
    values = np.asarray(values, dtype=float)
    values = values[~np.isnan(values)]
    return float(values.max() / values.min())


def weekend_weekday_means(scores: Mapping[str, float]) -> tuple[float, float]:
    """Mean score over Saturdays/Sundays and over the other days."""
    wk_end = [s for d, s in scores.items() if dt.date.fromisoformat(d).weekday() >= 5]
    wk_day = [s for d, s in scores.items() if dt.date.fromisoformat(d).weekday() < 5]
    return float(np.mean(wk_end)), float(np.mean(wk_day))


# ---------------------------------------------------------------------------
# recovery of injected needs
# ---------------------------------------------------------------------------

@dataclass
class RecoveryMetrics:
    n: int
    per_date: list[dict] = field(default_factory=list)
    mean_precision: float | None = None
    mean_recall: float | None = None
    false_inclusion_media: int = 0
    false_inclusion_marker: int = 0

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean_precision": self.mean_precision,
            "mean_recall": self.mean_recall,
            "false_inclusion_media": self.false_inclusion_media,
            "false_inclusion_marker": self.false_inclusion_marker,
            "per_date": self.per_date,
        }


def _mean(values) -> float | None:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def evaluate_recovery(reports: Iterable[NeedReport], truth: GroundTruth, n: int = 15,
                      ranking: str = "dnf") -> RecoveryMetrics:
    """Precision/recall@n of ranked lists against the injected needs.

    Media-spike queries (on their spike days) and region-marker queries
    found in a top-n list are tallied separately as false inclusions; they
    never count as hits.
    """
    markers = set(truth.markers)
    metrics = RecoveryMetrics(n)
    for report in sorted(reports, key=lambda r: r.date):
        day = dt.date.fromisoformat(report.date)
        if day not in truth.needs:
            raise ValueError(f"report date {report.date} not covered by ground truth")
        top = report.top_queries(n)
        needs = truth.need_queries(day)
        hits = len(needs.intersection(top))
        media_hits = sorted(set(truth.media.get(day, ())).intersection(top))
        marker_hits = sorted(markers.intersection(top))
        metrics.false_inclusion_media += len(media_hits)
        metrics.false_inclusion_marker += len(marker_hits)
        metrics.per_date.append({
            "date": report.date,
            "status": report.status,
            "listed": len(top),
            "truth_size": len(needs),
            "hits": hits,
            "precision": hits / len(top) if top else None,
            "recall": hits / len(needs) if needs else None,
            "missed": sorted(needs.difference(top)),
            "media_inclusions": media_hits,
            "marker_inclusions": marker_hits,
        })
    metrics.mean_precision = _mean(r["precision"] for r in metrics.per_date if r["truth_size"])
    metrics.mean_recall = _mean(r["recall"] for r in metrics.per_date)
    return metrics


def raw_count_reports(counts: pd.DataFrame, n: int = 15) -> list[NeedReport]:
    """Wrap :func:`raw_count_ranking` per date so it can be scored like DNF."""
    out = []
    for date, rows in counts.groupby("date", sort=True):
        ranked = raw_count_ranking(rows, RegionFlag.INSIDE, n)
        out.append(NeedReport(str(date), "ok", [(q, float(c)) for q, c in ranked], n))
    return out


def score_series(reports: Iterable[NeedReport], queries: Iterable[str]) -> pd.DataFrame:
    """Per-date DNF score for each query (0 when not among the positive weights)."""
    reports = sorted(reports, key=lambda r: r.date)
    data = {"date": [r.date for r in reports]}
    for q in queries:
        data[f"dnf:{q}"] = [r.score(q) for r in reports]
    return pd.DataFrame(data)


def build_series(reports: list[NeedReport], truth: GroundTruth, pv: pd.DataFrame | None) -> pd.DataFrame:
    """DNF score of every truth need next to the PV ratio and its moving average."""
    queries = sorted({q for pairs in truth.needs.values() for q, _ in pairs})
    series = score_series(reports, queries)
    if pv is not None and len(series):
        pvs = pv_score(pv, series["date"].iloc[0], series["date"].iloc[-1])
        series = series.merge(pvs[["date", "ratio", "ma"]].rename(
            columns={"ratio": "pv_ratio", "ma": "pv_ma"}), on="date", how="left")
    return series


def nan_to_none(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value
