"""
Model learning: balanced one-hot corpus, no-intercept L2 logistic model,
spatial stopwords and ranked daily need reports.

Every training instance carries exactly one active feature (its query), so
the loss separates per query and its Hessian is diagonal. Training runs
full-batch gradient descent preconditioned by that exact diagonal, which
reaches the stationary point ``sigmoid(w_q) = pos_q / (pos_q + neg_q)``
(at ``l2_lambda = 0``) to near machine precision in a few dozen epochs.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit, log_expit

from .errors import MalformedInputError, TrainingDivergedError, UntrainableError
from .prepare import COUNT_COLUMNS, DailyCountRow, RegionFlag, rows_to_frame

DEFAULT_TOP_N = 15
DEFAULT_TOP_M = 300
DEFAULT_FLOOR = float(np.log(2.0))
DEFAULT_BASELINE_DAYS = 28


@dataclass(frozen=True)
class Hyperparams:
    l2_lambda: float = 1e-4
    learning_rate: float = 0.1
    epochs: int = 200
    seed: int = 42
    convergence_tol: float = 1e-8

    def __post_init__(self):
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")
        if self.learning_rate <= 0 or self.epochs <= 0 or self.convergence_tol <= 0:
            raise ValueError("learning_rate, epochs and convergence_tol must be positive")


@dataclass
class TrainingCorpus:
    """Instance multiset stored as per-query class counts.

    ``queries`` is sorted, which fixes the canonical instance order
    (query, then class).
    """

    date: str | None
    queries: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def n_pos(self) -> int:
        return int(self.pos.sum())

    @property
    def n_neg(self) -> int:
        return int(self.neg.sum())

    @property
    def balanced(self) -> bool:
        return self.n_pos == self.n_neg


@dataclass
class ModelWeights:
    date: str | None
    weights: dict[str, float]
    hyperparams: Hyperparams
    final_loss: float
    epochs_run: int
    converged: bool


def _as_frame(rows) -> pd.DataFrame:
    if isinstance(rows, pd.DataFrame):
        return rows
    rows = list(rows)
    if rows and not isinstance(rows[0], DailyCountRow):
        rows = [DailyCountRow(*r) for r in rows]
    return rows_to_frame(rows) if rows else pd.DataFrame(columns=COUNT_COLUMNS)


def _corpus_from_frame(frame: pd.DataFrame, date) -> TrainingCorpus:
    rows_in = int((frame["region_flag"] == RegionFlag.INSIDE.value).sum())
    rows_out = len(frame) - rows_in
    if rows_in == 0 or rows_out == 0:
        raise UntrainableError(
            f"{date or 'corpus'}: {rows_in} inside rows, {rows_out} outside rows; need both classes")
    table = (frame.pivot_table(index="query", columns="region_flag", values="user_count",
                               aggfunc="sum", fill_value=0)
             .reindex(columns=[RegionFlag.INSIDE.value, RegionFlag.OUTSIDE.value], fill_value=0)
             .sort_index())
    pos = table[RegionFlag.INSIDE.value].to_numpy(np.int64)
    neg = table[RegionFlag.OUTSIDE.value].to_numpy(np.int64)
    corpus = TrainingCorpus(date, table.index.to_numpy(dtype=object), pos, neg)
    corpus.provenance = {"rows_in": rows_in, "rows_out": rows_out,
                         "pos_before": corpus.n_pos, "neg_before": corpus.n_neg}
    return corpus


def build_corpus(rows) -> TrainingCorpus:
    """One single-feature instance per counted user, classed by region flag.

    Raises
    ------
    UntrainableError
        If the rows lack either inside or outside instances.
    """
    frame = _as_frame(rows)
    dates = frame["date"].unique() if len(frame) else []
    if len(dates) > 1:
        raise ValueError(f"build_corpus expects one date, got {len(dates)}")
    date = str(dates[0]) if len(dates) else None
    return _corpus_from_frame(frame, date)


def derive_seed(seed: int, *keys) -> np.random.SeedSequence:
    """Hash a global seed with extra keys (dates become their ordinal)."""
    parts = [int(seed)]
    for k in keys:
        if isinstance(k, str):
            k = dt.date.fromisoformat(k)
        parts.append(k.toordinal() if isinstance(k, dt.date) else int(k))
    return np.random.SeedSequence(parts)


def undersample(corpus: TrainingCorpus, seed: int, *keys) -> TrainingCorpus:
    """Drop random majority-class instances (without replacement) until balanced.

    The stream is derived from ``seed`` and the corpus date (plus any extra
    ``keys``), so each date gets its own reproducible draw.
    """
    n_pos, n_neg = corpus.n_pos, corpus.n_neg
    if n_pos == 0 or n_neg == 0:
        raise UntrainableError("undersample needs both classes nonempty")
    if not keys and corpus.date is not None:
        keys = (corpus.date,)
    pos, neg = corpus.pos.copy(), corpus.neg.copy()
    if n_pos != n_neg:
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))
        if n_pos > n_neg:
            pos = rng.multivariate_hypergeometric(pos, n_neg)
        else:
            neg = rng.multivariate_hypergeometric(neg, n_pos)
    keep = (pos + neg) > 0
    out = TrainingCorpus(corpus.date, corpus.queries[keep], pos[keep], neg[keep],
                         dict(corpus.provenance))
    out.provenance.update(pos_after=out.n_pos, neg_after=out.n_neg)
    return out


def loss_and_grad(w, pos, neg, l2_lambda):
    """Mean logistic loss plus ``l2_lambda * |w|^2 / 2`` and its gradient."""
    w = np.asarray(w, dtype=float)
    n = pos.sum() + neg.sum()
    loss = -(pos @ log_expit(w) + neg @ log_expit(-w)) / n + 0.5 * l2_lambda * (w @ w)
    grad = (neg * expit(w) - pos * expit(-w)) / n + l2_lambda * w
    return float(loss), grad


def train(corpus: TrainingCorpus, hyper: Hyperparams = Hyperparams()) -> ModelWeights:
    """Fit per-query weights on a balanced corpus.

    Each epoch moves every weight by ``learning_rate`` times its Newton
    direction ``grad_q / hess_q`` (exact, since the Hessian is diagonal).
    Training stops once the mean-loss change drops below ``convergence_tol``
    and no weight would move by more than ``sqrt(convergence_tol)``.
    """
    if len(corpus.queries) == 0 or corpus.n_pos == 0 or corpus.n_neg == 0:
        raise UntrainableError("empty or one-class corpus")
    if not corpus.balanced:
        raise ValueError(f"corpus is not balanced ({corpus.n_pos} vs {corpus.n_neg}); undersample first")
    pos = corpus.pos.astype(float)
    neg = corpus.neg.astype(float)
    n = pos.sum() + neg.sum()
    lam = hyper.l2_lambda
    w = np.zeros(len(pos))
    loss, grad = loss_and_grad(w, pos, neg, lam)
    step_tol = np.sqrt(hyper.convergence_tol)
    converged = False
    epoch = 0
    for epoch in range(1, hyper.epochs + 1):
        hess = (pos + neg) * expit(w) * expit(-w) / n + lam
        direction = grad / np.maximum(hess, np.finfo(float).tiny)
        w = w - hyper.learning_rate * direction
        new_loss, grad = loss_and_grad(w, pos, neg, lam)
        if not np.isfinite(new_loss) or not np.all(np.isfinite(w)):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch} with {hyper}")
        delta = abs(loss - new_loss)
        loss = new_loss
        if delta < hyper.convergence_tol and np.max(np.abs(direction)) < step_tol:
            converged = True
            break
    weights = {str(q): float(x) for q, x in zip(corpus.queries, w)}
    return ModelWeights(corpus.date, weights, hyper, loss, epoch, converged)


def rank_weights(weights: dict[str, float]) -> list[tuple[str, float]]:
    """Positive weights, descending, ties broken by query."""
    return sorted(((q, w) for q, w in weights.items() if w > 0), key=lambda t: (-t[1], t[0]))


# ---------------------------------------------------------------------------
# spatial stopwords
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StopwordSet:
    queries: frozenset
    baseline_start: str | None = None
    baseline_end: str | None = None
    top_m: int = DEFAULT_TOP_M
    weight_floor: float = DEFAULT_FLOOR
    weights: dict = field(default_factory=dict, compare=False)

    def __contains__(self, query) -> bool:
        return query in self.queries

    def __len__(self):
        return len(self.queries)

    @property
    def set_id(self) -> str:
        blob = json.dumps(sorted(self.queries), ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_dict(self) -> dict:
        ranked = sorted(self.weights.items(), key=lambda t: (-t[1], t[0]))
        return {
            "stopword_set_id": self.set_id,
            "baseline_start": self.baseline_start,
            "baseline_end": self.baseline_end,
            "top_m": self.top_m,
            "weight_floor": self.weight_floor,
            "stopwords": [{"query": q, "weight": w} for q, w in ranked if q in self.queries],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StopwordSet":
        try:
            entries = data["stopwords"]
            weights = {e["query"]: float(e["weight"]) for e in entries}
            return cls(frozenset(weights), data.get("baseline_start"), data.get("baseline_end"),
                       int(data.get("top_m", DEFAULT_TOP_M)),
                       float(data.get("weight_floor", DEFAULT_FLOOR)), weights)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedInputError(f"bad stopword file: {exc}") from None

    @classmethod
    def empty(cls) -> "StopwordSet":
        return cls(frozenset())


def baseline_window(event_day: dt.date, days: int = DEFAULT_BASELINE_DAYS) -> tuple[dt.date, dt.date]:
    """Default baseline: ``days`` days ending the day before the event."""
    return event_day - dt.timedelta(days=days), event_day - dt.timedelta(days=1)


def derive_stopwords(rows, hyper: Hyperparams = Hyperparams(), top_m: int = DEFAULT_TOP_M,
                     weight_floor: float = DEFAULT_FLOOR, event_day: dt.date | str | None = None
                     ) -> StopwordSet:
    """Queries the normal-times model already ranks as region-discriminative.

    ``rows`` should cover only the baseline window; all user counts are
    pooled per (flag, query) before balancing and training. With
    ``event_day`` given, any row on or after it is rejected.
    """
    frame = _as_frame(rows)
    if frame.empty:
        raise UntrainableError("empty baseline window")
    start, end = min(frame["date"]), max(frame["date"])
    if event_day is not None and str(end) >= str(event_day):
        raise ValueError(f"baseline row dated {end} is not before the event day {event_day}")
    pooled = (frame.groupby(["region_flag", "query"], as_index=False)["user_count"].sum()
              .assign(date="baseline"))
    corpus = _corpus_from_frame(pooled, None)
    balanced = undersample(corpus, hyper.seed, start, end)
    model = train(balanced, hyper)
    selected = [(q, w) for q, w in model.weights.items() if w >= weight_floor]
    selected.sort(key=lambda t: (-t[1], t[0]))
    selected = selected[:max(top_m, 0)]
    return StopwordSet(frozenset(q for q, _ in selected), str(start), str(end), top_m,
                       weight_floor, dict(selected))


# ---------------------------------------------------------------------------
# daily scoring
# ---------------------------------------------------------------------------

@dataclass
class NeedReport:
    date: str
    status: str
    entries: list[tuple[str, float]]   # all positive weights, ranked
    top_n: int = DEFAULT_TOP_N
    stopword_set_id: str = ""
    diagnostics: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def top(self) -> list[tuple[str, float]]:
        return self.entries[:self.top_n]

    def top_queries(self, n: int | None = None) -> list[str]:
        return [q for q, _ in self.entries[:self.top_n if n is None else n]]

    def score(self, query: str) -> float:
        """Reported score, or 0.0 for queries not in the positive list."""
        return dict(self.entries).get(query, 0.0)

    def to_dict(self) -> dict:
        def listing(items):
            return [{"rank": i + 1, "query": q, "score": s} for i, (q, s) in enumerate(items)]
        out = {
            "date": self.date,
            "status": self.status,
            "top_n": self.top_n,
            "top": listing(self.top),
            "all_positive": listing(self.entries),
            "stopword_set_id": self.stopword_set_id,
            "diagnostics": self.diagnostics,
        }
        if self.provenance:
            out["provenance"] = self.provenance
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "NeedReport":
        try:
            entries = [(e["query"], float(e["score"])) for e in data["all_positive"]]
            return cls(data["date"], data["status"], entries, int(data.get("top_n", DEFAULT_TOP_N)),
                       data.get("stopword_set_id", ""), data.get("diagnostics", {}),
                       data.get("provenance", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedInputError(f"bad report: {exc}") from None


def score_day(rows, stopwords: StopwordSet | None = None, hyper: Hyperparams = Hyperparams(),
              top_n: int = DEFAULT_TOP_N, date: str | None = None) -> NeedReport:
    """Train the day's in/out model and rank its positive weights.

    Stopword instances are removed before balancing. A day that cannot be
    trained gets a report with ``status == "untrainable"`` and no entries.
    """
    stopwords = stopwords or StopwordSet.empty()
    frame = _as_frame(rows)
    if len(frame):
        dates = frame["date"].unique()
        if len(dates) > 1:
            raise ValueError(f"score_day expects one date, got {len(dates)}")
        date = str(dates[0])
    if date is None:
        raise ValueError("no rows and no date given")
    kept = frame[~frame["query"].isin(stopwords.queries)]
    diagnostics = {"rows_total": int(len(frame)), "rows_stopworded": int(len(frame) - len(kept))}
    try:
        corpus = build_corpus(kept) if len(kept) else _corpus_from_frame(kept, date)
    except UntrainableError as exc:
        diagnostics["reason"] = str(exc)
        return NeedReport(date, "untrainable", [], top_n, stopwords.set_id, diagnostics)
    corpus.date = date
    balanced = undersample(corpus, hyper.seed, date)
    model = train(balanced, hyper)
    prov = balanced.provenance
    diagnostics.update({
        "rows_in": prov["rows_in"], "rows_out": prov["rows_out"],
        "pos_instances_before": prov["pos_before"], "neg_instances_before": prov["neg_before"],
        "pos_instances": prov["pos_after"], "neg_instances": prov["neg_after"],
        "n_features": int(len(balanced.queries)),
        "epochs": model.epochs_run, "converged": model.converged, "final_loss": model.final_loss,
        "hyperparams": asdict(hyper),
    })
    return NeedReport(date, "ok", rank_weights(model.weights), top_n, stopwords.set_id, diagnostics)


def write_json(data: dict, path) -> None:
    text = json.dumps(data, indent=1, ensure_ascii=False, sort_keys=True)
    if str(path) == "-":
        print(text)
        return
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedInputError(f"{path}: {exc}") from None


def load_report(path) -> NeedReport:
    return NeedReport.from_dict(read_json(path))


def load_stopwords(path) -> StopwordSet:
    return StopwordSet.from_dict(read_json(path))
