"""
Data preparation: region flags, daily distinct-user counts, k-anonymity.

The only thing that leaves this module is a table of
``(date, region_flag, query, user_count)`` rows. User ids and intra-day
timestamps are consumed here and never written out.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import unicodedata
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
import polars as pl

from .errors import MalformedInputError
from .region import RegionSpec
from .scenario import parse_tz

DEFAULT_K = 9
DEFAULT_WINDOW = dt.timedelta(minutes=90)
DEFAULT_TZ = "+09:00"
COUNT_COLUMNS = ["date", "region_flag", "query", "user_count"]


class RegionFlag(str, enum.Enum):
    INSIDE = "in"
    OUTSIDE = "out"

    def __str__(self):
        return self.value


@dataclass(frozen=True, order=True)
class DailyCountRow:
    date: dt.date
    region_flag: RegionFlag
    query: str
    user_count: int


@dataclass(frozen=True)
class LocationPing:
    user_id: str
    timestamp: dt.datetime
    lat: float
    lon: float


@dataclass(frozen=True)
class SearchEvent:
    user_id: str
    timestamp: dt.datetime
    query: str


def normalize_query(raw: str) -> str:
    """NFKC-normalise, case-fold and collapse whitespace. ``""`` means drop.

    >>> normalize_query("  Water   OUTAGE ")
    'water outage'
    """
    return " ".join(unicodedata.normalize("NFKC", raw).casefold().split())


def normalize_queries(values: pd.Series) -> pd.Series:
    """Vectorised :func:`normalize_query`; each distinct string is normalised once."""
    codes, uniques = pd.factorize(values, use_na_sentinel=False)
    normed = np.array([normalize_query(str(u)) for u in uniques], dtype=object)
    return pd.Series(normed[codes] if len(codes) else np.array([], dtype=object), index=values.index)


# ---------------------------------------------------------------------------
# region flagging
# ---------------------------------------------------------------------------

def local_date(ts: dt.datetime, tz: dt.timedelta) -> dt.date:
    if ts.tzinfo is not None:
        ts = ts.astimezone(dt.timezone.utc).replace(tzinfo=None)
    return (ts + tz).date()


def assign_region_flag(event: SearchEvent, user_pings: Sequence[LocationPing], region: RegionSpec,
                       window: dt.timedelta = DEFAULT_WINDOW,
                       tz: dt.timedelta = dt.timedelta(hours=9)) -> RegionFlag | None:
    """Flag one search event from the user's pings.

    The nearest ping within ``window`` of the search decides (ties go to the
    earlier ping). Otherwise the majority of the user's pings on the search's
    local calendar date decides, with ties resolved to ``OUTSIDE``. With no
    ping that day the event is unflaggable and ``None`` is returned.
    """
    if window <= dt.timedelta(0):
        raise ValueError("window must be positive")
    best = None
    for ping in user_pings:
        gap = abs(ping.timestamp - event.timestamp)
        if gap <= window and (best is None or (gap, ping.timestamp) < best[0]):
            best = ((gap, ping.timestamp), ping)
    if best is not None:
        ping = best[1]
        return RegionFlag.INSIDE if region.contains(ping.lat, ping.lon) else RegionFlag.OUTSIDE

    day = local_date(event.timestamp, tz)
    same_day = [p for p in user_pings if local_date(p.timestamp, tz) == day]
    if not same_day:
        return None
    n_in = sum(region.contains(p.lat, p.lon) for p in same_day)
    return RegionFlag.INSIDE if 2 * n_in > len(same_day) else RegionFlag.OUTSIDE


def flag_events(searches: pd.DataFrame, pings: pd.DataFrame, region: RegionSpec,
                window: dt.timedelta = DEFAULT_WINDOW, tz: dt.timedelta | str = DEFAULT_TZ) -> pd.DataFrame:
    """Vectorised region flagging for a whole search log.

    Parameters
    ----------
    searches : DataFrame
        Columns ``user_id``, ``timestamp`` (UTC epoch seconds) and ``query``.
    pings : DataFrame
        Columns ``user_id``, ``timestamp``, ``lat``, ``lon``.

    Returns
    -------
    DataFrame
        ``date`` (ISO local date), ``region_flag`` (``in``/``out``),
        ``query`` and ``user_id``; unflaggable events are dropped.
    """
    if isinstance(tz, str):
        tz = parse_tz(tz)
    win = int(window.total_seconds())
    if win <= 0:
        raise ValueError("window must be positive")
    tz_s = int(tz.total_seconds())

    users = pd.concat([pings["user_id"].astype(object), searches["user_id"].astype(object)],
                      ignore_index=True)
    codes, _ = pd.factorize(users)
    p_user = codes[:len(pings)].astype(np.int64)
    s_user = codes[len(pings):].astype(np.int64)
    p_time = pings["timestamp"].to_numpy(np.int64)
    s_time = searches["timestamp"].to_numpy(np.int64)

    p_inside = region.contains(pings["lat"].to_numpy(float), pings["lon"].to_numpy(float))
    order = np.lexsort((p_time, p_user))
    p_user, p_time, p_inside = p_user[order], p_time[order], p_inside[order]

    n_events = len(s_time)
    flag = np.full(n_events, -1, dtype=np.int8)  # -1 unknown, 0 out, 1 in
    if len(p_time):
        t0 = min(p_time.min(), s_time.min() if n_events else p_time.min()) - win - 1
        span = np.int64(1) << 36
        p_key = p_user * span + (p_time - t0)
        s_key = s_user * span + (s_time - t0)

        nxt = np.searchsorted(p_key, s_key, side="right")
        prv = nxt - 1
        has_prev = prv >= 0
        prv_c = np.clip(prv, 0, len(p_key) - 1)
        has_prev &= p_user[prv_c] == s_user
        # earliest ping among those sharing the previous ping's timestamp
        prv_c = np.searchsorted(p_key, p_key[prv_c], side="left")
        has_next = nxt < len(p_key)
        nxt_c = np.clip(nxt, 0, len(p_key) - 1)
        has_next &= p_user[nxt_c] == s_user

        big = np.int64(1) << 62
        gap_prev = np.where(has_prev, s_time - p_time[prv_c], big)
        gap_next = np.where(has_next, p_time[nxt_c] - s_time, big)
        use_prev = gap_prev <= gap_next
        gap = np.where(use_prev, gap_prev, gap_next)
        chosen = np.where(use_prev, prv_c, nxt_c)
        near = gap <= win
        flag[near] = p_inside[chosen[near]]

        # same-local-day majority fallback
        rest = ~near
        if rest.any():
            p_day = np.floor_divide(p_time + tz_s, 86400)
            day_key = p_user * (np.int64(1) << 32) + p_day
            keys, inv = np.unique(day_key, return_inverse=True)
            n_tot = np.bincount(inv)
            n_in = np.bincount(inv, weights=p_inside).astype(np.int64)
            s_day = np.floor_divide(s_time[rest] + tz_s, 86400)
            q = s_user[rest] * (np.int64(1) << 32) + s_day
            pos = np.clip(np.searchsorted(keys, q), 0, len(keys) - 1)
            found = keys[pos] == q
            fallback = np.where(found, (2 * n_in[pos] > n_tot[pos]).astype(np.int8), -1)
            flag[rest] = fallback

    keep = flag >= 0
    s_day = np.floor_divide(s_time[keep] + tz_s, 86400)
    dates = np.asarray(s_day, dtype="datetime64[D]").astype(str)
    return pd.DataFrame({
        "date": dates,
        "region_flag": np.where(flag[keep] == 1, RegionFlag.INSIDE.value, RegionFlag.OUTSIDE.value),
        "query": searches["query"].to_numpy()[keep],
        "user_id": searches["user_id"].to_numpy()[keep],
    })


# ---------------------------------------------------------------------------
# aggregation and k-anonymity
# ---------------------------------------------------------------------------

def partial_user_sets(events: Iterable[tuple]) -> dict[tuple, set]:
    """Exact per-key user sets for one shard of ``(date, flag, query, user_id)`` events."""
    groups: dict[tuple, set] = defaultdict(set)
    for date, flag, query, user_id in events:
        groups[(_as_date(date), RegionFlag(flag), query)].add(user_id)
    return groups


def merge_user_sets(a: dict[tuple, set], b: dict[tuple, set]) -> dict[tuple, set]:
    """Union two shards. Associative and commutative, so shards merge in any order."""
    out = {key: set(users) for key, users in a.items()}
    for key, users in b.items():
        out.setdefault(key, set()).update(users)
    return out


def aggregate_daily(events: Iterable[tuple]) -> list[DailyCountRow]:
    """Distinct-user count per ``(date, region_flag, query)``."""
    groups = partial_user_sets(events)
    return sorted(DailyCountRow(d, f, q, len(users)) for (d, f, q), users in groups.items())


def aggregate_frame(flagged: pd.DataFrame) -> pd.DataFrame:
    """DataFrame version of :func:`aggregate_daily` used on full logs."""
    cols = ["date", "region_flag", "query", "user_id"]
    if flagged.empty:
        return pd.DataFrame({c: pd.Series(dtype=object if c != "user_count" else np.int64)
                             for c in COUNT_COLUMNS})
    uniq = flagged[cols].drop_duplicates()
    counts = (uniq.groupby(["date", "region_flag", "query"], observed=True, sort=False)
              .size().reset_index(name="user_count"))
    counts["query"] = counts["query"].astype(str)
    counts["region_flag"] = counts["region_flag"].astype(str)
    counts["date"] = counts["date"].astype(str)
    counts["user_count"] = counts["user_count"].astype(np.int64)
    return _sorted(counts)


def _sorted(frame: pd.DataFrame) -> pd.DataFrame:
    return frame.sort_values(["date", "region_flag", "query"], kind="stable",
                             ignore_index=True)[COUNT_COLUMNS]


def k_anonymize(rows, k: int = DEFAULT_K):
    """Suppress every row observed for fewer than ``k`` distinct users.

    Accepts a list of :class:`DailyCountRow` or a counts DataFrame and
    returns the same kind, ordered by ``(date, region_flag, query)``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if isinstance(rows, pd.DataFrame):
        return _sorted(rows[rows["user_count"] >= k])
    return sorted(r for r in rows if r.user_count >= k)


def prepare_counts(searches: pd.DataFrame, pings: pd.DataFrame, region: RegionSpec,
                   k: int = DEFAULT_K, window: dt.timedelta = DEFAULT_WINDOW,
                   tz: dt.timedelta | str = DEFAULT_TZ) -> pd.DataFrame:
    """Full preparation stage: normalise, flag, aggregate, k-anonymise."""
    searches = searches.assign(query=normalize_queries(searches["query"]))
    searches = searches[searches["query"] != ""]
    flagged = flag_events(searches, pings, region, window, tz)
    return k_anonymize(aggregate_frame(flagged), k)


def rows_to_frame(rows: Iterable[DailyCountRow]) -> pd.DataFrame:
    rows = list(rows)
    return pd.DataFrame({
        "date": [r.date.isoformat() for r in rows],
        "region_flag": [RegionFlag(r.region_flag).value for r in rows],
        "query": [r.query for r in rows],
        "user_count": np.array([r.user_count for r in rows], dtype=np.int64),
    })


def frame_to_rows(frame: pd.DataFrame) -> list[DailyCountRow]:
    return [DailyCountRow(dt.date.fromisoformat(d), RegionFlag(f), q, int(c))
            for d, f, q, c in frame[COUNT_COLUMNS].itertuples(index=False)]


def _as_date(value) -> dt.date:
    return value if isinstance(value, dt.date) else dt.date.fromisoformat(str(value))


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def _read_csv(path, columns: list[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise MalformedInputError(f"{path}: {exc}") from None
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise MalformedInputError(f"{path}: missing column(s) {', '.join(missing)}")
    return frame


def parse_timestamps(values, source="timestamp") -> np.ndarray:
    """ISO-8601 strings to UTC epoch seconds (naive values are taken as UTC)."""
    values = pl.Series(values, dtype=pl.Utf8)
    fast = values.str.strptime(pl.Datetime("ms"), "%Y-%m-%dT%H:%M:%SZ", strict=False)
    if fast.null_count() == 0:
        return fast.dt.epoch("s").to_numpy()
    # mixed offsets, fractional seconds etc.
    try:
        parsed = pd.to_datetime(values.to_pandas(), utc=True, format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise MalformedInputError(f"{source}: unparseable timestamp ({exc})") from None
    if parsed.isna().any():
        raise MalformedInputError(f"{source}: empty timestamp")
    return parsed.to_numpy(dtype="datetime64[s]").astype(np.int64)


def _read_log(path, columns: list[str]) -> pl.DataFrame:
    try:
        frame = pl.read_csv(path, infer_schema=False, encoding="utf8")
    except (OSError, pl.exceptions.PolarsError) as exc:
        raise MalformedInputError(f"{path}: {exc}") from None
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise MalformedInputError(f"{path}: missing column(s) {', '.join(missing)}")
    if frame.select(pl.col(columns).null_count()).sum_horizontal().item():
        raise MalformedInputError(f"{path}: empty field")
    return frame


def read_pings(path) -> pd.DataFrame:
    frame = _read_log(path, ["user_id", "timestamp", "lat", "lon"])
    try:
        lat = frame["lat"].cast(pl.Float64).to_numpy()
        lon = frame["lon"].cast(pl.Float64).to_numpy()
    except pl.exceptions.PolarsError as exc:
        raise MalformedInputError(f"{path}: bad coordinate ({exc})") from None
    if not (np.all(np.abs(lat) <= 90) and np.all(np.abs(lon) <= 180)):
        raise MalformedInputError(f"{path}: coordinate out of range")
    return pd.DataFrame({
        "user_id": frame["user_id"].to_numpy(),
        "timestamp": parse_timestamps(frame["timestamp"], f"{path}"),
        "lat": lat, "lon": lon,
    })


def read_searches(path) -> pd.DataFrame:
    frame = _read_log(path, ["user_id", "timestamp", "query"])
    return pd.DataFrame({
        "user_id": frame["user_id"].to_numpy(),
        "timestamp": parse_timestamps(frame["timestamp"], f"{path}"),
        "query": frame["query"].to_numpy(),
    })


def write_counts(counts, path) -> None:
    frame = counts if isinstance(counts, pd.DataFrame) else rows_to_frame(counts)
    frame[COUNT_COLUMNS].to_csv(path, index=False, lineterminator="\n",
                                quoting=csv.QUOTE_MINIMAL, encoding="utf-8")


def read_counts(path) -> pd.DataFrame:
    frame = _read_csv(path, COUNT_COLUMNS)[COUNT_COLUMNS]
    bad_flag = ~frame["region_flag"].isin([f.value for f in RegionFlag])
    if bad_flag.any():
        raise MalformedInputError(f"{path}: region_flag must be 'in' or 'out'")
    try:
        frame["user_count"] = frame["user_count"].astype(np.int64)
        for d in frame["date"].unique():
            dt.date.fromisoformat(d)
    except ValueError as exc:
        raise MalformedInputError(f"{path}: {exc}") from None
    if (frame["user_count"] <= 0).any():
        raise MalformedInputError(f"{path}: user_count must be positive")
    if frame.duplicated(["date", "region_flag", "query"]).any():
        raise MalformedInputError(f"{path}: duplicate (date, region_flag, query) row")
    return frame


def dates_in(counts: pd.DataFrame) -> list[str]:
    return sorted(counts["date"].unique())


__all__ = [
    "RegionFlag", "DailyCountRow", "LocationPing", "SearchEvent", "normalize_query",
    "assign_region_flag", "flag_events", "aggregate_daily", "aggregate_frame",
    "k_anonymize", "prepare_counts", "read_counts", "write_counts", "read_pings",
    "read_searches", "rows_to_frame", "frame_to_rows", "merge_user_sets",
    "partial_user_sets",
]
