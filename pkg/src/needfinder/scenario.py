"""
Seeded synthetic world: location pings, search events, ground truth and a
two-year page-view series.

Random streams come from numpy's PCG64 bit generator. Each stream is seeded
with ``SeedSequence([seed, stream, population, day_index])`` so every
(population, day) block is reproducible on its own and the output does not
depend on the order in which blocks are produced.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd
import polars as pl

from .errors import MalformedInputError
from .region import RegionError, RegionSpec

CATEGORIES = ("traffic", "water", "energy", "logistics", "life_reconstruction", "other")

# stream ids mixed into the seed sequence
_STREAM_SEARCH = 1
_STREAM_USERS = 2
_STREAM_PV = 3
_POP_IN, _POP_OUT = 0, 1


class ScenarioError(MalformedInputError):
    """Invalid scenario configuration; the message starts with the field path."""


@dataclass(frozen=True)
class Window:
    start: dt.date
    end: dt.date

    def __contains__(self, day: dt.date) -> bool:
        return self.start <= day <= self.end

    def days(self):
        d = self.start
        while d <= self.end:
            yield d
            d += dt.timedelta(days=1)

    def to_dict(self):
        return {"start": self.start.isoformat(), "end": self.end.isoformat()}


@dataclass(frozen=True)
class NeedProfile:
    query: str
    category: str
    lift: float
    active_window: Window
    weekdays: tuple[int, ...] | None = None  # Monday=0; None means every day
    base_share: float = 0.004

    def active_on(self, day: dt.date) -> bool:
        return day in self.active_window and (self.weekdays is None or day.weekday() in self.weekdays)


@dataclass(frozen=True)
class MediaSpike:
    query: str
    lift: float
    active_window: Window
    base_share: float = 0.004


@dataclass(frozen=True)
class RegionMarker:
    query: str
    lift: float = 8.0
    base_share: float = 0.004


@dataclass(frozen=True)
class PvSite:
    base_rate: float = 5000.0
    weekend_multiplier: float = 1.3
    lift: float = 1.0
    lift_window: Window | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    date_range: Window
    event_day: dt.date
    n_users_in: int
    n_users_out: int
    region: RegionSpec
    outside_box: tuple[float, float, float, float]
    vocab_size: int = 1000
    zipf_exponent: float = 1.0
    searches_per_user_day: float = 4.0
    activity_damping: float = 1.0
    need_profiles: tuple[NeedProfile, ...] = ()
    media_spikes: tuple[MediaSpike, ...] = ()
    region_marker_queries: tuple[RegionMarker, ...] = ()
    pv_site: PvSite = field(default_factory=PvSite)
    location_dropout: float = 0.05
    timezone: str = "+09:00"
    active_hours: tuple[float, float] = (7.0, 24.0)

    def __post_init__(self):
        _validate(self)

    @property
    def tz_offset(self) -> dt.timedelta:
        return parse_tz(self.timezone)

    def background_queries(self) -> list[str]:
        width = max(4, len(str(self.vocab_size)))
        return [f"q{i:0{width}d}" for i in range(1, self.vocab_size + 1)]

    def day(self, offset: int) -> dt.date:
        """Calendar date ``offset`` days after the event day."""
        return self.event_day + dt.timedelta(days=offset)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "date_range": self.date_range.to_dict(),
            "event_day": self.event_day.isoformat(),
            "timezone": self.timezone,
            "n_users_in": self.n_users_in,
            "n_users_out": self.n_users_out,
            "region": self.region.to_dict(),
            "outside_box": list(self.outside_box),
            "vocab_size": self.vocab_size,
            "zipf_exponent": self.zipf_exponent,
            "searches_per_user_day": self.searches_per_user_day,
            "activity_damping": self.activity_damping,
            "location_dropout": self.location_dropout,
            "active_hours": list(self.active_hours),
            "need_profiles": [
                {"query": p.query, "category": p.category, "lift": p.lift,
                 "active_window": p.active_window.to_dict(),
                 "weekdays": None if p.weekdays is None else list(p.weekdays),
                 "base_share": p.base_share}
                for p in self.need_profiles],
            "media_spikes": [
                {"query": m.query, "lift": m.lift, "active_window": m.active_window.to_dict(),
                 "base_share": m.base_share}
                for m in self.media_spikes],
            "region_marker_queries": [
                {"query": r.query, "lift": r.lift, "base_share": r.base_share}
                for r in self.region_marker_queries],
            "pv_site": {
                "base_rate": self.pv_site.base_rate,
                "weekend_multiplier": self.pv_site.weekend_multiplier,
                "lift": self.pv_site.lift,
                "lift_window": None if self.pv_site.lift_window is None
                else self.pv_site.lift_window.to_dict()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        return _config_from_dict(data)


def parse_tz(text: str) -> dt.timedelta:
    """Parse a fixed UTC offset such as ``+09:00``, ``-05:30`` or ``Z``."""
    if text in ("Z", "UTC", "+00:00"):
        return dt.timedelta(0)
    try:
        sign = {"+": 1, "-": -1}[text[0]]
        hours, minutes = text[1:].split(":")
        off = dt.timedelta(hours=int(hours), minutes=int(minutes))
    except (KeyError, ValueError, IndexError):
        raise ValueError(f"bad timezone offset {text!r}; expected +HH:MM") from None
    if off >= dt.timedelta(hours=24):
        raise ValueError(f"bad timezone offset {text!r}")
    return sign * off


# ---------------------------------------------------------------------------
# config parsing / validation
# ---------------------------------------------------------------------------

def _date(value, path):
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError:
        raise ScenarioError(f"{path}: not an ISO date: {value!r}") from None


def _window(value, path):
    if isinstance(value, dict):
        start, end = value.get("start"), value.get("end")
    else:
        try:
            start, end = value
        except (TypeError, ValueError):
            raise ScenarioError(f"{path}: expected {{start, end}}") from None
    w = Window(_date(start, f"{path}.start"), _date(end, f"{path}.end"))
    if w.end < w.start:
        raise ScenarioError(f"{path}: end precedes start")
    return w


def _require(data, key, path):
    if key not in data:
        raise ScenarioError(f"{path}{key}: required field missing")
    return data[key]


def _config_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ScenarioError("<root>: scenario config must be a JSON object")
    try:
        region = RegionSpec.from_dict(_require(data, "region", ""), "region")
    except RegionError as exc:
        raise ScenarioError(str(exc)) from None

    needs = []
    for i, p in enumerate(data.get("need_profiles", [])):
        path = f"need_profiles[{i}]"
        weekdays = p.get("weekdays")
        needs.append(NeedProfile(
            query=str(_require(p, "query", path + ".")),
            category=str(p.get("category", "other")),
            lift=float(_require(p, "lift", path + ".")),
            active_window=_window(_require(p, "active_window", path + "."), path + ".active_window"),
            weekdays=None if weekdays is None else tuple(int(w) for w in weekdays),
            base_share=float(p.get("base_share", 0.004)),
        ))
    spikes = []
    for i, m in enumerate(data.get("media_spikes", [])):
        path = f"media_spikes[{i}]"
        spikes.append(MediaSpike(
            query=str(_require(m, "query", path + ".")),
            lift=float(_require(m, "lift", path + ".")),
            active_window=_window(_require(m, "active_window", path + "."), path + ".active_window"),
            base_share=float(m.get("base_share", 0.004)),
        ))
    markers = []
    for r in data.get("region_marker_queries", []):
        if isinstance(r, str):
            markers.append(RegionMarker(r))
        else:
            markers.append(RegionMarker(str(r["query"]), float(r.get("lift", 8.0)),
                                        float(r.get("base_share", 0.004))))
    pv = data.get("pv_site", {}) or {}
    pv_site = PvSite(
        base_rate=float(pv.get("base_rate", 5000.0)),
        weekend_multiplier=float(pv.get("weekend_multiplier", 1.3)),
        lift=float(pv.get("lift", 1.0)),
        lift_window=None if pv.get("lift_window") is None
        else _window(pv["lift_window"], "pv_site.lift_window"),
    )
    seed = _require(data, "seed", "")
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ScenarioError("seed: must be an unsigned 64-bit integer")
    try:
        return ScenarioConfig(
            seed=seed,
            date_range=_window(_require(data, "date_range", ""), "date_range"),
            event_day=_date(_require(data, "event_day", ""), "event_day"),
            n_users_in=int(_require(data, "n_users_in", "")),
            n_users_out=int(_require(data, "n_users_out", "")),
            region=region,
            outside_box=tuple(float(x) for x in _require(data, "outside_box", "")),
            vocab_size=int(data.get("vocab_size", 1000)),
            zipf_exponent=float(data.get("zipf_exponent", 1.0)),
            searches_per_user_day=float(data.get("searches_per_user_day", 4.0)),
            activity_damping=float(data.get("activity_damping", 1.0)),
            need_profiles=tuple(needs),
            media_spikes=tuple(spikes),
            region_marker_queries=tuple(markers),
            pv_site=pv_site,
            location_dropout=float(data.get("location_dropout", 0.05)),
            timezone=str(data.get("timezone", "+09:00")),
            active_hours=tuple(float(h) for h in data.get("active_hours", (7.0, 24.0))),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"<root>: {exc}") from None


def _validate(cfg: ScenarioConfig) -> None:
    def check(ok, path, msg):
        if not ok:
            raise ScenarioError(f"{path}: {msg}")

    check(cfg.n_users_in >= 1, "n_users_in", "must be >= 1")
    check(cfg.n_users_out >= 1, "n_users_out", "must be >= 1")
    check(cfg.vocab_size >= 1, "vocab_size", "must be >= 1")
    check(cfg.zipf_exponent > 0, "zipf_exponent", "must be > 0")
    check(cfg.searches_per_user_day >= 0, "searches_per_user_day", "must be >= 0")
    check(0 < cfg.activity_damping <= 1, "activity_damping", "must lie in (0, 1]")
    check(0 <= cfg.location_dropout <= 1, "location_dropout", "must lie in [0, 1]")
    check(cfg.event_day in cfg.date_range, "event_day", "outside date_range")
    h0, h1 = cfg.active_hours
    check(0 <= h0 < h1 <= 24, "active_hours", "need 0 <= start < end <= 24")
    try:
        parse_tz(cfg.timezone)
    except ValueError as exc:
        raise ScenarioError(f"timezone: {exc}") from None
    try:
        cfg.date_range.start.replace(year=cfg.date_range.start.year - 1)
    except ValueError:
        # Feb 29 maps to Feb 28 of the prior year, anything else is overflow
        if cfg.date_range.start.year - 1 < dt.MINYEAR:
            raise ScenarioError("date_range.start: prior-year page-view range underflows") from None
    if cfg.date_range.end == dt.date.max:
        raise ScenarioError("date_range.end: date arithmetic overflow")

    check(len(cfg.outside_box) == 4, "outside_box", "expected [min_lat, min_lon, max_lat, max_lon]")
    lat0, lon0, lat1, lon1 = cfg.outside_box
    check(lat0 < lat1 and lon0 < lon1, "outside_box", "degenerate box")
    b = cfg.region.bounds
    check(lat1 < b.min_lat or lat0 > b.max_lat or lon1 < b.min_lon or lon0 > b.max_lon,
          "outside_box", "must be disjoint from the region's bounding box")

    background = set(cfg.background_queries())
    seen: set[str] = set()
    groups = (("need_profiles", cfg.need_profiles), ("media_spikes", cfg.media_spikes),
              ("region_marker_queries", cfg.region_marker_queries))
    for name, items in groups:
        for i, item in enumerate(items):
            path = f"{name}[{i}]"
            check(bool(item.query.strip()), path + ".query", "empty query")
            check(item.query not in background, path + ".query",
                  f"{item.query!r} collides with a background vocabulary token")
            check(item.query not in seen, path + ".query", f"duplicate special query {item.query!r}")
            seen.add(item.query)
            check(item.lift >= 1, path + ".lift", "must be >= 1")
            check(item.base_share > 0, path + ".base_share", "must be > 0")
            window = getattr(item, "active_window", None)
            if window is not None:
                check(window.start in cfg.date_range and window.end in cfg.date_range,
                      path + ".active_window", "must lie inside date_range")
    for i, p in enumerate(cfg.need_profiles):
        check(p.category in CATEGORIES, f"need_profiles[{i}].category",
              f"must be one of {', '.join(CATEGORIES)}")
        if p.weekdays is not None:
            check(all(0 <= w <= 6 for w in p.weekdays), f"need_profiles[{i}].weekdays",
                  "weekday numbers run 0 (Mon) .. 6 (Sun)")
    pv = cfg.pv_site
    check(pv.base_rate > 0, "pv_site.base_rate", "must be > 0")
    check(pv.weekend_multiplier > 0, "pv_site.weekend_multiplier", "must be > 0")
    check(pv.lift > 0, "pv_site.lift", "must be > 0")


def load_config(path) -> ScenarioConfig:
    with open(Path(path), encoding="utf-8") as fh:
        return ScenarioConfig.from_dict(json.load(fh))


def bundled_config(name: str = "noto_demo") -> ScenarioConfig:
    """Load one of the scenario configs shipped in ``needfinder/data``."""
    return load_config(Path(__file__).parent / "data" / f"{name}.json")


# ---------------------------------------------------------------------------
# ground truth
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroundTruth:
    needs: dict[dt.date, tuple[tuple[str, str], ...]]
    media: dict[dt.date, tuple[str, ...]]
    markers: tuple[str, ...]

    def need_queries(self, day: dt.date) -> set[str]:
        return {q for q, _ in self.needs.get(day, ())}

    def to_dict(self) -> dict:
        return {
            "needs": {d.isoformat(): [list(p) for p in v] for d, v in sorted(self.needs.items())},
            "media": {d.isoformat(): list(v) for d, v in sorted(self.media.items())},
            "markers": list(self.markers),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruth":
        return cls(
            needs={dt.date.fromisoformat(d): tuple((q, c) for q, c in v)
                   for d, v in data["needs"].items()},
            media={dt.date.fromisoformat(d): tuple(v) for d, v in data["media"].items()},
            markers=tuple(data["markers"]),
        )


def ground_truth(cfg: ScenarioConfig) -> GroundTruth:
    """Needs, media spikes and markers per date; depends on the config only."""
    needs, media = {}, {}
    for day in cfg.date_range.days():
        needs[day] = tuple(sorted((p.query, p.category) for p in cfg.need_profiles if p.active_on(day)))
        media[day] = tuple(sorted(m.query for m in cfg.media_spikes if day in m.active_window))
    return GroundTruth(needs, media, tuple(sorted(r.query for r in cfg.region_marker_queries)))


def load_truth(path) -> GroundTruth:
    with open(Path(path), encoding="utf-8") as fh:
        return GroundTruth.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def query_vocabulary(cfg: ScenarioConfig) -> list[str]:
    """Background tokens followed by needs, media spikes and region markers."""
    return (cfg.background_queries()
            + [p.query for p in cfg.need_profiles]
            + [m.query for m in cfg.media_spikes]
            + [r.query for r in cfg.region_marker_queries])


def base_mass(cfg: ScenarioConfig) -> np.ndarray:
    """Unnormalised popularity: Zipf background summing to 1, then special queries."""
    ranks = np.arange(1, cfg.vocab_size + 1, dtype=float)
    zipf = ranks ** -cfg.zipf_exponent
    zipf /= zipf.sum()
    special = [p.base_share for p in cfg.need_profiles]
    special += [m.base_share for m in cfg.media_spikes]
    special += [r.base_share for r in cfg.region_marker_queries]
    return np.concatenate([zipf, np.array(special, dtype=float)])


def query_distribution(cfg: ScenarioConfig, day: dt.date, inside: bool) -> np.ndarray:
    """Per-search query probabilities for one population on one day."""
    mass = base_mass(cfg)
    i = cfg.vocab_size
    for p in cfg.need_profiles:
        if inside and p.active_on(day):
            mass[i] *= p.lift
        i += 1
    for m in cfg.media_spikes:
        if day in m.active_window:
            mass[i] *= m.lift
        i += 1
    for r in cfg.region_marker_queries:
        if inside:
            mass[i] *= r.lift
        i += 1
    return mass / mass.sum()


def _rng(cfg, stream, *keys):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, stream, *keys])))


def _sample_points(rng, n, box, region=None):
    lat0, lon0, lat1, lon1 = box
    out_lat = np.empty(n)
    out_lon = np.empty(n)
    filled = 0
    while filled < n:
        need = n - filled
        lat = rng.uniform(lat0, lat1, size=2 * need + 16)
        lon = rng.uniform(lon0, lon1, size=2 * need + 16)
        if region is not None:
            keep = region.contains(lat, lon)
            lat, lon = lat[keep], lon[keep]
        take = min(need, len(lat))
        out_lat[filled:filled + take] = lat[:take]
        out_lon[filled:filled + take] = lon[:take]
        filled += take
    return out_lat, out_lon


class Scenario(NamedTuple):
    pings: pd.DataFrame      # user_id, timestamp (epoch seconds, UTC), lat, lon
    searches: pd.DataFrame   # user_id, timestamp, query
    truth: GroundTruth
    pv: pd.DataFrame         # date, pv_count
    inside_users: frozenset


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    """Generate pings, searches, ground truth and page views for ``cfg``."""
    vocab = query_vocabulary(cfg)
    n_users = cfg.n_users_in + cfg.n_users_out
    width = max(6, len(str(n_users)))
    user_names = [f"u{i:0{width}d}" for i in range(n_users)]
    # shuffled so ids carry no region information
    perm = _rng(cfg, _STREAM_USERS).permutation(n_users)
    pops = ((_POP_IN, perm[:cfg.n_users_in]), (_POP_OUT, perm[cfg.n_users_in:]))

    tz = cfg.tz_offset
    epoch = dt.datetime(1970, 1, 1)
    h0, h1 = (int(h * 3600) for h in cfg.active_hours)
    b = cfg.region.bounds
    region_box = (b.min_lat, b.min_lon, b.max_lat, b.max_lon)

    s_user, s_time, s_query = [], [], []
    p_user, p_time, p_lat, p_lon = [], [], [], []
    for day_idx, day in enumerate(cfg.date_range.days()):
        midnight = int((dt.datetime.combine(day, dt.time()) - tz - epoch).total_seconds())
        for pop, ids in pops:
            inside = pop == _POP_IN
            rng = _rng(cfg, _STREAM_SEARCH, pop, day_idx)
            mean = cfg.searches_per_user_day
            if inside and day >= cfg.event_day:
                mean *= cfg.activity_damping
            counts = rng.poisson(mean, size=len(ids))
            m = int(counts.sum())
            users = np.repeat(ids, counts)
            probs = query_distribution(cfg, day, inside)
            queries = rng.choice(len(vocab), size=m, p=probs)
            times = midnight + rng.integers(h0, h1, size=m)
            s_user.append(users)
            s_time.append(times)
            s_query.append(queries)

            # one ping near each search unless dropped, plus a daily anchor ping
            keep = rng.random(m) >= cfg.location_dropout
            near_t = times[keep] + rng.integers(-3600, 3601, size=int(keep.sum()))
            active = ids[counts > 0]
            anchor_t = midnight + rng.integers(h0, h1, size=len(active))
            t = np.concatenate([near_t, anchor_t])
            u = np.concatenate([users[keep], active])
            lat, lon = _sample_points(rng, len(t), region_box if inside else cfg.outside_box,
                                      cfg.region if inside else None)
            p_user.append(u)
            p_time.append(t)
            p_lat.append(lat)
            p_lon.append(lon)

    user_cat = pd.CategoricalDtype(user_names)
    searches = _frame(
        user_id=np.concatenate(s_user), timestamp=np.concatenate(s_time),
        query=pd.Categorical.from_codes(np.concatenate(s_query), categories=vocab))
    pings = _frame(
        user_id=np.concatenate(p_user), timestamp=np.concatenate(p_time),
        lat=np.round(np.concatenate(p_lat), 6), lon=np.round(np.concatenate(p_lon), 6))
    for df in (searches, pings):
        df["user_id"] = pd.Categorical.from_codes(df["user_id"].to_numpy(), dtype=user_cat)

    inside_users = frozenset(user_names[i] for i in perm[:cfg.n_users_in])
    return Scenario(pings, searches, ground_truth(cfg), generate_pv(cfg), inside_users)


def _frame(**cols) -> pd.DataFrame:
    df = pd.DataFrame(cols)
    order = np.lexsort((df["user_id"].to_numpy(), df["timestamp"].to_numpy()))
    return df.iloc[order].reset_index(drop=True)


def pv_dates(cfg: ScenarioConfig) -> list[dt.date]:
    start = cfg.date_range.start
    try:
        prior = start.replace(year=start.year - 1)
    except ValueError:
        prior = start.replace(year=start.year - 1, day=28)
    n = (cfg.date_range.end - prior).days + 1
    return [prior + dt.timedelta(days=i) for i in range(n)]


def generate_pv(cfg: ScenarioConfig) -> pd.DataFrame:
    """Daily page views from one year before the range start through its end."""
    site = cfg.pv_site
    dates = pv_dates(cfg)
    rate = np.full(len(dates), site.base_rate)
    weekend = np.array([d.weekday() >= 5 for d in dates])
    rate[weekend] *= site.weekend_multiplier
    if site.lift_window is not None:
        rate[[d in site.lift_window for d in dates]] *= site.lift
    counts = _rng(cfg, _STREAM_PV).poisson(rate)
    return pd.DataFrame({"date": [d.isoformat() for d in dates], "pv_count": counts})


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def _log_frame(frame: pd.DataFrame) -> pl.DataFrame:
    """Categorical/epoch columns to their CSV text form (ISO-8601 UTC timestamps)."""
    cols = {}
    for name in frame.columns:
        col = frame[name]
        if isinstance(col.dtype, pd.CategoricalDtype):
            cats = pl.Series(np.asarray(col.cat.categories, dtype=object), dtype=pl.Utf8)
            cols[name] = cats.gather(pl.Series(col.cat.codes.to_numpy(np.int64)))
        elif name == "timestamp":
            ms = pl.Series(col.to_numpy(np.int64) * 1000).cast(pl.Datetime("ms"))
            cols[name] = ms.dt.strftime("%Y-%m-%dT%H:%M:%SZ")
        else:
            cols[name] = pl.Series(col.to_numpy())
    return pl.DataFrame(cols)


def write_scenario(scenario: Scenario, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("pings.csv", "searches.csv", "truth.json", "pv.csv")}

    _log_frame(scenario.pings).write_csv(paths["pings.csv"], float_precision=6)
    _log_frame(scenario.searches).write_csv(paths["searches.csv"])
    scenario.pv.to_csv(paths["pv.csv"], index=False, lineterminator="\n")
    with open(paths["truth.json"], "w", encoding="utf-8") as fh:
        json.dump(scenario.truth.to_dict(), fh, indent=1, ensure_ascii=False, sort_keys=True)
        fh.write("\n")
    return paths
