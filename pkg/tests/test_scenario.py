import datetime as dt
import filecmp
import json

import numpy as np
import pytest

from conftest import small_config, window
from needfinder.scenario import (
    ScenarioConfig, ScenarioError, bundled_config, generate_scenario, ground_truth, load_truth,
    parse_tz, query_distribution, write_scenario,
)


@pytest.fixture(scope="module")
def world():
    cfg = small_config(
        n_users_in=600, activity_damping=0.6,
        need_profiles=[{"query": "water", "category": "water", "lift": 6,
                        "active_window": window("2024-01-11", "2024-01-15")}],
        media_spikes=[{"query": "breaking", "lift": 20, "active_window": window("2024-01-11", "2024-01-12")}],
        region_marker_queries=["peninsula"],
    )
    return cfg, generate_scenario(cfg)


def test_identical_seed_gives_identical_files(tmp_path):
    cfg = small_config(n_users_in=50, n_users_out=80)
    a, b = tmp_path / "a", tmp_path / "b"
    write_scenario(generate_scenario(cfg), a)
    write_scenario(generate_scenario(cfg), b)
    names = sorted(p.name for p in a.iterdir())
    assert names == ["pings.csv", "pv.csv", "searches.csv", "truth.json"]
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert match == names and not mismatch and not errors
    c = tmp_path / "c"
    write_scenario(generate_scenario(small_config(n_users_in=50, n_users_out=80, seed=8)), c)
    assert (a / "searches.csv").read_bytes() != (c / "searches.csv").read_bytes()


def test_output_schema(tmp_path):
    write_scenario(generate_scenario(small_config(n_users_in=20, n_users_out=20)), tmp_path)
    heads = {p.name: p.read_text(encoding="utf-8").splitlines()[:2] for p in tmp_path.glob("*.csv")}
    assert heads["pings.csv"][0] == "user_id,timestamp,lat,lon"
    assert heads["searches.csv"][0] == "user_id,timestamp,query"
    assert heads["pv.csv"][0] == "date,pv_count"
    ts = heads["searches.csv"][1].split(",")[1]
    assert dt.datetime.strptime(ts, "%Y-%m-%dT%H:%M:%SZ")


def test_pings_respect_region_geometry(world):
    cfg, sc = world
    inside_user = sc.pings["user_id"].astype(str).isin(sc.inside_users).to_numpy()
    contained = cfg.region.contains(sc.pings["lat"].to_numpy(), sc.pings["lon"].to_numpy())
    assert contained[inside_user].all()
    assert not contained[~inside_user].any()


def test_most_searches_have_a_ping_within_ninety_minutes(world):
    _, sc = world
    s, p = sc.searches, sc.pings
    covered = 0
    for user, grp in s.groupby("user_id", observed=True):
        pt = np.sort(p.loc[p["user_id"] == user, "timestamp"].to_numpy())
        st = grp["timestamp"].to_numpy()
        idx = np.searchsorted(pt, st)
        lo = np.abs(st - pt[np.clip(idx - 1, 0, len(pt) - 1)])
        hi = np.abs(pt[np.clip(idx, 0, len(pt) - 1)] - st)
        covered += int((np.minimum(lo, hi) <= 5400).sum())
    assert covered / len(s) >= 0.95


def _per_user_day(sc, users, days):
    s = sc.searches
    local = (s["timestamp"] + 9 * 3600) // 86400
    day_nums = [(d - dt.date(1970, 1, 1)).days for d in days]
    sel = s["user_id"].astype(str).isin(users) & local.isin(day_nums)
    return sel.sum() / (len(users) * len(day_nums))


def test_activity_damping(world):
    cfg, sc = world
    pre = [cfg.day(-i) for i in range(1, 11)]
    post = [cfg.day(i) for i in range(10)]
    assert len(sc.inside_users) * len(pre) >= 5000
    ratio = _per_user_day(sc, sc.inside_users, post) / _per_user_day(sc, sc.inside_users, pre)
    assert 0.6 * 0.9 <= ratio <= 0.6 * 1.1
    out_users = set(sc.searches["user_id"].astype(str)) - sc.inside_users
    out_ratio = _per_user_day(sc, out_users, post) / _per_user_day(sc, out_users, pre)
    assert 0.9 <= out_ratio <= 1.1


def _share(sc, query, users, days):
    s = sc.searches
    local = (s["timestamp"] + 9 * 3600) // 86400
    day_nums = [(d - dt.date(1970, 1, 1)).days for d in days]
    sel = s[s["user_id"].astype(str).isin(users) & local.isin(day_nums)]
    return (sel["query"] == query).mean()


def test_need_lift_matches_sampling_law():
    base_share = 0.01
    cfg = small_config(
        date_range=window("2024-01-01", "2024-01-25"), n_users_in=1000, n_users_out=200,
        need_profiles=[{"query": "water", "category": "water", "lift": 5, "base_share": base_share,
                        "active_window": window("2024-01-12", "2024-01-21")}])
    sc = generate_scenario(cfg)
    lifted = [cfg.day(i) for i in range(1, 11)]
    before = [cfg.day(-i) for i in range(1, 11)]
    assert len(sc.inside_users) * len(lifted) >= 10_000
    observed = _share(sc, "water", sc.inside_users, lifted) / _share(sc, "water", sc.inside_users, before)
    # oracle: Zipf background carries unit mass, the need carries base_share (times lift)
    expected = (5 * base_share / (1 + 5 * base_share)) / (base_share / (1 + base_share))
    assert 1 / 1.3 <= observed / 5 <= 1.3
    assert 1 / 1.3 <= observed / expected <= 1.3
    out_users = set(sc.searches["user_id"].astype(str)) - sc.inside_users
    assert _share(sc, "water", out_users, lifted) < 2 * base_share


def test_media_lift_is_shared_by_both_populations():
    cfg = small_config(
        date_range=window("2024-01-01", "2024-01-30"), event_day="2024-01-21",
        n_users_in=1000, n_users_out=2000,
        media_spikes=[{"query": "breaking", "lift": 20, "base_share": 0.02,
                       "active_window": window("2024-01-21", "2024-01-25")}])
    sc = generate_scenario(cfg)
    spike = [cfg.day(i) for i in range(5)]
    before = [cfg.day(-i) for i in range(1, 21)]
    out_users = set(sc.searches["user_id"].astype(str)) - sc.inside_users
    lift_in = _share(sc, "breaking", sc.inside_users, spike) / _share(sc, "breaking", sc.inside_users, before)
    lift_out = _share(sc, "breaking", out_users, spike) / _share(sc, "breaking", out_users, before)
    assert abs(lift_in - lift_out) / max(lift_in, lift_out) < 0.10
    assert lift_in > 10


def test_distribution_lifts():
    cfg = small_config(
        need_profiles=[{"query": "water", "category": "water", "lift": 5, "base_share": 0.01,
                        "active_window": window("2024-01-11", "2024-01-12")}],
        region_marker_queries=[{"query": "peninsula", "lift": 8, "base_share": 0.01}])
    vocab_idx = cfg.vocab_size
    p_in = query_distribution(cfg, dt.date(2024, 1, 11), True)
    p_out = query_distribution(cfg, dt.date(2024, 1, 11), False)
    p_pre = query_distribution(cfg, dt.date(2024, 1, 5), True)
    assert p_in.sum() == pytest.approx(1) and p_out.sum() == pytest.approx(1)
    assert p_in[vocab_idx] / p_in[vocab_idx + 1] == pytest.approx(5 / 8)
    assert p_out[vocab_idx] == pytest.approx(p_out[vocab_idx + 1])
    assert p_pre[vocab_idx] / p_pre[vocab_idx + 1] == pytest.approx(1 / 8)


def test_ground_truth_is_pure(world, tmp_path):
    cfg, sc = world
    reseeded = ScenarioConfig.from_dict({**cfg.to_dict(), "seed": 99})
    assert ground_truth(cfg) == ground_truth(reseeded) == sc.truth
    truth = sc.truth
    assert truth.need_queries(dt.date(2024, 1, 13)) == {"water"}
    assert truth.need_queries(dt.date(2024, 1, 16)) == set()
    assert truth.media[dt.date(2024, 1, 12)] == ("breaking",)
    assert truth.markers == ("peninsula",)
    all_needs = {q for pairs in truth.needs.values() for q, _ in pairs}
    assert not all_needs & {"breaking", "peninsula"}
    path = tmp_path / "truth.json"
    path.write_text(json.dumps(truth.to_dict()))
    assert load_truth(path) == truth


def test_pv_log_covers_prior_year(world):
    cfg, sc = world
    dates = sc.pv["date"].tolist()
    assert dates[0] == "2023-01-01" and dates[-1] == "2024-01-20"
    assert (sc.pv["pv_count"] > 0).all()


def test_config_roundtrip_and_bundled():
    cfg = small_config(need_profiles=[{"query": "used car", "category": "other", "lift": 5,
                                       "weekdays": [5, 6], "active_window": window("2024-01-11", "2024-01-20")}])
    assert ScenarioConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    for name in ("noto_demo", "weekend_demo"):
        demo = bundled_config(name)
        assert demo.n_users_in + demo.n_users_out == 10_000
        assert len(list(demo.date_range.days())) == 60


@pytest.mark.parametrize("override, field", [
    ({"n_users_in": 0}, "n_users_in"),
    ({"event_day": "2025-01-01"}, "event_day"),
    ({"activity_damping": 1.5}, "activity_damping"),
    ({"outside_box": [36.0, 136.0, 38.0, 138.0]}, "outside_box"),
    ({"need_profiles": [{"query": "x", "lift": 5}]}, "need_profiles[0].active_window"),
    ({"need_profiles": [{"query": "x", "lift": 0.5, "active_window": window("2024-01-11", "2024-01-12")}]},
     "need_profiles[0].lift"),
    ({"need_profiles": [{"query": "x", "lift": 5, "category": "fun",
                         "active_window": window("2024-01-11", "2024-01-12")}]}, "need_profiles[0].category"),
    ({"media_spikes": [{"query": "m", "lift": 20, "active_window": window("2024-01-11", "2024-03-01")}]},
     "media_spikes[0].active_window"),
    ({"region_marker_queries": ["q0001"]}, "region_marker_queries[0].query"),
    ({"timezone": "JST"}, "timezone"),
    ({"region": {"name": "r", "polygons": [[[0, 0], [1, 1]]]}}, "region.polygons[0]"),
    ({"date_range": {"start": "2024-01-20", "end": "2024-01-01"}}, "date_range"),
])
def test_invalid_config_names_the_field(override, field):
    with pytest.raises(ScenarioError) as err:
        small_config(**override)
    assert str(err.value).startswith(field)


def test_missing_required_field():
    data = small_config().to_dict()
    del data["seed"]
    with pytest.raises(ScenarioError, match="seed"):
        ScenarioConfig.from_dict(data)


@pytest.mark.parametrize("text, hours", [("+09:00", 9), ("-05:30", -5.5), ("UTC", 0), ("Z", 0)])
def test_parse_tz(text, hours):
    assert parse_tz(text) == dt.timedelta(hours=hours)

