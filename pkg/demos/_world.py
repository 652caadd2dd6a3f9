"""A desk-sized world shared by the demo scripts (about 3k users, 30 days)."""

from needfinder.scenario import ScenarioConfig, bundled_config


def small_world(seed: int = 11) -> ScenarioConfig:
    data = bundled_config().to_dict()
    data.update(seed=seed, n_users_in=1000, n_users_out=2000,
                date_range={"start": "2023-12-18", "end": "2024-01-16"})
    for p in data["need_profiles"]:
        w = p["active_window"]
        w["end"] = min(w["end"], "2024-01-16")
    data["need_profiles"] = [p for p in data["need_profiles"]
                             if p["active_window"]["start"] <= p["active_window"]["end"]]
    data["pv_site"]["lift_window"]["end"] = "2024-01-16"
    return ScenarioConfig.from_dict(data)
