"""Build a synthetic disaster world and look at what was injected.

The generator plants three kinds of special queries into a Zipf background:
needs that only in-region users search more, a news spike that everyone
searches more, and a place name that the region always searches more.
"""

import datetime as dt

from needfinder.scenario import generate_scenario, query_distribution

from _world import small_world

cfg = small_world()
sc = generate_scenario(cfg)
print(f"{len(sc.searches):,} searches and {len(sc.pings):,} location pings "
      f"from {cfg.n_users_in + cfg.n_users_out:,} users over {len(list(cfg.date_range.days()))} days")

day = cfg.event_day + dt.timedelta(days=2)
print(f"\nInjected needs active on {day}:")
for q, cat in sorted(sc.truth.needs[day]):
    print(f"  {q:<24} {cat}")
print("Media spike that day:", ", ".join(sc.truth.media.get(day, ())) or "none")
print("Region markers:", ", ".join(sc.truth.markers))

vocab = cfg.background_queries() + [p.query for p in cfg.need_profiles] \
    + [m.query for m in cfg.media_spikes] + [r.query for r in cfg.region_marker_queries]
p_in, p_out = query_distribution(cfg, day, True), query_distribution(cfg, day, False)
print(f"\nSampling law on {day} (per-search probability, inside vs outside):")
for q in ("water outage", "earthquake breaking news", "noto peninsula", "q0001"):
    i = vocab.index(q)
    print(f"  {q:<26} {p_in[i]:.4f}  {p_out[i]:.4f}  ratio {p_in[i] / p_out[i]:5.2f}")
