"""Why the place name never shows up as a need.

A model trained on the normal weeks before the event already gives
the region's own place names a large weight. Those queries are set aside
as stopwords before any event day is scored.
"""

from needfinder.learn import Hyperparams, baseline_window, derive_stopwords, score_day
from needfinder.prepare import prepare_counts
from needfinder.scenario import generate_scenario

from _world import small_world

cfg = small_world()
sc = generate_scenario(cfg)
counts = prepare_counts(sc.searches, sc.pings, cfg.region)
start, end = baseline_window(cfg.event_day)
base = counts[(counts["date"] >= str(start)) & (counts["date"] <= str(end))]
stop = derive_stopwords(base, Hyperparams(), event_day=cfg.event_day)
print(f"baseline {stop.baseline_start} .. {stop.baseline_end}: {len(stop)} stopword(s)")
for q, w in sorted(stop.weights.items(), key=lambda t: -t[1]):
    print(f"  {q:<20} weight {w:.2f}")

day = str(cfg.event_day)
rows = counts[counts["date"] == day]
with_sw = score_day(rows, stop)
without = score_day(rows)
print(f"\n{day} top 5 without stopwords: {without.top_queries(5)}")
print(f"{day} top 5 with stopwords:    {with_sw.top_queries(5)}")
