"""From raw logs to publishable daily counts.

Each search gets an in/out flag from the user's nearest ping, events are
collapsed to distinct users per (day, flag, query), and small rows are
suppressed so no published number describes fewer than k people.
"""

from needfinder.prepare import k_anonymize, prepare_counts
from needfinder.scenario import generate_scenario

from _world import small_world

cfg = small_world()
sc = generate_scenario(cfg)

for k in (1, 9, 50):
    counts = prepare_counts(sc.searches, sc.pings, cfg.region, k=k)
    print(f"k={k:<3} {len(counts):>6} rows survive, smallest count {counts['user_count'].min()}")

counts = prepare_counts(sc.searches, sc.pings, cfg.region, k=1)
k9 = k_anonymize(counts, 9)
lost = counts[counts["user_count"] < 9]
print(f"\nk=9 drops {len(lost)} rows holding {lost['user_count'].sum()} user-query pairs; "
      f"{len(k9)} rows remain")
print("\nA few published rows:")
print(k9[k9["query"] == "water outage"].head(6).to_string(index=False))
