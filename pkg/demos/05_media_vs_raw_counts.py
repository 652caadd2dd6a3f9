"""The news spike tops the raw in-region counts but not the learned scores.

Everyone searches the breaking-news query about twenty times more on spike
days, so its in/out odds barely move and its weight stays near zero.
"""

from needfinder.evaluate import raw_count_ranking
from needfinder.learn import Hyperparams, baseline_window, derive_stopwords, score_day
from needfinder.prepare import prepare_counts
from needfinder.scenario import generate_scenario

from _world import small_world

cfg = small_world()
sc = generate_scenario(cfg)
counts = prepare_counts(sc.searches, sc.pings, cfg.region)
start, end = baseline_window(cfg.event_day)
stop = derive_stopwords(counts[(counts["date"] >= str(start)) & (counts["date"] <= str(end))],
                        Hyperparams(), event_day=cfg.event_day)

spike = cfg.media_spikes[0]
print(f"{'date':<12}{'raw rank':>9}{'dnf weight':>12}{'dnf rank':>10}")
for day in spike.active_window.days():
    d = day.isoformat()
    rows = counts[counts["date"] == d]
    raw = [q for q, _ in raw_count_ranking(rows, top_n=50)]
    rep = score_day(rows, stop, date=d)
    listed = [q for q, _ in rep.entries]
    dnf_rank = listed.index(spike.query) + 1 if spike.query in listed else "-"
    print(f"{d:<12}{raw.index(spike.query) + 1:>9}{rep.score(spike.query):>12.3f}{dnf_rank:>10}")
