"""Score every event day and check the lists against what was injected."""

from needfinder.cli import render_board
from needfinder.evaluate import evaluate_recovery
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

days = [d.isoformat() for d in cfg.date_range.days() if d >= cfg.event_day]
reports = [score_day(counts[counts["date"] == d], stop, date=d) for d in days]
print(render_board(reports[:7], top_n=10))

m = evaluate_recovery(reports, sc.truth, 15)
print(f"mean recall@15 {m.mean_recall:.2f}, mean precision@15 {m.mean_precision:.2f}, "
      f"media inclusions {m.false_inclusion_media}, marker inclusions {m.false_inclusion_marker}")
