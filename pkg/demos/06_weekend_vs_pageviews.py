"""Daily scores see a weekend-only need that a smoothed page-view ratio hides."""

import datetime as dt

from needfinder.evaluate import peak_to_trough, pv_score, weekend_weekday_means
from needfinder.learn import Hyperparams, baseline_window, derive_stopwords, score_day
from needfinder.prepare import prepare_counts
from needfinder.scenario import ScenarioConfig, bundled_config, generate_scenario

data = bundled_config("weekend_demo").to_dict()
data.update(n_users_in=1500, n_users_out=3000)
cfg = ScenarioConfig.from_dict(data)
sc = generate_scenario(cfg)
counts = prepare_counts(sc.searches, sc.pings, cfg.region)
start, end = baseline_window(cfg.event_day)
stop = derive_stopwords(counts[(counts["date"] >= str(start)) & (counts["date"] <= str(end))],
                        Hyperparams(), event_day=cfg.event_day)

need = next(p for p in cfg.need_profiles if p.weekdays)
span = [d.isoformat() for d in need.active_window.days()]
scores = {d: score_day(counts[counts["date"] == d], stop, date=d).score(need.query) for d in span}
pv = pv_score(sc.pv, cfg.date_range.start, cfg.date_range.end).set_index("date")

print(f"{'date':<12}{'day':<5}{need.query + ' score':>18}{'pv ratio':>10}{'pv 7d ma':>10}")
for d in span[:14]:
    print(f"{d:<12}{dt.date.fromisoformat(d).strftime('%a'):<5}"
          f"{scores[d]:>18.3f}{pv.loc[d, 'ratio']:>10.3f}{pv.loc[d, 'ma']:>10.3f}")
wkend, wkday = weekend_weekday_means(scores)
print(f"\nweekend mean {wkend:.3f} vs weekday mean {wkday:.3f}; "
      f"PV moving-average peak/trough {peak_to_trough(pv.loc[span, 'ma']):.3f}")
