import datetime as dt

import pytest

from needfinder.scenario import ScenarioConfig

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; the summary is printed at the end of the run."""
    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        _CRITERIA[number] = (title, bool(ok), detail)
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}  {detail}")


REGION = {
    "name": "test-region",
    "boxes": [[37.0, 136.8, 37.4, 137.2]],
    "polygons": [[[36.6, 136.6], [36.9, 136.6], [36.9, 136.9], [36.6, 136.75]]],
}


def small_config(**overrides) -> ScenarioConfig:
    """A desk-sized world: 20 days, event on day 10."""
    data = {
        "seed": 7,
        "date_range": {"start": "2024-01-01", "end": "2024-01-20"},
        "event_day": "2024-01-11",
        "n_users_in": 400,
        "n_users_out": 800,
        "region": REGION,
        "outside_box": [34.0, 134.0, 36.0, 139.0],
        "vocab_size": 200,
        "zipf_exponent": 1.0,
        "searches_per_user_day": 4.0,
        "activity_damping": 1.0,
    }
    data.update(overrides)
    return ScenarioConfig.from_dict(data)


def window(start: str, end: str) -> dict:
    return {"start": start, "end": end}


def days(start: str, end: str):
    d, e = dt.date.fromisoformat(start), dt.date.fromisoformat(end)
    while d <= e:
        yield d.isoformat()
        d += dt.timedelta(days=1)
