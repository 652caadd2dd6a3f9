import json

import pytest

from conftest import small_config, window
from needfinder import __version__
from needfinder.cli import main


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = small_config(
        need_profiles=[{"query": "water outage", "category": "water", "lift": 8, "base_share": 0.01,
                        "active_window": window("2024-01-11", "2024-01-20")}],
        region_marker_queries=["peninsula"])
    scen = root / "scenario.json"
    scen.write_text(json.dumps(cfg.to_dict()))
    data = root / "data"
    assert main(["generate", "--scenario", str(scen), "--out", str(data)]) == 0
    counts = root / "counts.csv"
    assert main(["prepare", "--pings", str(data / "pings.csv"), "--searches", str(data / "searches.csv"),
                 "--region", str(data / "region.json"), "--out", str(counts)]) == 0
    stop = root / "stopwords.json"
    assert main(["stopwords", "--counts", str(counts), "--event-day", "2024-01-11", "--out", str(stop)]) == 0
    reports = root / "reports"
    reports.mkdir()
    for day in ("2024-01-12", "2024-01-13"):
        assert main(["score", "--counts", str(counts), "--date", day, "--stopwords", str(stop),
                     "--out", str(reports / f"report_{day}.json")]) == 0
    return root, data, counts, stop, reports


def test_generate_writes_all_artifacts(pipeline):
    _, data, *_ = pipeline
    names = {p.name for p in data.iterdir()}
    assert {"pings.csv", "searches.csv", "pv.csv", "truth.json", "region.json",
            "scenario.json", "provenance.json"} <= names
    prov = json.loads((data / "provenance.json").read_text())
    assert prov["version"] == __version__ and len(prov["config_hash"]) == 16


def test_prepare_output_and_provenance(pipeline):
    _, _, counts, *_ = pipeline
    lines = counts.read_text().splitlines()
    assert lines[0] == "date,region_flag,query,user_count"
    assert min(int(line.rsplit(",", 1)[1]) for line in lines[1:]) >= 9
    prov = json.loads(counts.with_name("counts.csv.provenance.json").read_text())
    assert prov["config"]["k"] == 9 and prov["config"]["window_min"] == 90.0
    assert prov["config"]["pings"] == "data/pings.csv"


def test_stopwords_and_reports(pipeline):
    _, _, _, stop, reports = pipeline
    sw = json.loads(stop.read_text())
    assert "peninsula" in [e["query"] for e in sw["stopwords"]]
    assert (sw["baseline_start"], sw["baseline_end"]) == ("2023-12-14", "2024-01-10")
    rep = json.loads((reports / "report_2024-01-12.json").read_text())
    assert rep["status"] == "ok" and rep["stopword_set_id"] == sw["stopword_set_id"]
    assert rep["top"][0]["query"] == "water outage"
    assert "peninsula" not in [e["query"] for e in rep["all_positive"]]
    assert {"pos_instances", "neg_instances", "epochs", "final_loss"} <= set(rep["diagnostics"])
    assert rep["provenance"]["command"] == "score"


def test_report_renders_fifteen_rows(pipeline, capsys):
    _, _, _, _, reports = pipeline
    assert main(["report", str(reports / "report_2024-01-12.json")]) == 0
    out = capsys.readouterr().out.splitlines()
    body = [line for line in out if line.strip()[:1].isdigit() and not line.startswith("(")]
    assert len(body) == 15
    assert body[0].split()[0] == "1" and "water outage" in body[0]


def test_eval_writes_metrics_and_series(pipeline):
    root, data, counts, _, reports = pipeline
    metrics = root / "metrics.json"
    assert main(["eval", "--reports", str(reports), "--truth", str(data / "truth.json"),
                 "--pv", str(data / "pv.csv"), "--counts", str(counts), "--out", str(metrics)]) == 0
    m = json.loads(metrics.read_text())
    assert m["dnf"]["mean_recall"] == 1.0 and "raw_count" in m
    header = (root / "series.csv").read_text().splitlines()[0]
    assert header == "date,dnf:water outage,pv_ratio,pv_ma"


def test_score_to_stdout(pipeline, capsys):
    _, _, counts, *_ = pipeline
    assert main(["score", "--counts", str(counts), "--date", "2024-01-12", "--out", "-"]) == 0
    assert json.loads(capsys.readouterr().out)["date"] == "2024-01-12"


def test_unknown_flag_is_usage_error(capsys):
    assert main(["score", "--bogus", "1"]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_required_flag(capsys):
    assert main(["prepare", "--pings", "x.csv"]) == 1
    assert "--searches" in capsys.readouterr().err


def test_untrainable_day_exits_two(tmp_path):
    counts = tmp_path / "counts.csv"
    counts.write_text("date,region_flag,query,user_count\n2024-01-10,in,q,30\n")
    out = tmp_path / "r.json"
    assert main(["score", "--counts", str(counts), "--date", "2024-01-10", "--out", str(out)]) == 2
    assert json.loads(out.read_text())["status"] == "untrainable"


def test_untrainable_baseline_exits_two(tmp_path):
    counts = tmp_path / "counts.csv"
    counts.write_text("date,region_flag,query,user_count\n2024-01-01,in,q,30\n")
    assert main(["stopwords", "--counts", str(counts), "--baseline-start", "2024-01-01",
                 "--baseline-end", "2024-01-05", "--out", str(tmp_path / "s.json")]) == 2


@pytest.mark.parametrize("body", ["date,region_flag,query,user_count\n2024-01-10,up,q,30\n",
                                  "not,a,counts,file\n1,2,3,4\n"])
def test_malformed_input_exits_three(tmp_path, body):
    counts = tmp_path / "counts.csv"
    counts.write_text(body)
    assert main(["score", "--counts", str(counts), "--date", "2024-01-10", "--out", "-"]) == 3


def test_bad_scenario_exits_three(tmp_path, capsys):
    bad = small_config().to_dict()
    bad["n_users_in"] = 0
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert main(["generate", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 3
    assert "n_users_in" in capsys.readouterr().err


def test_config_file_precedence(pipeline, tmp_path):
    _, _, counts, *_ = pipeline
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"seed": 5, "score": {"top": 3, "counts": str(counts), "date": "2024-01-12"}}))
    out = tmp_path / "r.json"
    assert main(["score", "--config", str(conf), "--top", "4", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["top_n"] == 4 and len(rep["top"]) == 4          # flag beats file
    assert rep["provenance"]["config"]["seed"] == 5            # file beats default
    assert rep["provenance"]["config"]["l2_lambda"] == 1e-4    # default


def test_version(capsys):
    with pytest.raises(SystemExit) as ex:
        main(["--version"])
    assert ex.value.code == 0
    assert __version__ in capsys.readouterr().out
