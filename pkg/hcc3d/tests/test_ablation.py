import threading

import msgspec.json
import pytest

import hcc3d.ablation
import hcc3d.conf
import hcc3d.ctx
import hcc3d.errors
from hcc3d.ablation import AblationReport, AblationTiming, Trial


@pytest.mark.parametrize(
    "spec, expected",
    [
        ("4,2", [(4, 2, None)]),
        ("4,2,48; 8,4,96;", [(4, 2, 48), (8, 4, 96)]),
        (" 16,8,144 ", [(16, 8, 144)]),
    ],
)
def test_parse_queries(spec, expected):
    assert hcc3d.ablation.parse_queries(spec) == expected


@pytest.mark.parametrize("spec", ["", ";", "4", "4,2,1,1", "four,2"])
def test_parse_queries_invalid(spec):
    with pytest.raises(hcc3d.errors.UsageError):
        hcc3d.ablation.parse_queries(spec)


def test_query_trials():
    trials = hcc3d.ablation.query_trials(hcc3d.conf.full(), "4,2,48;8,4,96;8,8,144;16,8,144")
    assert [t.label for t in trials] == [
        "ng4-nd2-k48",
        "ng8-nd4-k96",
        "ng8-nd8-k144",
        "ng16-nd8-k144",
    ]
    assert [t.config.n_g + t.config.n_d for t in trials] == [6, 12, 16, 24]

    defaulted = hcc3d.ablation.query_trials(hcc3d.conf.full(), "4,2")
    assert defaulted[0].config.K == 96


def test_invalid_query_setting():
    with pytest.raises(hcc3d.errors.ConfigError, match="K must be at least n_d"):
        hcc3d.ablation.query_trials(hcc3d.conf.desk(), "8,32,16")


def test_selection_trials():
    strategies = list(hcc3d.ablation.STRATEGY_LABELS)
    trials = hcc3d.ablation.selection_trials(hcc3d.conf.full(), strategies)
    assert [t.config.selection for t in trials] == strategies
    assert [t.config.n_d for t in trials] == [96, 24, 4, 4, 4]

    with pytest.raises(hcc3d.errors.UnknownStrategy):
        hcc3d.ablation.strategy_config(hcc3d.conf.full(), "greedy")


def test_dry_run():
    config = hcc3d.conf.override(hcc3d.conf.desk(), d=32, K=8)
    rows = [
        hcc3d.ablation.dry_run(trial, 4)
        for trial in hcc3d.ablation.selection_trials(config, ["select_all", "adm"])
    ]
    # m is raised to K for the smallest valid input.
    assert [r.tokens_in for r in rows] == [9, 9]
    assert [r.tokens_out for r in rows] == [16, 12]
    assert rows[0].val_accuracy is None


def test_run_trials_keeps_order():
    trials = [Trial(label=str(i), config=hcc3d.conf.desk()) for i in range(6)]
    seen = set()

    def fn(trial):
        seen.add(threading.get_ident())
        return trial.label

    with hcc3d.ctx.set_vars(threads=3):
        assert hcc3d.ablation.run_trials(trials, fn) == [str(i) for i in range(6)]

    assert len(seen) <= 3
    assert hcc3d.ablation.run_trials([], fn) == []


def test_table_and_write(tmp_path):
    config = hcc3d.conf.desk()
    trial = Trial(label="adm", config=config)
    report = AblationReport(
        kind="selection",
        dry_run=False,
        rows=[
            hcc3d.ablation.row(trial, tokens_in=64, tokens_out=12, val_accuracy=0.5),
            hcc3d.ablation.row(trial, tokens_in=64, tokens_out=12),
        ],
    )
    assert hcc3d.ablation.table_rows(report) == [
        ["ADM (Full)", "8", "4", "16", "12", "0.500", "-"],
        ["ADM (Full)", "8", "4", "16", "12", "-", "-"],
    ]
    timing = AblationTiming(labels=["adm", "adm"], train_seconds=[12.34, 0.5])
    assert [r[-1] for r in hcc3d.ablation.table_rows(report, timing)] == ["12.3s", "0.5s"]

    paths = hcc3d.ablation.write(report, tmp_path)
    assert [p.name for p in paths] == ["ablation.json", "ablation.csv"]
    assert msgspec.json.decode(paths[0].read_bytes(), type=AblationReport) == report
    lines = paths[1].read_text().splitlines()
    assert len(lines) == 3
    assert lines[2].endswith(",,")

    path = hcc3d.ablation.write_timing(timing, tmp_path)
    assert path.name == "ablation_timing.json"
    assert msgspec.json.decode(path.read_bytes(), type=AblationTiming) == timing
    assert paths[0].read_bytes() == hcc3d.ablation.write(report, tmp_path)[0].read_bytes()
