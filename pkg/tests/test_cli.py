import json
import math

import pytest

from multipair_bell.errors import ConfigurationError
from multipair_bell.experiment_cli import (
    EXIT_CHECK,
    EXIT_CONFIG,
    EXIT_OK,
    config_hash,
    main,
    read_table,
    render_table,
    resolve_config,
    run,
)
from multipair_bell.experiments import Check, ResultRow, Table, summarize


def test_entanglement_command_writes_table(tmp_path):
    out = tmp_path / "ent.csv"
    code = main(["entanglement", "--out", str(out), "--cache-dir", str(tmp_path / "cache"), "--check"])
    assert code == EXIT_OK
    text = out.read_text()
    assert text.startswith("# multipair-bell entanglement")
    assert "# check: PASS" in text and "# check: FAIL" not in text
    table = read_table(out)
    assert [r.axis for r in table.rows][:3] == [2.0, 4.0, 6.0]
    assert table.rows[0].extra["E_d"] == pytest.approx(0.75 * math.log2(3), abs=1e-12)
    assert (tmp_path / "cache" / "entanglement.csv").read_text() == text


def test_output_is_deterministic(tmp_path):
    cfg = {"values": [1, 2, 3], "rules": ["majority", "unanimity"], "optimizer": {"grid": 16}}
    _, first = run("fig-noise", cfg, {"cache_dir": str(tmp_path)})
    _, second = run("fig-noise", cfg, {"cache_dir": str(tmp_path)})
    assert first == second


def test_workers_do_not_change_results(tmp_path):
    cfg = {"values": [1, 2, 3, 4], "rules": ["majority", "3/4"], "optimizer": {"grid": 16}}
    _, serial = run("fig-ch-scaling", cfg, {"cache_dir": str(tmp_path), "workers": 1})
    _, parallel = run("fig-ch-scaling", cfg, {"cache_dir": str(tmp_path), "workers": 2})
    assert serial == parallel


def test_config_file_and_flags_merge(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"values": [2, 4], "rules": ["unanimity"], "options": {"tol": 1e-4}}))
    cfg, canonical = resolve_config("fig-noise", json.loads(path.read_text()), {"rules": ["majority"]})
    assert cfg.values == [2, 4] and cfg.rules == ["majority"] and cfg.opt("tol") == 1e-4
    again, _ = resolve_config("fig-noise", {"range": [2, 6, 2]})
    assert again.values == [2, 4, 6]
    # run-only keys do not change the hash
    _, other = resolve_config("fig-noise", json.loads(path.read_text()), {"rules": ["majority"], "workers": 3})
    assert config_hash(canonical) == config_hash(other)


@pytest.mark.parametrize("bad", [
    {"values": []},
    {"rules": ["1/3"]},
    {"over": "everything"},
    {"frobnicate": 1},
    {"optimizer": {"grid": 1}},
    {"quadrature": {"n_gamma": 3}},
    {"range": [1, 4, 0]},
    {"command": "fig-poisson"},
])
def test_configuration_errors(bad):
    with pytest.raises(ConfigurationError):
        resolve_config("fig-noise", bad)


def test_exit_code_on_config_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"rules": []}))
    assert main(["fig-noise", "--config", str(path)]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err
    path.write_text("not json")
    assert main(["fig-noise", "--config", str(path)]) == EXIT_CONFIG


def test_summary_without_cache_is_a_config_error(tmp_path, capsys):
    assert main(["summary", "--cache-dir", str(tmp_path / "empty")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "multipair-bell fig-ch-scaling" in err


def test_failed_check_exit_code(tmp_path, capsys):
    path = tmp_path / "loss.json"
    path.write_text(json.dumps({"values": [2, 3], "options": {"symmetric_values": [2, 3]},
                                "optimizer": {"grid": 16}}))
    code = main(["loss-study", "--config", str(path), "--check", "--out", str(tmp_path / "loss.csv"),
                 "--cache-dir", str(tmp_path)])
    assert code == EXIT_CHECK
    assert "FAIL  symmetric majority: first violation at M=10" in capsys.readouterr().err
    # without --check the same failure is reported but does not change the exit code
    assert main(["loss-study", "--config", str(path), "--out", str(tmp_path / "loss.csv"),
                 "--cache-dir", str(tmp_path)]) == EXIT_OK


def test_csv_round_trip_keeps_empty_and_nan_cells(tmp_path):
    table = Table("fig-noise", "M", [
        ResultRow(1, "majority", "noise", ch=0.1, threshold=0.29, alpha=0.7, theta=0.78, flag="ok",
                  provenance={"probes": 3}),
        ResultRow(2, "unanimity", "noise", ch=math.nan, threshold=math.nan, flag="no_violation"),
    ], fits=[{"name": "power", "rule": "majority", "kind": "noise", "slope": -1.0}],
        checks=[Check("demo", False, "detail")])
    _, canonical = resolve_config("fig-noise")
    text = render_table(table, canonical)
    assert "# check: FAIL demo | detail" in text
    path = tmp_path / "t.csv"
    path.write_text(text)
    back = read_table(path)
    assert back.rows[0].threshold == 0.29 and back.rows[0].provenance == {"probes": 3}
    assert math.isnan(back.rows[1].threshold) and back.rows[1].alpha is None
    assert back.fits[0]["slope"] == -1.0


def test_summary_from_cached_tables():
    def t(command, rows, fits=()):
        return Table(command, "M", rows, fits=list(fits))

    tables = {
        "fig-ch-scaling": t("fig-ch-scaling", [
            ResultRow(4, "majority", "optimized", ch=0.1), ResultRow(4, "unanimity", "optimized", ch=0.05)],
            [{"name": "power", "rule": "majority", "kind": "optimized", "slope": -0.5, "r2": 0.99}]),
        "fig-noise": t("fig-noise", [ResultRow(4, "majority", "noise", threshold=0.06),
                                     ResultRow(4, "unanimity", "noise", threshold=0.04)]),
        "fig-poisson": t("fig-poisson", [], [{"name": "argmax_mu", "rule": "majority", "kind": "optimized",
                                              "value": 1.5}]),
        "fig-efficiency": t("fig-efficiency", [], [{"name": "critical_eta", "rule": "majority", "kind": "critical",
                                                    "M": 1, "value": 0.667}]),
        "loss-study": t("loss-study", [], [{"name": "first_violation", "rule": "majority", "kind": "symmetric",
                                            "convention": "", "value": None}]),
        "fig-indist": t("fig-indist", [ResultRow(4, "majority", "symmetric_noise", threshold=0.06),
                                       ResultRow(4, "unanimity", "symmetric_noise", threshold=0.08)]),
        "entanglement": t("entanglement", [ResultRow(1000, "", "entanglement", extra={"ratio": 1.9})]),
    }
    table = summarize(tables)
    values = {(r.kind, r.rule): r.extra["value"] for r in table.rows}
    assert values[("best_vote_independent", "")] == "majority"
    assert values[("most_noise_robust_symmetric", "")] == "unanimity"
    assert values[("critical_eta_M1", "majority")] == 0.667
    assert all(c.passed for c in table.checks)
