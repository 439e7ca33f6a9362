import csv
import io
import json

import pytest

from rwre import (
    DirectedGraph,
    WeightAssignment,
    build_torus,
    LatticeSpec,
    read_environment,
    write_graph,
)
from rwre.cli import RECORD_COLUMNS, main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for name in ("sample-env", "annealed-prob", "cycle-check", "reverse-check",
                 "cylinder-delta", "cylinder-exit", "transience", "trap-check",
                 "velocity", "ruin", "grid"):
        assert name in out


def test_unknown_flag_exits_two():
    with pytest.raises(SystemExit) as exc:
        main(["trap-check", "--alpha", "0.1,0.1", "--bogus"])
    assert exc.value.code == 2


def test_balanced_drift_rejected(capsys):
    code, out, err = run_cli(capsys, "cylinder-exit", "--alpha", "1,1,1,1",
                             "--replicas", "100")
    assert code == 2
    assert "alpha_1 > beta_1" in err


def test_malformed_alpha_rejected(capsys):
    code, out, err = run_cli(capsys, "trap-check", "--alpha", "2,x")
    assert code == 2 and "error:" in err
    code, out, err = run_cli(capsys, "trap-check", "--alpha", "2,1,1")
    assert code == 2
    code, out, err = run_cli(capsys, "trap-check", "--alpha", "2,-1")
    assert code == 2


def test_dimension_check(capsys):
    code, out, err = run_cli(capsys, "trap-check", "--alpha", "0.1,0.1", "--d", "2")
    assert code == 2 and "axes" in err


def test_trap_check_payload(capsys):
    code, out, err = run_cli(capsys, "trap-check", "--alpha",
                             "0.1,0.1,0.1,0.1", "--axis", "1")
    assert code == 0
    payload = json.loads(out)
    assert list(payload.keys()) == ["holds", "slack"]
    assert payload["holds"] is True
    assert payload["slack"] == pytest.approx(0.4, abs=1e-12)


def test_annealed_prob_exact_only(capsys):
    code, out, err = run_cli(capsys, "annealed-prob", "--alpha", "2,1",
                             "--torus", "3", "--path", "0,1,0,1")
    assert code == 0
    rec = json.loads(out)
    assert rec["exact"] == pytest.approx(1 / 6, rel=1e-13)
    assert rec["estimate"] is None and rec["se"] is None and rec["z"] is None


def test_annealed_prob_with_monte_carlo(capsys):
    code, out, err = run_cli(capsys, "annealed-prob", "--alpha", "2,1",
                             "--torus", "3", "--path", "0,1,0,1",
                             "--replicas", "4000", "--seed", "5")
    rec = json.loads(out)
    assert rec["se"] > 0
    assert abs(rec["z"]) < 5
    assert abs(rec["estimate"] - rec["exact"]) <= 5 * rec["se"]


def test_annealed_prob_step_literal(capsys):
    code, out, err = run_cli(capsys, "annealed-prob", "--alpha", "2,1",
                             "--torus", "3", "--path", "+1,-1,+1",
                             "--origin", "0")
    rec = json.loads(out)
    assert rec["exact"] == pytest.approx(1 / 6, rel=1e-13)


def test_cycle_check_payload(capsys):
    code, out, err = run_cli(capsys, "cycle-check", "--alpha", "2,1",
                             "--torus", "3", "--path", "0,1,0")
    assert code == 0
    rec = json.loads(out)
    assert rec["forward"] == pytest.approx(2 / 9, rel=1e-13)
    assert rec["backward"] == pytest.approx(2 / 9, rel=1e-13)
    assert rec["ok"] is True


def test_reverse_check_text_report(capsys):
    code, out, err = run_cli(capsys, "reverse-check", "--alpha", "2,1",
                             "--torus", "3", "--k", "2",
                             "--replicas", "500", "--seed", "11")
    assert code == 0
    lines = out.strip().split("\n")
    assert len(lines) == 2 + 4 + 1
    assert all(line.startswith("path ") for line in lines[:-1])
    assert "policy" in lines[-1]


def test_reverse_check_json_report(capsys):
    code, out, err = run_cli(capsys, "reverse-check", "--alpha", "2,1",
                             "--torus", "3", "--k", "2", "--replicas", "500",
                             "--seed", "11", "--format", "json")
    rec = json.loads(out)
    assert len(rec["paths"]) == 6
    assert rec["policy_ok"] in (True, False)
    assert rec["allowed_outliers"] == 1


def test_cylinder_delta_json_record(capsys):
    code, out, err = run_cli(capsys, "cylinder-delta", "--alpha", "2,1,1,1",
                             "--N", "2", "--L", "2", "--replicas", "500",
                             "--steps", "5000", "--seed", "7")
    assert code == 0
    rec = json.loads(out)
    assert list(rec.keys()) == RECORD_COLUMNS
    assert rec["experiment"] == "cylinder-delta"
    assert rec["seed"] == 7
    assert rec["wall_time_s"] is None
    assert abs(rec["estimate"] - 0.5) <= 5 * rec["se"]


def test_timing_flag_populates_wall_time(capsys):
    code, out, err = run_cli(capsys, "cylinder-delta", "--alpha", "2,1,1,1",
                             "--N", "1", "--L", "1", "--replicas", "200",
                             "--steps", "2000", "--seed", "7", "--timing")
    rec = json.loads(out)
    assert isinstance(rec["wall_time_s"], float) and rec["wall_time_s"] > 0


def test_csv_format_and_column_order(capsys):
    code, out, err = run_cli(capsys, "transience", "--alpha", "2,1",
                             "--L", "1,2", "--replicas", "300",
                             "--steps", "5000", "--seed", "13",
                             "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == RECORD_COLUMNS
    assert len(rows) == 3
    params = [json.loads(r[1]) for r in rows[1:]]
    assert [p["L"] for p in params] == [1, 2]
    assert rows[1][8] == ""  # wall_time_s blank without --timing


def test_velocity_multiple_horizons(capsys):
    code, out, err = run_cli(capsys, "velocity", "--alpha", "3,1",
                             "--horizons", "50,100", "--replicas", "50",
                             "--seed", "17")
    recs = json.loads(out)
    assert [r["params"]["horizon"] for r in recs] == [50, 100]
    assert all(r["experiment"] == "velocity" for r in recs)


def test_ruin_record(capsys):
    code, out, err = run_cli(capsys, "ruin", "--alpha", "2,1", "--L", "2",
                             "--replicas", "2000", "--seed", "19")
    rec = json.loads(out)
    assert rec["experiment"] == "ruin-oracle"
    assert 0.0 < rec["estimate"] < 1.0


def test_grid_rows_and_per_point_seeds(capsys):
    code, out, err = run_cli(capsys, "grid", "cylinder-delta", "--alpha",
                             "2,1,1,1", "--N", "1,2", "--L", "1,2",
                             "--replicas", "200", "--steps", "2000",
                             "--seed", "9")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == RECORD_COLUMNS
    assert len(rows) == 5
    params = [json.loads(r[1]) for r in rows[1:]]
    assert [(p["N"], p["L"]) for p in params] == [(1, 1), (1, 2), (2, 1), (2, 2)]
    assert [int(r[7]) for r in rows[1:]] == [9 ^ 0, 9 ^ 1, 9 ^ 2, 9 ^ 3]


def test_grid_empty_sweep_header_only(capsys):
    code, out, err = run_cli(capsys, "grid", "cylinder-delta", "--alpha",
                             "2,1,1,1", "--N", "1", "--L", "",
                             "--replicas", "200")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows == [RECORD_COLUMNS]


def test_grid_transience_ignores_n(capsys):
    code, out, err = run_cli(capsys, "grid", "transience", "--alpha", "2,1",
                             "--N", "1,2,3", "--L", "1,2", "--replicas", "200",
                             "--steps", "5000", "--seed", "21")
    rows = list(csv.reader(io.StringIO(out)))
    assert len(rows) == 3


def test_grid_rejects_unknown_experiment(capsys):
    code, out, err = run_cli(capsys, "grid", "velocity", "--alpha", "2,1")
    assert code == 2 and "grid supports" in err


def test_seed_resolution_env_fallback(capsys, monkeypatch):
    monkeypatch.setenv("RWRE_SEED", "777")
    code, out_env, err = run_cli(capsys, "cylinder-delta", "--alpha", "2,1,1,1",
                                 "--N", "1", "--L", "1", "--replicas", "200",
                                 "--steps", "2000")
    assert json.loads(out_env)["seed"] == 777
    monkeypatch.delenv("RWRE_SEED")
    code, out_flag, err = run_cli(capsys, "cylinder-delta", "--alpha", "2,1,1,1",
                                  "--N", "1", "--L", "1", "--replicas", "200",
                                  "--steps", "2000", "--seed", "777")
    assert out_flag == out_env
    # an explicit flag beats the environment variable
    monkeypatch.setenv("RWRE_SEED", "1")
    code, out_both, err = run_cli(capsys, "cylinder-delta", "--alpha", "2,1,1,1",
                                  "--N", "1", "--L", "1", "--replicas", "200",
                                  "--steps", "2000", "--seed", "777")
    assert out_both == out_env


def test_seed_env_must_be_integer(capsys, monkeypatch):
    monkeypatch.setenv("RWRE_SEED", "notanumber")
    code, out, err = run_cli(capsys, "cylinder-delta", "--alpha", "2,1,1,1",
                             "--replicas", "100")
    assert code == 2 and "RWRE_SEED" in err


def test_sample_env_round_trip(capsys, tmp_path):
    out_file = tmp_path / "env.txt"
    code, out, err = run_cli(capsys, "sample-env", "--alpha", "2,1",
                             "--torus", "4", "--seed", "23",
                             "--out", str(out_file))
    assert code == 0
    text = out_file.read_text()
    assert text.startswith("# seed 23\n")
    g, w = build_torus(LatticeSpec((2.0, 1.0)), [4])
    with open(out_file) as fh:
        env = read_environment(g, fh)
    env.validate()


def test_graph_file_source(capsys, tmp_path):
    g = DirectedGraph(2, [(0, 1), (0, 0), (1, 0)])
    w = WeightAssignment([2.0, 1.0, 1.0], g)
    path = tmp_path / "graph.txt"
    with open(path, "w") as fh:
        write_graph(g, w, fh)
    code, out, err = run_cli(capsys, "annealed-prob", "--graph-file", str(path),
                             "--path", "0,1")
    rec = json.loads(out)
    assert rec["exact"] == pytest.approx(2 / 3, rel=1e-13)
    assert rec["params"]["graph_file"] == str(path)


def test_graph_file_missing(capsys):
    code, out, err = run_cli(capsys, "annealed-prob", "--graph-file",
                             "/nonexistent/graph.txt", "--path", "0,1")
    assert code == 2


def test_missing_graph_source(capsys):
    code, out, err = run_cli(capsys, "annealed-prob", "--path", "0,1")
    assert code == 2 and "need --graph-file" in err


def test_worker_determinism_byte_identical(capsys, tmp_path):
    f1 = tmp_path / "w1.json"
    f4 = tmp_path / "w4.json"
    common = ["cylinder-delta", "--alpha", "2,1,1,1", "--N", "2", "--L", "2",
              "--replicas", "20000", "--steps", "5000", "--seed", "29"]
    assert main(common + ["--workers", "1", "--out", str(f1)]) == 0
    assert main(common + ["--workers", "4", "--out", str(f4)]) == 0
    capsys.readouterr()
    assert f1.read_bytes() == f4.read_bytes()
