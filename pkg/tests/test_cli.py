import json
from pathlib import Path

import numpy as np
import pytest

from lqg_pbe import solve_equilibrium
from lqg_pbe.cli import RunConfig, SpecLoadError, dump_spec, load_spec, main
from lqg_pbe.game_model import DimensionError, make_game
from lqg_pbe.verification import canonical_game

FIXTURE = Path(__file__).parent / "data" / "canonical_scalar.json"


@pytest.fixture
def game_file(tmp_path):
    path = tmp_path / "game.json"
    dump_spec(canonical_game(), path)
    return path


def edited(tmp_path, change):
    data = json.loads(FIXTURE.read_text())
    change(data)
    path = tmp_path / "edited.json"
    path.write_text(json.dumps(data))
    return path


def test_load_fixture():
    spec = load_spec(FIXTURE)
    assert (spec.n_players, spec.horizon, spec.dim_v, spec.dim_a) == (2, 2, 1, 1)
    ref = canonical_game(horizon=2)
    assert all(np.array_equal(a, b) for a, b in zip(spec.reward_mat, ref.reward_mat))


def test_load_errors(tmp_path):
    with pytest.raises(DimensionError, match="reward_mat"):
        load_spec(edited(tmp_path, lambda d: d["reward_mat"].__setitem__(0, [[1, 0], [0, 1]])))
    with pytest.raises(SpecLoadError, match="'horizon'"):
        load_spec(edited(tmp_path, lambda d: d.pop("horizon")))
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "n_players": 2,\n  "horizon": ,\n}')
    with pytest.raises(SpecLoadError, match="line 3, column 14"):
        load_spec(bad)


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig("solve", "g.json", "")
    with pytest.raises(ValueError):
        RunConfig("solve", "g.json", "o.json", n_paths=0)
    with pytest.raises(ValueError):
        RunConfig("frobnicate", "g.json", "o.json")
    with pytest.raises(ValueError):
        RunConfig("verify", "g.json", "o.json", deviation_grid=17)


def test_solve_zero_rewards(tmp_path, capsys):
    spec = make_game(2, 3, 1, 1, [[1.0]], [[[1.0]]] * 2, [np.zeros((3, 3))] * 2)
    dump_spec(spec, tmp_path / "zero.json")
    out = tmp_path / "sol.json"
    assert main(["solve", "--spec", str(tmp_path / "zero.json"), "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["report"]["iterations"] == 1 and data["report"]["converged"]
    assert not np.any(data["profile"]["L"]) and not np.any(data["profile"]["M"])
    assert data["config"]["command"] == "solve" and data["seed"] == 0


def test_solve_writes_exact_floats(game_file, tmp_path):
    out = tmp_path / "sol.json"
    assert main(["solve", "--spec", str(game_file), "--out", str(out)]) == 0
    got = np.asarray(json.loads(out.read_text())["profile"]["L"])
    assert np.array_equal(got, solve_equilibrium(canonical_game()).profile.L)


def test_not_converged_exit_and_partial_artifact(game_file, tmp_path, capsys):
    out = tmp_path / "sol.json"
    assert main(["solve", "--spec", str(game_file), "--out", str(out), "--max-iter", "1"]) == 1
    assert capsys.readouterr().err.strip().splitlines()[-1].startswith("not converged")
    assert json.loads(out.read_text())["report"]["converged"] is False


def test_invalid_input_exit_codes(tmp_path, capsys):
    assert main(["solve", "--spec", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o.json")]) == 2
    assert main(["simulate", "--spec", str(FIXTURE), "--out", str(tmp_path / "o.json"), "--paths", "0"]) == 2
    assert "error" in capsys.readouterr().err


def test_simulate_with_trajectories(game_file, tmp_path):
    out = tmp_path / "sim.json"
    assert main(["simulate", "--spec", str(game_file), "--out", str(out), "--paths", "2000", "--seed", "4",
                 "--trajectories", "2"]) == 0
    data = json.loads(out.read_text())
    assert data["monte_carlo"]["n_paths"] == 2000 and data["monte_carlo"]["seed"] == 4
    lines = Path(data["trajectories"]).read_text().splitlines()
    assert len(lines) == 6 and json.loads(lines[0])["stage"] == 1


def test_export_round_trip_reproduces_verification(game_file, tmp_path):
    sol, lines = tmp_path / "sol.json", tmp_path / "sol.jsonl"
    assert main(["solve", "--spec", str(game_file), "--out", str(sol)]) == 0
    assert main(["export", "--in", str(sol), "--out", str(lines)]) == 0
    records = [json.loads(r) for r in lines.read_text().splitlines()]
    assert records[0]["record"] == "header" and records[0]["config"]["command"] == "solve"
    assert sum(r["record"] == "coefficients" for r in records) == 6
    common = ["--spec", str(game_file), "--paths", "2000", "--seed", "42", "--deviation-grid", "4"]
    assert main(["verify", *common, "--profile", str(sol), "--out", str(tmp_path / "a.json")]) == 0
    assert main(["verify", *common, "--profile", str(lines), "--out", str(tmp_path / "b.json")]) == 0
    a, b = (json.loads((tmp_path / n).read_text()) for n in ("a.json", "b.json"))
    assert a["consistency"] == b["consistency"]
    assert a["deviations"]["results"] == b["deviations"]["results"]
    assert len(a["deviations"]["results"]) == 2 * 3 * 4
    assert main(["export", "--in", str(tmp_path / "a.json"), "--out", str(tmp_path / "a.jsonl")]) == 0


@pytest.mark.slow
def test_verify_canonical_full(game_file, tmp_path, capsys):
    out = tmp_path / "verify.json"
    assert main(["verify", "--spec", str(game_file), "--out", str(out), "--seed", "42", "--paths", "100000"]) == 0
    data = json.loads(out.read_text())
    assert data["consistency"]["passed"] and data["deviations"]["passed"]
    assert capsys.readouterr().out.startswith("verified")
