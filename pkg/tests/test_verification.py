import ast
import dataclasses
import inspect

import numpy as np
import pytest

import lqg_pbe.oracles as oracles_module
from lqg_pbe import StrategyProfile, make_game, random_game
from lqg_pbe.simulation import DeviationSpec
from lqg_pbe.verification import (GRID_MAGNITUDES, OracleError, certify_equilibrium, conditioning_oracle,
                                  consistency_report, corrupt_profile, deviation_gain, deviation_grid, ols,
                                  one_stage_oracle, single_agent_lqg_oracle)
from conftest import random_profile


def test_oracles_share_no_code_with_filters_or_solver():
    tree = ast.parse(inspect.getsource(oracles_module))
    imported = {node.module for node in ast.walk(tree) if isinstance(node, ast.ImportFrom)}
    assert imported <= {"__future__", "game_model", "strategy"}


def test_conditioning_on_nothing_is_prior_mean(canonical):
    v, others = conditioning_oracle(canonical, StrategyProfile.zeros(canonical), 0, 0, np.zeros((0, 1)),
                                    np.zeros((0, 2, 1)))
    assert not v.any() and others.shape == (1, 1)


def test_first_stage_conditioning_closed_form():
    spec = make_game(2, 2, 2, 1, [[2.0, 0.3], [0.3, 1.0]], [np.eye(2), 2 * np.eye(2)], [-np.eye(4)] * 2)
    x = np.array([[0.7, -1.2]])
    v, others = conditioning_oracle(spec, random_profile(spec, 0), 1, 0, x, np.zeros((0, 2, 1)))
    sig = np.asarray(spec.prior_cov)
    k0 = sig @ np.linalg.inv(sig + np.eye(2))
    k1 = sig @ np.linalg.inv(sig + 2 * np.eye(2))
    assert np.allclose(v, k0 @ x[0], atol=1e-12)
    assert np.allclose(others[0], k1 @ v, atol=1e-12)


def test_dimension_guard():
    spec = random_game(n_players=4, horizon=20, dim_v=3, seed=0)   # 3 * (1 + 4 * 20) = 243 > 200
    with pytest.raises(OracleError, match="exceeds"):
        conditioning_oracle(spec, StrategyProfile.zeros(spec), 20, 0, np.zeros((20, 3)), np.zeros((20, 4, 1)))


def test_one_stage_oracle_cases():
    with pytest.raises(OracleError):
        one_stage_oracle(random_game(horizon=2))
    dec = random_game(horizon=1, seed=3, coupling=0.0)
    b = dec.reward_mat[0]
    assert one_stage_oracle(dec).L[0, 0, 0, 0] == pytest.approx(-b[0, 1] / b[1, 1])
    assert one_stage_oracle(dec).distance(single_agent_lqg_oracle(dec)[0]) < 1e-12
    quiet = [b.copy() for b in random_game(horizon=1, seed=4, coupling=0.4).reward_mat]
    for q in quiet:
        q[0, 1:] = q[1:, 0] = 0.0
    prof = one_stage_oracle(make_game(2, 1, 1, 1, [[1.0]], [[[1.0]]] * 2, quiet))
    assert not prof.L.any() and not prof.c.any()
    b1 = np.array([[0.3, 0.8, 0.1], [0.8, -1.0, 0.05], [0.1, 0.05, -0.2]])
    swap = np.array([[1, 0, 0], [0, 0, 1], [0, 1, 0]])
    sym = one_stage_oracle(make_game(2, 1, 1, 1, [[1.0]], [[[1.0]]] * 2, [b1, swap @ b1 @ swap]))
    assert sym.L[0, 0, 0, 0] == pytest.approx(sym.L[0, 1, 0, 0], abs=1e-14)


def test_ols_recovers_coefficients():
    rng = np.random.default_rng(0)
    x = np.column_stack([rng.standard_normal(5000), np.ones(5000)])
    y = x @ [2.0, -1.0] + 0.1 * rng.standard_normal(5000)
    coef, se = ols(y, x)
    assert np.all(np.abs(coef - [2.0, -1.0]) < 4 * se)
    assert se[0] == pytest.approx(0.1 / np.sqrt(5000), rel=0.1)


def test_deviation_grid_layout(canonical):
    grid = deviation_grid(canonical, 1, 2, seed=4)
    assert len(grid) == 16
    coef = [d for d in grid if d.kind == "coef"]
    assert len(coef) == 12 and sum(d.kind == "action" for d in grid) == 4
    for d in coef:
        norm = np.sqrt(np.sum(d.dL ** 2) + np.sum(d.dM ** 2) + np.sum(d.dc ** 2))
        assert norm == pytest.approx(abs(d.magnitude))
        assert abs(d.magnitude) in GRID_MAGNITUDES
        assert (d.player, d.stage) == (1, 2)
    again = deviation_grid(canonical, 1, 2, seed=4)
    assert all(np.array_equal(a.dL, b.dL) for a, b in zip(coef, again))


def test_zero_deviation_has_zero_gain(canonical, canonical_solution):
    dev = DeviationSpec(0, 1, "coef", np.zeros((1, 1)), np.zeros((1, 2)), np.zeros(1))
    res = deviation_gain(canonical, canonical_solution.profile, dev, 1000, seed=0, rec=canonical_solution.recursion)
    assert res.gain == 0.0 and res.stderr == 0.0 and not res.significant
    with pytest.raises(ValueError):
        deviation_gain(canonical, canonical_solution.profile, dev, 999, seed=0)


def test_certificate_passes_and_negative_control_fires(canonical, canonical_solution):
    ok = certify_equilibrium(canonical, canonical_solution.profile, 20_000, seed=3,
                             rec=canonical_solution.recursion, stages=[0, 2])
    assert ok.passed and len(ok.results) == 2 * 2 * 16
    assert "off-path" in ok.note
    bad = certify_equilibrium(canonical, corrupt_profile(canonical_solution.profile, 0), 20_000, seed=3,
                              players=[0])
    assert not bad.passed
    assert bad.to_dict()["passed"] is False


def test_consistency_report_passes_and_detects_wrong_coefficients(canonical, canonical_solution):
    rec = canonical_solution.recursion
    rep = consistency_report(canonical, canonical_solution.profile, 20_000, seed=11, rec=rec)
    assert rep.passed and not rep.warnings
    claims = {c.claim for c in rep.checks}
    assert claims == {"covariance publicness", "cross-estimate linearity", "error covariance",
                      "martingale increments", "signal innovation mean", "innovation whiteness"}
    wrong = dataclasses.replace(rec, cross_coeff=[[e + 0.1 for e in row] for row in rec.cross_coeff])
    bad = consistency_report(canonical, canonical_solution.profile, 20_000, seed=11, rec=wrong)
    assert all(c.status == "fail" for c in bad.by_claim("cross-estimate linearity"))
    assert "FAIL" in bad.to_text()


def test_consistency_report_small_sample_warns(canonical, canonical_solution):
    rep = consistency_report(canonical, canonical_solution.profile, 10, seed=0)
    assert rep.passed
    assert len(rep.warnings) == len(rep.checks) - 1
    assert rep.to_dict()["checks"][1]["status"] == "warn"
