import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lqg_pbe import build_public_recursion, make_game, random_game
from lqg_pbe.simulation import draw_primitives, simulate
from lqg_pbe.state_evolution import (build_observation_matrix, build_stage_model, estimate_update_blocks,
                                     f_index, f_sub_index, gain_blocks, init_stage_model, layout,
                                     noise_cov_stacked, others_action_index, signal_weight)
from conftest import random_profile


def unit_game(noise=(1.0, 1.0), prior=1.0):
    b = -np.eye(3)
    return make_game(2, 3, 1, 1, [[prior]], [[[q]] for q in noise], [b, b])


def test_first_stage_weights_half():
    model = init_stage_model(unit_game(), 0)
    lay = model.lay
    assert model.a_mat[lay.vh_self, lay.x][0, 0] == pytest.approx(0.5)
    assert model.a_mat[lay.vh_other(1), lay.v][0, 0] == pytest.approx(0.5)
    assert model.h_mat[lay.vh_other(1), lay.w_other(1)][0, 0] == pytest.approx(0.5)
    assert not model.d_coeff.any()


def test_first_stage_weight_with_noisier_partner():
    model = init_stage_model(unit_game(noise=(1.0, 3.0)), 0)
    assert model.a_mat[model.lay.vh_other(1), model.lay.v][0, 0] == pytest.approx(0.25)


def test_degenerate_prior_zero_weights():
    model = init_stage_model(unit_game(prior=0.0), 1)
    lay = model.lay
    assert not model.a_mat[lay.vh_self].any()
    assert not model.a_mat[lay.vh_others].any()


def test_signal_weight_matrix_form():
    spec = make_game(1, 1, 2, 1, [[2.0, 0.5], [0.5, 1.0]], [[[1.0, 0.2], [0.2, 0.5]]], [-np.eye(3)])
    sig, q = np.asarray(spec.prior_cov), np.asarray(spec.noise_cov[0])
    assert np.allclose(signal_weight(spec, 0), sig @ np.linalg.inv(sig + q), atol=1e-14)


def test_observation_matrix_placement():
    spec = unit_game()
    L_prev = np.array([[[2.0]], [[3.0]]])
    c = build_observation_matrix(spec, 0, L_prev)
    assert c.tolist() == [[0, 2, 0, 0], [0, 0, 3, 0], [0, 0, 0, 1]]
    c0 = build_observation_matrix(spec, 0, np.zeros((2, 1, 1)))
    assert c0.tolist() == [[0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 1]]


def test_stage_zero_delegates_to_init():
    spec = random_game(n_players=3, dim_v=2, seed=4)
    a, b = build_stage_model(spec, 1, 0, None, None, None), init_stage_model(spec, 1)
    for name in ("a_mat", "h_mat", "c_mat", "d_coeff"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_zero_previous_gains_collapse():
    spec = random_game(seed=2)
    rec = build_public_recursion(spec, np.zeros((3, 2, 1, 1)))
    model = rec.model[1][0]
    lay = model.lay
    p, kx, ka, ka_d = estimate_update_blocks(spec, 0, rec.gain[1][0], np.zeros((2, 1, 1)), rec.cross_coeff[0][0])
    assert np.allclose(model.a_mat[lay.vh_self, lay.vh_self], np.eye(1) - gain_blocks(spec, rec.gain[1][0], 0)[1])
    assert not ka_d.any()
    assert not model.d_coeff[:, 2:].any()   # no f drive without revealing actions


def test_layout_sizes_and_indices():
    lay = layout(random_game(n_players=3, dim_v=2, dim_a=1), 1)
    assert (lay.n_state, lay.n_noise, lay.n_obs) == (10, 6, 5)
    assert lay.others == [0, 2]
    assert lay.vh_other(2) == slice(6, 8) and lay.x == slice(8, 10)
    spec = random_game(n_players=3, dim_v=2, dim_a=2)
    assert others_action_index(spec, 1).tolist() == [0, 1, 4, 5]
    assert f_index(spec, 2) == slice(8, 12)
    assert f_sub_index(spec, 2, 1) == slice(10, 12)
    assert noise_cov_stacked(spec, 1).shape == (6, 6)


@given(st.sampled_from([(2, 1, 1), (3, 1, 1), (2, 2, 1), (3, 2, 2)]), st.integers(0, 1000))
def test_simulated_states_obey_stacked_model(dims, seed):
    n, nv, na = dims
    spec = random_game(n_players=n, horizon=3, dim_v=nv, dim_a=na, seed=seed)
    prof = random_profile(spec, seed)
    rec = build_public_recursion(spec, prof.L)
    sim = simulate(spec, prof, rec, draw_primitives(spec, seed, 8))
    innov = (sim["a"] - sim["m"]).reshape(8, 3, n * na)
    for i in range(n):
        lay = layout(spec, i)

        def state(k):
            s = np.zeros((8, lay.n_state))
            s[:, lay.v] = sim["v"]
            if k > 0:
                s[:, lay.vh_self] = sim["v_hat"][:, k - 1, i]
                for j in lay.others:
                    s[:, lay.vh_other(j)] = sim["v_hat"][:, k - 1, j]
            s[:, lay.x] = sim["x"][:, k, i]
            return s

        w = sim["x"] - sim["v"][:, None, None, :]
        for k in range(2):
            model = rec.model[k][i]
            noise = np.concatenate([*(w[:, k, j] for j in lay.others), w[:, k + 1, i]], axis=1)
            drive = (np.concatenate([innov[:, k - 1], sim["f"][:, k - 1]], axis=1) if k > 0
                     else np.zeros((8, model.d_coeff.shape[1])))
            nxt = state(k) @ model.a_mat.T + noise @ model.h_mat.T + drive @ model.d_coeff.T
            assert np.allclose(nxt, state(k + 1), atol=1e-12)
            # observation through C equals the assembled one
            y = state(k + 1) @ rec.c_mat[k + 1][i].T
            own = slice(i * na, (i + 1) * na)
            assert np.allclose(y[:, lay.y_own], innov[:, k, own], atol=1e-12)
            assert np.allclose(y[:, lay.y_others], innov[:, k][:, others_action_index(spec, i)], atol=1e-12)
            assert np.allclose(y[:, lay.y_x], sim["x"][:, k + 1, i], atol=1e-12)
