import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lqg_pbe.game_model import (DefinitenessError, DimensionError, GameSpec, GameSpecError, RewardBlocks,
                                batch_reward, make_game, random_game, reward, reward_blocks, validate_game)


def base_args(**kw):
    args = dict(n_players=2, horizon=2, dim_v=1, dim_a=1, prior_cov=[[1.0]],
                noise_cov=[[[1.0]], [[1.0]]], reward_mat=[np.eye(3), -np.eye(3)])
    args.update(kw)
    return args


def test_valid_spec_accepted():
    spec = make_game(**base_args())
    assert (spec.n_players, spec.horizon, spec.dim_joint, spec.dim_f, spec.dim_f_all) == (2, 2, 3, 1, 2)


def test_zero_noise_rejected():
    with pytest.raises(DefinitenessError) as exc:
        make_game(**base_args(noise_cov=[[[0.0]], [[1.0]]]))
    assert exc.value.field == "noise_cov[0]"
    assert exc.value.eigenvalue == 0.0


def test_reward_wrong_size_names_field():
    with pytest.raises(DimensionError) as exc:
        make_game(**base_args(reward_mat=[np.eye(2), np.eye(3)]))
    assert exc.value.field == "reward_mat[0]"


def test_psd_prior_allowed_negative_prior_rejected():
    make_game(**base_args(prior_cov=[[0.0]]))
    with pytest.raises(DefinitenessError):
        make_game(**base_args(prior_cov=[[-1.0]]))


def test_small_asymmetry_removed_large_rejected():
    b = np.eye(3)
    b[0, 1] = 1e-11
    spec = make_game(**base_args(reward_mat=[b, np.eye(3)]))
    assert np.array_equal(spec.reward_mat[0], spec.reward_mat[0].T)
    b[0, 1] = 1e-3
    with pytest.raises(GameSpecError, match="not symmetric"):
        make_game(**base_args(reward_mat=[b, np.eye(3)]))


@pytest.mark.parametrize("field,value", [("n_players", 0), ("horizon", 1.5), ("dim_v", True)])
def test_bad_integers(field, value):
    with pytest.raises(DimensionError):
        make_game(**base_args(**{field: value}))


def test_validated_arrays_read_only():
    spec = make_game(**base_args())
    with pytest.raises(ValueError):
        spec.reward_mat[0][0, 0] = 5.0


def test_reward_examples():
    spec = make_game(**base_args())
    assert reward(spec, 0, [1.0], [1.0, 1.0]) == 3.0
    assert reward(spec, 1, [1.0], [0.0, 2.0]) == -5.0
    assert reward(spec, 0, [0.0], [0.0, 0.0]) == 0.0
    with pytest.raises(DimensionError):
        reward(spec, 0, [1.0], [1.0])


def test_batch_reward_matches_scalar():
    spec = random_game(seed=3)
    rng = np.random.default_rng(0)
    v, a = rng.standard_normal((5, 1)), rng.standard_normal((5, 2))
    got = batch_reward(spec, 1, v, a)
    assert np.allclose(got, [reward(spec, 1, v[k], a[k]) for k in range(5)])


def test_reward_blocks_partition():
    spec = make_game(**base_args())
    blocks = reward_blocks(spec, 0)
    assert blocks.vv.tolist() == [[1.0]]
    assert blocks.aa[0][0].tolist() == [[1.0]] and blocks.aa[1][1].tolist() == [[1.0]]
    assert blocks.aa[0][1].tolist() == [[0.0]] and blocks.va[1].tolist() == [[0.0]]
    ones = make_game(**base_args(reward_mat=[np.ones((3, 3)), np.ones((3, 3))]))
    parts = reward_blocks(ones, 1)
    assert all(b.tolist() == [[1.0]] for row in parts.aa for b in row)


@given(st.integers(1, 3), st.integers(1, 2), st.integers(1, 2), st.integers(0, 10_000))
def test_reward_blocks_reassemble_exactly(n, nv, na, seed):
    spec = random_game(n_players=n, dim_v=nv, dim_a=na, seed=seed)
    for i in range(n):
        assert np.array_equal(reward_blocks(spec, i).assemble(), spec.reward_mat[i])


@given(st.integers(2, 4), st.integers(1, 2), st.integers(0, 10_000), st.floats(0.01, 1.0))
def test_random_game_action_block_negative_definite(n, na, seed, coupling):
    spec = random_game(n_players=n, dim_a=na, seed=seed, coupling=coupling)
    for b in spec.reward_mat:
        assert np.linalg.eigvalsh(b[1:, 1:]).max() < 0


def test_random_game_zero_coupling_is_decoupled():
    spec = random_game(n_players=3, dim_a=2, seed=1, coupling=0.0)
    for i, b in enumerate(spec.reward_mat):
        own = np.r_[0, 1 + 2 * i, 2 + 2 * i]
        rest = np.setdiff1d(np.arange(7), own)
        assert not np.any(b[:, rest])


def test_validate_is_idempotent_and_to_dict_round_trips():
    spec = random_game(seed=2)
    again = validate_game(spec)
    d = spec.to_dict()
    rebuilt = make_game(*(d[k] for k in ("n_players", "horizon", "dim_v", "dim_a", "prior_cov",
                                          "noise_cov", "reward_mat")))
    for a, b in zip(again.reward_mat + rebuilt.reward_mat, spec.reward_mat * 2):
        assert np.array_equal(a, b)
    assert isinstance(again, GameSpec)


def test_reward_blocks_type():
    assert isinstance(reward_blocks(random_game(), 0), RewardBlocks)
