"""Game primitives: hidden Gaussian state, private signal noise, quadratic rewards."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYM_TOL = 1e-12
SYMMETRIZE_TOL = 1e-9
PSD_TOL = 1e-10
PD_TOL = 1e-10


class GameSpecError(ValueError):
    """Base class for invalid game primitives."""


class DimensionError(GameSpecError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class DefinitenessError(GameSpecError):
    def __init__(self, field_name: str, eigenvalue: float, message: str):
        super().__init__(f"{field_name}: {message} (eigenvalue {eigenvalue:.6g})")
        self.field = field_name
        self.eigenvalue = eigenvalue


@dataclass(frozen=True)
class GameSpec:
    """Primitives of an N-player LQG game with a static hidden state.

    Signals are ``x^i_t = v + w^i_t`` with ``w^i_t ~ N(0, noise_cov[i])`` and
    ``v ~ N(0, prior_cov)``. Player ``i`` earns ``[v; a]' reward_mat[i] [v; a]``
    per stage, where ``a`` stacks all players' actions in index order.
    """

    n_players: int
    horizon: int
    dim_v: int
    dim_a: int
    prior_cov: np.ndarray
    noise_cov: tuple = field(default_factory=tuple)
    reward_mat: tuple = field(default_factory=tuple)

    @property
    def dim_joint(self) -> int:
        return self.dim_v + self.n_players * self.dim_a

    @property
    def dim_f(self) -> int:
        """Length of one player's public offset vector f^i."""
        return (self.n_players - 1) * self.dim_v

    @property
    def dim_f_all(self) -> int:
        return self.n_players * self.dim_f

    def others(self, i: int) -> list[int]:
        return [j for j in range(self.n_players) if j != i]

    def to_dict(self) -> dict:
        return {
            "n_players": self.n_players,
            "horizon": self.horizon,
            "dim_v": self.dim_v,
            "dim_a": self.dim_a,
            "prior_cov": np.asarray(self.prior_cov).tolist(),
            "noise_cov": [np.asarray(q).tolist() for q in self.noise_cov],
            "reward_mat": [np.asarray(b).tolist() for b in self.reward_mat],
        }


def _as_square(name: str, mat, size: int) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(mat, dtype=float))
    if arr.shape != (size, size):
        raise DimensionError(name, f"expected shape {(size, size)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GameSpecError(f"{name}: non-finite entries")
    return arr


def _symmetrized(name: str, arr: np.ndarray) -> np.ndarray:
    asym = np.max(np.abs(arr - arr.T)) if arr.size else 0.0
    if asym > SYMMETRIZE_TOL:
        raise GameSpecError(f"{name}: not symmetric (max asymmetry {asym:.3g})")
    if asym > 0.0:
        arr = 0.5 * (arr + arr.T)
    return arr


def _check_int(name: str, value) -> int:
    if isinstance(value, bool) or int(value) != value or int(value) < 1:
        raise DimensionError(name, f"must be a positive integer, got {value!r}")
    return int(value)


def validate_game(spec: GameSpec) -> GameSpec:
    """Check dimensions and definiteness; return a spec with exactly symmetric matrices.

    Asymmetry up to ``1e-9`` (max-norm) is treated as round-off and removed.
    Raises :class:`DimensionError` or :class:`DefinitenessError`.
    """
    n = _check_int("n_players", spec.n_players)
    horizon = _check_int("horizon", spec.horizon)
    nv = _check_int("dim_v", spec.dim_v)
    na = _check_int("dim_a", spec.dim_a)

    prior = _symmetrized("prior_cov", _as_square("prior_cov", spec.prior_cov, nv))
    lam = np.linalg.eigvalsh(prior).min()
    if lam < -PSD_TOL:
        raise DefinitenessError("prior_cov", lam, "must be positive semidefinite")

    if len(spec.noise_cov) != n:
        raise DimensionError("noise_cov", f"expected {n} matrices, got {len(spec.noise_cov)}")
    noise = []
    for i, q in enumerate(spec.noise_cov):
        name = f"noise_cov[{i}]"
        q = _symmetrized(name, _as_square(name, q, nv))
        lam = np.linalg.eigvalsh(q).min()
        if lam < PD_TOL:
            raise DefinitenessError(name, lam, "must be positive definite")
        noise.append(q)

    if len(spec.reward_mat) != n:
        raise DimensionError("reward_mat", f"expected {n} matrices, got {len(spec.reward_mat)}")
    size = nv + n * na
    rewards = [
        _symmetrized(f"reward_mat[{i}]", _as_square(f"reward_mat[{i}]", b, size))
        for i, b in enumerate(spec.reward_mat)
    ]
    for arr in [prior, *noise, *rewards]:
        arr.setflags(write=False)
    return GameSpec(n, horizon, nv, na, prior, tuple(noise), tuple(rewards))


def make_game(n_players, horizon, dim_v, dim_a, prior_cov, noise_cov, reward_mat) -> GameSpec:
    """Build and validate a :class:`GameSpec` from array-likes."""
    return validate_game(
        GameSpec(n_players, horizon, dim_v, dim_a, prior_cov, tuple(noise_cov), tuple(reward_mat))
    )


def action_slice(spec: GameSpec, j: int) -> slice:
    """Slice of player j's action inside the stacked action vector."""
    return slice(j * spec.dim_a, (j + 1) * spec.dim_a)


def reward(spec: GameSpec, player: int, v, a) -> float:
    v = np.asarray(v, dtype=float).reshape(-1)
    a = np.asarray(a, dtype=float).reshape(-1)
    if v.shape[0] != spec.dim_v or a.shape[0] != spec.n_players * spec.dim_a:
        raise DimensionError("v/a", f"expected lengths {spec.dim_v} and "
                             f"{spec.n_players * spec.dim_a}, got {v.shape[0]} and {a.shape[0]}")
    z = np.concatenate([v, a])
    return float(z @ spec.reward_mat[player] @ z)


def batch_reward(spec: GameSpec, player: int, v: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Row-wise rewards for ``v`` of shape (n, dim_v) and ``a`` of shape (n, N*dim_a)."""
    z = np.concatenate([v, a], axis=1)
    return np.einsum("pi,ij,pj->p", z, spec.reward_mat[player], z)


@dataclass(frozen=True)
class RewardBlocks:
    vv: np.ndarray
    va: tuple    # va[j] = B_{v, a^j}
    aa: tuple    # aa[j][k] = B_{a^j, a^k}

    def assemble(self) -> np.ndarray:
        rows = [np.hstack([self.vv, *self.va])]
        for j, row in enumerate(self.aa):
            rows.append(np.hstack([self.va[j].T, *row]))
        return np.vstack(rows)


def reward_blocks(spec: GameSpec, player: int) -> RewardBlocks:
    b = np.asarray(spec.reward_mat[player])
    nv = spec.dim_v
    sl = [slice(nv + j * spec.dim_a, nv + (j + 1) * spec.dim_a) for j in range(spec.n_players)]
    return RewardBlocks(
        vv=b[:nv, :nv].copy(),
        va=tuple(b[:nv, s].copy() for s in sl),
        aa=tuple(tuple(b[sj, sk].copy() for sk in sl) for sj in sl),
    )


def random_game(n_players=2, horizon=3, dim_v=1, dim_a=1, seed=0, coupling=0.3,
                prior_scale=1.0, noise_scale=1.0) -> GameSpec:
    """Random game with O(1) own-action blocks and cross-player blocks scaled by ``coupling``.

    The stacked action block is negative definite for ``coupling > 0``;
    ``coupling=0`` zeroes every block touching another player's action.
    """
    rng = np.random.default_rng(seed)
    na_all = n_players * dim_a
    prior = prior_scale * np.eye(dim_v)
    noise = [noise_scale * np.eye(dim_v) for _ in range(n_players)]
    rewards = []
    for i in range(n_players):
        weight = np.full(na_all, coupling)
        weight[i * dim_a:(i + 1) * dim_a] = 1.0
        g = rng.standard_normal((na_all, na_all))
        aa = -weight[:, None] * (np.eye(na_all) + g @ g.T / na_all) * weight[None, :]
        aa[i * dim_a:(i + 1) * dim_a, i * dim_a:(i + 1) * dim_a] -= np.eye(dim_a)
        va = rng.standard_normal((dim_v, na_all)) * weight[None, :]
        vv = rng.standard_normal((dim_v, dim_v))
        vv = 0.5 * (vv + vv.T)
        rewards.append(np.block([[vv, va], [va.T, aa]]))
    return make_game(n_players, horizon, dim_v, dim_a, prior, noise, rewards)
