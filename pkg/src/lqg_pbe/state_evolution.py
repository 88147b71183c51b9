"""Per-player stacked linear Gaussian model.

For player ``i`` the state at stage ``t`` is ``s = [v; v̂^i_{t-1}; v̂^{-i}_{t-1}; x^i_t]``
(others in ascending index order) and it evolves as

    s_{t+1} = A s_t + H [w^{-i}_t; w^i_{t+1}] + d_t,

where ``d_t = d_coeff @ [a_{t-1} - m_{t-1}; f_{t-1}]`` is driven by public data.
The observation at stage ``t`` is ``y = C s = [a^i - m^i; a^{-i} - m^{-i}; x^i]``
(previous-stage actions).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .game_model import GameSpec


@dataclass(frozen=True)
class Layout:
    """Index bookkeeping for one player's stacked state, noise, and observation."""

    n_players: int
    dim_v: int
    dim_a: int
    player: int

    @property
    def others(self) -> list[int]:
        return [j for j in range(self.n_players) if j != self.player]

    @property
    def n_state(self) -> int:
        return (self.n_players + 2) * self.dim_v

    @property
    def n_noise(self) -> int:
        return self.n_players * self.dim_v

    @property
    def n_obs(self) -> int:
        return self.n_players * self.dim_a + self.dim_v

    # state blocks
    @property
    def v(self) -> slice:
        return slice(0, self.dim_v)

    @property
    def vh_self(self) -> slice:
        return slice(self.dim_v, 2 * self.dim_v)

    @property
    def vh_others(self) -> slice:
        return slice(2 * self.dim_v, (self.n_players + 1) * self.dim_v)

    def vh_other(self, j: int) -> slice:
        k = self.others.index(j)
        start = (2 + k) * self.dim_v
        return slice(start, start + self.dim_v)

    @property
    def x(self) -> slice:
        return slice((self.n_players + 1) * self.dim_v, (self.n_players + 2) * self.dim_v)

    # noise blocks: [w^{-i}_t; w^i_{t+1}]
    def w_other(self, j: int) -> slice:
        k = self.others.index(j)
        return slice(k * self.dim_v, (k + 1) * self.dim_v)

    @property
    def w_self(self) -> slice:
        return slice((self.n_players - 1) * self.dim_v, self.n_players * self.dim_v)

    # observation blocks
    @property
    def y_own(self) -> slice:
        return slice(0, self.dim_a)

    @property
    def y_others(self) -> slice:
        return slice(self.dim_a, self.n_players * self.dim_a)

    @property
    def y_x(self) -> slice:
        return slice(self.n_players * self.dim_a, self.n_obs)


def layout(spec: GameSpec, player: int) -> Layout:
    return Layout(spec.n_players, spec.dim_v, spec.dim_a, player)


def others_action_index(spec: GameSpec, i: int) -> np.ndarray:
    """Indices of a^{-i} inside the stacked action vector."""
    na = spec.dim_a
    return np.array([k for j in spec.others(i) for k in range(j * na, (j + 1) * na)], dtype=int)


def f_index(spec: GameSpec, i: int) -> slice:
    """Slice of f^i inside the stacked public offsets."""
    return slice(i * spec.dim_f, (i + 1) * spec.dim_f)


def f_sub_index(spec: GameSpec, i: int, j: int) -> slice:
    """Slice of the j-block of f^i (player i's offset about player j) in stacked f."""
    k = spec.others(i).index(j)
    start = i * spec.dim_f + k * spec.dim_v
    return slice(start, start + spec.dim_v)


def others_block_diag(spec: GameSpec, L_stage: np.ndarray, i: int) -> np.ndarray:
    """Block-diagonal D(L^{-i}) of shape ((N-1)dim_a, (N-1)dim_v)."""
    others = spec.others(i)
    if not others:
        return np.zeros((0, 0))
    return block_diag(*[L_stage[j] for j in others])


@dataclass(frozen=True)
class StageModel:
    player: int
    stage: int
    a_mat: np.ndarray
    h_mat: np.ndarray
    c_mat: np.ndarray
    d_coeff: np.ndarray
    lay: Layout

    @property
    def g_self(self) -> np.ndarray:
        return self.a_mat[self.lay.vh_self]

    @property
    def g_others(self) -> np.ndarray:
        return self.a_mat[self.lay.vh_others]


def gain_blocks(spec: GameSpec, gain: np.ndarray, j: int):
    """Rows of player j's gain for v̂^j: (coefficient on a^{-j} innovation, on x^j innovation)."""
    lay = layout(spec, j)
    rows = gain[lay.v]
    return rows[:, lay.y_others], rows[:, lay.y_x]


def build_observation_matrix(spec: GameSpec, player: int, L_prev: np.ndarray | None) -> np.ndarray:
    """Observation matrix for stage k given the previous-stage gains L_{k-1} of all players.

    ``L_prev=None`` means there is no previous stage (no action rows carry information).
    """
    lay = layout(spec, player)
    c = np.zeros((lay.n_obs, lay.n_state))
    if L_prev is not None:
        c[lay.y_own, lay.vh_self] = L_prev[player]
        c[lay.y_others, lay.vh_others] = others_block_diag(spec, L_prev, player)
    c[lay.y_x, lay.x] = np.eye(spec.dim_v)
    return c


def signal_weight(spec: GameSpec, j: int) -> np.ndarray:
    """Σ (Σ + Q^j)^{-1}: the first-stage weight of x^j_1 in v̂^j_1."""
    sigma = np.asarray(spec.prior_cov)
    # Σ(Σ+Q)^{-1} = ((Σ+Q)^{-1} Σ)' for symmetric inputs
    return np.linalg.solve(sigma + spec.noise_cov[j], sigma).T


def init_stage_model(spec: GameSpec, player: int) -> StageModel:
    """Stage-1 model: v̂^j_1 = Σ(Σ+Q^j)^{-1}(v + w^j_1), no action drive."""
    lay = layout(spec, player)
    nv = spec.dim_v
    a = np.zeros((lay.n_state, lay.n_state))
    h = np.zeros((lay.n_state, lay.n_noise))
    a[lay.v, lay.v] = np.eye(nv)
    a[lay.x, lay.v] = np.eye(nv)
    a[lay.vh_self, lay.x] = signal_weight(spec, player)
    for j in lay.others:
        k = signal_weight(spec, j)
        a[lay.vh_other(j), lay.v] = k
        h[lay.vh_other(j), lay.w_other(j)] = k
    h[lay.x, lay.w_self] = np.eye(nv)
    d = np.zeros((lay.n_state, spec.n_players * spec.dim_a + spec.dim_f_all))
    return StageModel(player, 0, a, h, build_observation_matrix(spec, player, None), d, lay)


def estimate_update_blocks(spec: GameSpec, j: int, gain_j: np.ndarray, L_prev: np.ndarray,
                           E_prev_j: np.ndarray):
    """Coefficients of v̂^j_k = P v̂^j_{k-1} + Kx x^j_k + Ka (a-m)^{-j} - Ka D(L^{-j}) f^j.

    Returns ``(P, Kx, Ka, Ka_D)`` with ``Ka_D = Ka D(L^{-j}_{k-1})``.
    """
    ka, kx = gain_blocks(spec, gain_j, j)
    ka_d = ka @ others_block_diag(spec, L_prev, j)
    p = np.eye(spec.dim_v) - kx - ka_d @ E_prev_j
    return p, kx, ka, ka_d


def build_stage_model(spec: GameSpec, player: int, stage: int, L_prev: np.ndarray | None,
                      gains, E_prev) -> StageModel:
    """Stage-k model from the stage-k gains of all players and E_{k-1}.

    ``gains[j]`` is player j's stage-k Kalman gain; ``E_prev[j]`` is E^j_{k-1}
    of shape ((N-1)dim_v, dim_v); ``L_prev`` is (N, dim_a, dim_v) for stage k-1.
    """
    if stage == 0:
        return init_stage_model(spec, player)
    if gains is None or len(gains) != spec.n_players:
        raise ValueError(f"missing gains for stage {stage}")
    lay = layout(spec, player)
    nv, na = spec.dim_v, spec.dim_a
    n_act = spec.n_players * na
    a = np.zeros((lay.n_state, lay.n_state))
    h = np.zeros((lay.n_state, lay.n_noise))
    d = np.zeros((lay.n_state, n_act + spec.dim_f_all))
    a[lay.v, lay.v] = np.eye(nv)
    a[lay.x, lay.v] = np.eye(nv)
    h[lay.x, lay.w_self] = np.eye(nv)

    def drive(rows: slice, j: int, ka: np.ndarray, ka_d: np.ndarray):
        d[rows, others_action_index(spec, j)] = ka
        d[rows, n_act + f_index(spec, j).start:n_act + f_index(spec, j).stop] = -ka_d

    p, kx, ka, ka_d = estimate_update_blocks(spec, player, gains[player], L_prev, E_prev[player])
    a[lay.vh_self, lay.vh_self] = p
    a[lay.vh_self, lay.x] = kx
    drive(lay.vh_self, player, ka, ka_d)
    for j in lay.others:
        p, kx, ka, ka_d = estimate_update_blocks(spec, j, gains[j], L_prev, E_prev[j])
        rows = lay.vh_other(j)
        # x^j_k is not in s^i_k: substitute v + w^j_k
        a[rows, lay.v] = kx
        a[rows, rows] = p
        h[rows, lay.w_other(j)] = kx
        drive(rows, j, ka, ka_d)
    return StageModel(player, stage, a, h, build_observation_matrix(spec, player, L_prev), d, lay)


def noise_cov_stacked(spec: GameSpec, player: int) -> np.ndarray:
    """D(Q^{-i}, Q^i): covariance of [w^{-i}_t; w^i_{t+1}]."""
    return block_diag(*[spec.noise_cov[j] for j in spec.others(player)], spec.noise_cov[player])
