"""Kalman recursions for private estimates and the public summary (Σ, E, f).

Everything in :class:`PublicRecursion` depends on the strategy gains ``L`` only;
realized signals and actions enter solely through the online updates
:func:`update_private` and :func:`update_public_EF`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .game_model import GameSpec
from .state_evolution import (
    StageModel,
    build_observation_matrix,
    build_stage_model,
    estimate_update_blocks,
    f_index,
    layout,
    noise_cov_stacked,
    others_action_index,
    others_block_diag,
    signal_weight,
)

PINV_RCOND = 1e-10
PSD_FAIL_TOL = 1e-6


class NumericalFailure(ArithmeticError):
    pass


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def pinv_psd(m: np.ndarray) -> np.ndarray:
    """Truncated-SVD pseudo-inverse; singular values below 1e-10 * max are dropped."""
    if m.size == 0:
        return m.T.copy()
    return np.linalg.pinv(m, rcond=PINV_RCOND, hermitian=True)


def predict_cov(sigma: np.ndarray, model: StageModel, noise: np.ndarray) -> np.ndarray:
    """A Σ A' + H D(Q^{-i}, Q^i) H'."""
    a, h = model.a_mat, model.h_mat
    return symmetrize(a @ sigma @ a.T + h @ noise @ h.T)


def gain(sigma_pred: np.ndarray, c_mat: np.ndarray) -> np.ndarray:
    """Σ C' (C Σ C')^+ with the truncated pseudo-inverse."""
    sc = sigma_pred @ c_mat.T
    return sc @ pinv_psd(symmetrize(c_mat @ sc))


def _posterior(sigma_pred: np.ndarray, gain_mat: np.ndarray, c_mat: np.ndarray) -> np.ndarray:
    post = symmetrize((np.eye(sigma_pred.shape[0]) - gain_mat @ c_mat) @ sigma_pred)
    if post.size:
        lam = np.linalg.eigvalsh(post).min()
        scale = max(1.0, float(np.max(np.abs(sigma_pred))))
        if lam < -PSD_FAIL_TOL * scale:
            raise NumericalFailure(f"posterior covariance not PSD (eigenvalue {lam:.3g})")
    return post


def update_cov(sigma: np.ndarray, model: StageModel, gain_next: np.ndarray, c_next: np.ndarray,
               noise: np.ndarray) -> np.ndarray:
    """Σ_{k+1} = (I - J C)(A Σ_k A' + H D(Q) H'), symmetrized."""
    return _posterior(predict_cov(sigma, model, noise), gain_next, c_next)


def prior_stacked_cov(spec: GameSpec, player: int) -> np.ndarray:
    """Unconditional covariance of s^i_1 = [v; 0; 0; x^i_1]."""
    lay = layout(spec, player)
    sigma = np.asarray(spec.prior_cov)
    p = np.zeros((lay.n_state, lay.n_state))
    for r in (lay.v, lay.x):
        for c in (lay.v, lay.x):
            p[r, c] = sigma
    p[lay.x, lay.x] += spec.noise_cov[player]
    return p


@dataclass
class PublicRecursion:
    """Observation-independent filter data for one strategy profile.

    Lists are indexed ``[stage][player]`` (stages from 0). ``belief_pred[t][i]`` is
    the covariance of ``s^i_{t+1}`` given player i's stage-t history; its
    ``(v, v̂^{-i})`` block is the conditional covariance of ``(V, v̂^{-i}_t)``.
    ``f_lin[t]``/``f_act[t]`` (t >= 1) give
    ``f_t = f_lin[t] f_{t-1} + f_act[t] (a_{t-1} - m_{t-1})`` for the stacked offsets.
    """

    spec: GameSpec
    L: np.ndarray
    sigma_pred: list = field(default_factory=list)
    sigma: list = field(default_factory=list)
    gain: list = field(default_factory=list)
    c_mat: list = field(default_factory=list)
    model: list = field(default_factory=list)
    belief_pred: list = field(default_factory=list)
    cross_coeff: list = field(default_factory=list)
    tilde_sigma_pred: list = field(default_factory=list)
    tilde_sigma: list = field(default_factory=list)
    tilde_gain: list = field(default_factory=list)
    est_blocks: list = field(default_factory=list)
    f_lin: list = field(default_factory=list)
    f_act: list = field(default_factory=list)

    @property
    def n_stages(self) -> int:
        return len(self.sigma)

    def belief_cov(self, t: int, i: int) -> np.ndarray:
        """Cov([V; v̂^{-i}_t] | h^i_t)."""
        lay = layout(self.spec, i)
        idx = np.r_[np.arange(lay.v.start, lay.v.stop), np.arange(lay.vh_others.start, lay.vh_others.stop)]
        return self.belief_pred[t][i][np.ix_(idx, idx)]

    def stacked_E(self, t: int) -> np.ndarray:
        return np.stack(self.cross_coeff[t])


def _tilde_index(spec: GameSpec, i: int) -> np.ndarray:
    lay = layout(spec, i)
    return np.r_[np.arange(lay.v.start, lay.v.stop), np.arange(lay.vh_others.start, lay.vh_others.stop)]


def tilde_matrices(spec: GameSpec, model: StageModel):
    """(Ã, H̃, d̃-coefficients) of the model conditioned on V."""
    lay = model.lay
    idx = _tilde_index(spec, lay.player)
    w_idx = np.arange(0, (spec.n_players - 1) * spec.dim_v)
    return (model.a_mat[np.ix_(idx, idx)], model.h_mat[np.ix_(idx, w_idx)], model.d_coeff[idx])


def tilde_observation(spec: GameSpec, i: int, L_prev: np.ndarray) -> np.ndarray:
    """C̃ = D(I, D(L^{-i}_{k-1})): observes v and the others' action innovations."""
    return block_diag(np.eye(spec.dim_v), others_block_diag(spec, L_prev, i))


def _stage_filters(spec: GameSpec, rec: PublicRecursion, t: int, L: np.ndarray) -> None:
    n, nv = spec.n_players, spec.dim_v
    L_prev = L[t - 1] if t > 0 else None
    L_prev_tilde = L[t - 1] if t > 0 else np.zeros_like(L[0])
    preds, sigmas, gains, cs = [], [], [], []
    for i in range(n):
        pred = prior_stacked_cov(spec, i) if t == 0 else rec.belief_pred[t - 1][i]
        c = build_observation_matrix(spec, i, L_prev)
        g = gain(pred, c)
        preds.append(pred)
        gains.append(g)
        cs.append(c)
        sigmas.append(_posterior(pred, g, c))
    rec.sigma_pred.append(preds)
    rec.sigma.append(sigmas)
    rec.gain.append(gains)
    rec.c_mat.append(cs)

    E_prev = rec.cross_coeff[t - 1] if t > 0 else [np.zeros((spec.dim_f, nv))] * n
    models = [build_stage_model(spec, i, t, L_prev, gains, E_prev) for i in range(n)]
    rec.model.append(models)
    rec.belief_pred.append([predict_cov(sigmas[i], models[i], noise_cov_stacked(spec, i)) for i in range(n)])
    if t > 0:
        rec.est_blocks.append([estimate_update_blocks(spec, j, gains[j], L_prev, E_prev[j]) for j in range(n)])
    else:
        rec.est_blocks.append([(np.zeros((nv, nv)), signal_weight(spec, j), None, None) for j in range(n)])

    n_act = n * spec.dim_a
    tp, ts, tg, es = [], [], [], []
    f_lin = np.zeros((spec.dim_f_all, spec.dim_f_all))
    f_act = np.zeros((spec.dim_f_all, n_act))
    for i in range(n):
        q_others = block_diag(*[spec.noise_cov[j] for j in spec.others(i)]) if n > 1 else np.zeros((0, 0))
        if t == 0:
            pred = block_diag(np.asarray(spec.prior_cov), np.zeros((spec.dim_f, spec.dim_f)))
        else:
            a_prev, h_prev, _ = tilde_matrices(spec, rec.model[t - 1][i])
            pred = symmetrize(a_prev @ rec.tilde_sigma[t - 1][i] @ a_prev.T + h_prev @ q_others @ h_prev.T)
        c = tilde_observation(spec, i, L_prev_tilde)
        g = gain(pred, c)
        tp.append(pred)
        tg.append(g)
        ts.append(_posterior(pred, g, c))
        a_til, _, d_til = tilde_matrices(spec, models[i])
        u = np.eye(pred.shape[0]) - g @ c
        # predicted mean of [v; v̂^{-i}_{t-1}] before stage t is [v; E_{t-1} v + f_{t-1}]
        prior_coef = np.vstack([np.eye(nv), E_prev[i]])
        v_coef = a_til @ (u @ prior_coef + g[:, :nv])
        es.append(v_coef[nv:])
        if t > 0:
            rows = f_index(spec, i)
            au, ag = a_til @ u, a_til @ g
            f_lin[rows, rows] += au[nv:, nv:]
            f_act[rows.start:rows.stop, others_action_index(spec, i)] += ag[nv:, nv:]
            f_act[rows] += d_til[nv:, :n_act]
            f_lin[rows] += d_til[nv:, n_act:]
    rec.tilde_sigma_pred.append(tp)
    rec.tilde_sigma.append(ts)
    rec.tilde_gain.append(tg)
    rec.cross_coeff.append(es)
    rec.f_lin.append(f_lin)
    rec.f_act.append(f_act)


def init_filters(spec: GameSpec) -> PublicRecursion:
    """Stage-1 public data: Σ^i_1, J^i_1, E^i_1 = Σ(Σ+Q^{-i})^{-1}, Σ̃^i_1 = 0."""
    L = np.zeros((spec.horizon, spec.n_players, spec.dim_a, spec.dim_v))
    rec = PublicRecursion(spec, L)
    _stage_filters(spec, rec, 0, L)
    return rec


def build_public_recursion(spec: GameSpec, L: np.ndarray) -> PublicRecursion:
    """Run the forward covariance / cross-coefficient recursions for gains ``L`` (T, N, na, nv)."""
    L = np.asarray(L, dtype=float)
    rec = PublicRecursion(spec, L.copy())
    for t in range(spec.horizon):
        _stage_filters(spec, rec, t, L)
    return rec


# ---------------------------------------------------------------- online updates

def init_private(rec: PublicRecursion, i: int, x1: np.ndarray) -> np.ndarray:
    """v̂^i_1 = Σ(Σ+Q^i)^{-1} x^i_1 (rows of ``x1`` are paths)."""
    return np.asarray(x1) @ rec.est_blocks[0][i][1].T


def init_public(spec: GameSpec, n_paths: int | None = None) -> np.ndarray:
    """f_1 = 0 for every player (stacked)."""
    shape = (spec.dim_f_all,) if n_paths is None else (n_paths, spec.dim_f_all)
    return np.zeros(shape)


def update_private(rec: PublicRecursion, t: int, i: int, v_hat_prev, f_prev, x_t, act_innov) -> np.ndarray:
    """v̂^i_t from v̂^i_{t-1}, stacked f_{t-1}, x^i_t, and a_{t-1} - m_{t-1} (stacked over players).

    The own-action innovation is taken as zero: a player's own action carries no
    information for herself.
    """
    spec = rec.spec
    p, kx, ka, ka_d = rec.est_blocks[t][i]
    f_i = np.asarray(f_prev)[..., f_index(spec, i)]
    innov_others = np.asarray(act_innov)[..., others_action_index(spec, i)]
    return (np.asarray(v_hat_prev) @ p.T + np.asarray(x_t) @ kx.T
            + innov_others @ ka.T - f_i @ ka_d.T)


def update_public_EF(rec: PublicRecursion, t: int, f_prev, act_innov):
    """Return (E_t per player, stacked f_t) from f_{t-1} and a_{t-1} - m_{t-1}."""
    f_t = np.asarray(f_prev) @ rec.f_lin[t].T + np.asarray(act_innov) @ rec.f_act[t].T
    return rec.cross_coeff[t], f_t


def cross_estimate(v_hat, E: np.ndarray, f) -> np.ndarray:
    """ṽ^{i,-i} = E v̂^i + f^i."""
    return np.asarray(v_hat) @ np.asarray(E).T + np.asarray(f)


def stacked_filter_means(rec: PublicRecursion, i: int, x_i: np.ndarray, act_innov: np.ndarray,
                         f_hist: np.ndarray) -> np.ndarray:
    """Full Kalman mean of s^i_t given h^i_t, by the generic stacked recursion.

    ``x_i`` (n, T, nv), ``act_innov`` (n, T, N*na) with row t = a_t - m_t,
    ``f_hist`` (n, T, F). Returns (n, T, n_state).
    """
    spec = rec.spec
    lay = layout(spec, i)
    n_paths = x_i.shape[0]
    out = np.zeros((n_paths, spec.horizon, lay.n_state))
    n_act = spec.n_players * spec.dim_a
    mean = np.zeros((n_paths, lay.n_state))
    for t in range(spec.horizon):
        if t == 0:
            pred = mean
            y = np.zeros((n_paths, lay.n_obs))
        else:
            model = rec.model[t - 1][i]
            drive = np.concatenate([act_innov[:, t - 2] if t >= 2 else np.zeros((n_paths, n_act)),
                                    f_hist[:, t - 2] if t >= 2 else np.zeros((n_paths, spec.dim_f_all))], axis=1)
            pred = mean @ model.a_mat.T + drive @ model.d_coeff.T
            y = np.zeros((n_paths, lay.n_obs))
            y[:, lay.y_own] = act_innov[:, t - 1, i * spec.dim_a:(i + 1) * spec.dim_a]
            y[:, lay.y_others] = act_innov[:, t - 1][:, others_action_index(spec, i)]
        y[:, lay.y_x] = x_i[:, t]
        c = rec.c_mat[t][i]
        mean = pred + (y - pred @ c.T) @ rec.gain[t][i].T
        out[:, t] = mean
    return out
