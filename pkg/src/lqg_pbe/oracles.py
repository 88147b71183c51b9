"""Reference computations that share no code with the filters or the solver.

They only read the game primitives and profile coefficients.
"""
from __future__ import annotations

import numpy as np

from .game_model import GameSpec
from .strategy import StrategyProfile

MAX_GAUSSIAN_DIM = 200


class OracleError(ValueError):
    pass


def _primitive_prior(spec: GameSpec, n_stages: int):
    """Covariance of ξ = [V; W^1_1..W^N_1; ...; W^1_s..W^N_s] and index helpers."""
    nv, n = spec.dim_v, spec.n_players
    dim = nv * (1 + n * n_stages)
    if dim > MAX_GAUSSIAN_DIM:
        raise OracleError(f"joint Gaussian dimension {dim} exceeds guard {MAX_GAUSSIAN_DIM}")
    cov = np.zeros((dim, dim))
    cov[:nv, :nv] = spec.prior_cov

    def w_cols(s: int, j: int) -> slice:
        start = nv * (1 + s * n + j)
        return slice(start, start + nv)

    for s in range(n_stages):
        for j in range(n):
            cov[w_cols(s, j), w_cols(s, j)] = spec.noise_cov[j]
    return cov, w_cols


def _condition(cov: np.ndarray, obs: np.ndarray, values: np.ndarray) -> np.ndarray:
    """E[ξ | obs ξ = values] for zero-mean ξ ~ N(0, cov)."""
    if obs.shape[0] == 0:
        return np.zeros((cov.shape[0],) + values.shape[1:])
    s = obs @ cov @ obs.T
    return cov @ obs.T @ np.linalg.pinv(s, rcond=1e-10, hermitian=True) @ values


def _estimate_maps(spec: GameSpec, L: np.ndarray, act_innov: np.ndarray, n_stages: int):
    """Each player's estimate v̂^j_s = alpha[s][j] ξ + beta[s][j] for s < n_stages.

    ``act_innov[s, j]`` is the realized a^j_s - m^j_s. Player j conditions on their
    signals and on every other player's revealed L^k_r v̂^k_r.
    """
    nv, n = spec.dim_v, spec.n_players
    cov, w_cols = _primitive_prior(spec, n_stages)
    dim = cov.shape[0]
    alpha = [[None] * n for _ in range(n_stages)]
    beta = [[None] * n for _ in range(n_stages)]
    for s in range(n_stages):
        for j in range(n):
            sig_rows = []
            for r in range(s + 1):
                row = np.zeros((nv, dim))
                row[:, :nv] = np.eye(nv)
                row[:, w_cols(r, j)] = np.eye(nv)
                sig_rows.append(row)
            act_rows, act_vals = [], []
            for r in range(s):
                for k in range(n):
                    if k == j:
                        continue
                    act_rows.append(L[r, k] @ alpha[r][k])
                    act_vals.append(act_innov[r, k] - L[r, k] @ beta[r][k])
            obs_x = np.vstack(sig_rows)
            obs = np.vstack([obs_x, *act_rows]) if act_rows else obs_x
            nx = obs_x.shape[0]
            # E[V | ...] is linear in the observation values; split symbolic / numeric parts
            gain = _condition(cov, obs, np.eye(obs.shape[0]))[:nv]
            alpha[s][j] = gain[:, :nx] @ obs_x
            beta[s][j] = gain[:, nx:] @ np.concatenate(act_vals) if act_vals else np.zeros(nv)
    return alpha, beta, cov, w_cols


def conditioning_oracle(spec: GameSpec, profile: StrategyProfile, stage: int, player: int,
                        x_i: np.ndarray, act_innov: np.ndarray):
    """Exact E[V | h^i_t] and E[v̂^j_t | h^i_t] by direct joint-Gaussian conditioning.

    ``stage`` counts observed stages (1-based t; 0 means no information).
    ``x_i`` (>= t, nv) are player i's signals, ``act_innov`` (>= t-1, N, na) the
    realized ``a - m`` per stage. Returns ``(v_mean, others)`` with ``others``
    of shape (N-1, nv) in ascending player order (empty when t = 0).
    """
    nv, n = spec.dim_v, spec.n_players
    if stage == 0:
        return np.zeros(nv), np.zeros((n - 1, nv))
    L = np.asarray(profile.L)
    act_innov = np.asarray(act_innov, dtype=float).reshape(-1, n, spec.dim_a)
    alpha, beta, cov, w_cols = _estimate_maps(spec, L, act_innov, stage)
    dim = cov.shape[0]
    rows, vals = [], []
    for r in range(stage):
        row = np.zeros((nv, dim))
        row[:, :nv] = np.eye(nv)
        row[:, w_cols(r, player)] = np.eye(nv)
        rows.append(row)
        vals.append(np.asarray(x_i[r], dtype=float))
    for r in range(stage - 1):
        for k in range(n):
            if k != player:
                rows.append(L[r, k] @ alpha[r][k])
                vals.append(act_innov[r, k] - L[r, k] @ beta[r][k])
    xi_mean = _condition(cov, np.vstack(rows), np.concatenate(vals))
    v_mean = xi_mean[:nv]
    t = stage - 1
    others = np.array([alpha[t][j] @ xi_mean + beta[t][j] for j in range(n) if j != player])
    return v_mean, others.reshape(n - 1, nv)


def _signal_weight(spec: GameSpec, k: int) -> np.ndarray:
    sigma = np.asarray(spec.prior_cov)
    return sigma @ np.linalg.inv(sigma + np.asarray(spec.noise_cov[k]))


def one_stage_oracle(spec: GameSpec) -> StrategyProfile:
    """Closed-form equilibrium of the static game (T = 1).

    First-order conditions: ``B_{ia} v̂^i + Σ_k B_{ik} E[a^k | v̂^i] = 0`` with
    ``E[v̂^k | v̂^i] = Σ(Σ+Q^k)^{-1} v̂^i + f^i_k``.
    """
    if spec.horizon != 1:
        raise OracleError("one_stage_oracle needs horizon 1")
    n, nv, na = spec.n_players, spec.dim_v, spec.dim_a
    nf = spec.dim_f_all

    def blk(i, j):
        b = np.asarray(spec.reward_mat[i])
        return b[nv + i * na:nv + (i + 1) * na, nv + j * na:nv + (j + 1) * na]

    def b_av(i):
        b = np.asarray(spec.reward_mat[i])
        return b[nv + i * na:nv + (i + 1) * na, :nv]

    def selector(i, k):
        # rows of stacked f holding player i's offset about player k
        s = np.zeros((nv, nf))
        pos = [j for j in range(n) if j != i].index(k)
        s[:, i * (n - 1) * nv + pos * nv:i * (n - 1) * nv + (pos + 1) * nv] = np.eye(nv)
        return s

    def vec_system(rhs_of, right_of):
        """Solve Σ_k B^i_{ik} X^k R^i_k = rhs_i for X^k (na x p), column-major vec."""
        p = right_of(0, 0).shape[1]
        size = na * p
        big = np.zeros((n * size, n * size))
        rhs = np.zeros(n * size)
        for i in range(n):
            rhs[i * size:(i + 1) * size] = rhs_of(i).ravel(order="F")
            for k in range(n):
                big[i * size:(i + 1) * size, k * size:(k + 1) * size] = np.kron(right_of(i, k).T, blk(i, k))
        try:
            sol = np.linalg.solve(big, rhs)
        except np.linalg.LinAlgError as exc:
            raise OracleError("singular one-stage system") from exc
        return [sol[k * size:(k + 1) * size].reshape((na, p), order="F") for k in range(n)]

    L = vec_system(lambda i: -b_av(i),
                   lambda i, k: np.eye(nv) if i == k else _signal_weight(spec, k))
    M = vec_system(lambda i: -sum(blk(i, k) @ L[k] @ selector(i, k) for k in range(n) if k != i)
                   if n > 1 else np.zeros((na, nf)),
                   lambda i, k: np.eye(nf))
    c = vec_system(lambda i: np.zeros((na, 1)), lambda i, k: np.eye(1))
    return StrategyProfile(np.array(L)[None], np.array(M)[None], np.array(c)[None, :, :, 0])


def single_agent_lqg_oracle(spec: GameSpec):
    """Backward induction for games where each player's reward ignores the others' actions.

    With a static hidden state the estimate is a martingale that no own action
    can steer, so the value is ``v̂' P_t v̂ + const`` with
    ``P_t = B_vv - B_va B_aa^{-1} B_av + P_{t+1}`` and ``L_t = -B_aa^{-1} B_av``.
    Returns ``(profile, P)`` with P of shape (T, N, nv, nv).
    """
    n, nv, na, horizon = spec.n_players, spec.dim_v, spec.dim_a, spec.horizon
    L = np.zeros((horizon, n, na, nv))
    P = np.zeros((horizon, n, nv, nv))
    for i in range(n):
        b = np.asarray(spec.reward_mat[i])
        own = np.r_[np.arange(nv), nv + i * na + np.arange(na)]
        rest = np.setdiff1d(np.arange(b.shape[0]), own)
        if rest.size and np.any(b[:, rest] != 0):
            raise OracleError(f"reward_mat[{i}] couples player {i} to other players' actions")
        b_vv, b_va, b_aa = b[:nv, :nv], b[:nv, own[nv:]], b[np.ix_(own[nv:], own[nv:])]
        p_next = np.zeros((nv, nv))
        for t in reversed(range(horizon)):
            L[t, i] = -np.linalg.solve(b_aa, b_va.T)
            p_next = b_vv - b_va @ np.linalg.solve(b_aa, b_va.T) + p_next
            P[t, i] = p_next
    zeros = StrategyProfile.zeros(spec)
    return zeros.replace(L=L), P
