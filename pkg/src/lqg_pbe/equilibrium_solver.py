"""Backward programming over quadratic values and the outer fixed point on profiles.

Inside one outer iteration the public recursion (Σ, E, gains, offset maps) is
fixed by the current profile's ``L``. Each player's reward-to-go is then an exact
quadratic in ``z = [v̂^i_t; f_t; 1]`` and the stage game is solved by stacking
all players' first-order conditions into one linear system.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .belief_filters import PublicRecursion, build_public_recursion, symmetrize
from .game_model import GameSpec, validate_game
from .state_evolution import f_index, f_sub_index, others_action_index
from .strategy import StrategyProfile

logger = logging.getLogger(__name__)

HESSIAN_TOL = 1e-10
CONSISTENCY_TOL = 1e-8


class IllPosedStageGame(ArithmeticError):
    def __init__(self, player: int, stage: int, eigenvalue: float):
        super().__init__(f"ill-posed stage game: player {player}, stage {stage + 1}, "
                         f"Hessian eigenvalue {eigenvalue:.6g} is not negative")
        self.player, self.stage, self.eigenvalue = player, stage, eigenvalue


class StageSingularError(ArithmeticError):
    def __init__(self, stage: int, residual: float):
        super().__init__(f"stage fixed point singular at stage {stage + 1} (residual {residual:.3g})")
        self.stage, self.residual = stage, residual


@dataclass(frozen=True)
class SolverOptions:
    damping: float = 0.5
    tol: float = 1e-9
    max_outer_iters: int = 500
    init_profile: StrategyProfile | None = None

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")


@dataclass(frozen=True)
class QuadraticValues:
    """Reward-to-go ``z' mats[t, i] z`` with ``z = [v̂^i_t; f_t; 1]``."""

    mats: np.ndarray  # (T, N, nz, nz)

    def evaluate(self, t: int, i: int, v_hat, f) -> np.ndarray:
        v_hat = np.atleast_2d(v_hat)
        f = np.atleast_2d(f)
        z = np.concatenate([v_hat, f, np.ones((v_hat.shape[0], 1))], axis=1)
        return np.einsum("pa,ab,pb->p", z, self.mats[t, i], z)


def _dims(spec: GameSpec):
    nz = spec.dim_v + spec.dim_f_all + 1
    return nz


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(symmetrize(m))
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def _stage_objective(spec: GameSpec, rec: PublicRecursion, profile: StrategyProfile, t: int, i: int,
                     theta: np.ndarray, w_next: np.ndarray | None):
    """Expected stage reward plus continuation as a quadratic in ``[z; a^i]``.

    ``theta[j]`` (na x nz) is the realized action rule of player j != i at stage t;
    filters and the public offsets ``m_t`` use ``profile`` (what others believe).
    Returns ``(omega, const)``: objective = y' omega y + const, y = [z; a^i].
    """
    return _objective_builder(spec, rec, profile, t, i, w_next)(theta)


def _objective_builder(spec: GameSpec, rec: PublicRecursion, profile: StrategyProfile, t: int, i: int,
                       w_next: np.ndarray | None):
    """Precompute the rule-independent parts of :func:`_stage_objective`; returns ``theta -> (omega, const)``."""
    nv, na, n, nf = spec.dim_v, spec.dim_a, spec.n_players, spec.dim_f_all
    nz = nv + nf + 1
    others = spec.others(i)
    cont = w_next is not None
    n_u = n * nv
    n_xi = n_u + (nv if cont else 0)
    dy = nz + na + n_xi
    eye = np.eye(dy)
    z_vh, z_f, z_1 = eye[:nv], eye[nv:nv + nf], eye[nz - 1:nz]
    a_i = eye[nz:nz + na]
    xi_u = eye[nz + na:nz + na + n_u]

    # conditional law of u = [V; v̂^{-i}_t] given h^i_t
    E = rec.cross_coeff[t][i]
    root = _sqrt_psd(rec.belief_cov(t, i))
    u = np.zeros((n_u, dy))
    u[:nv] = z_vh
    for k, j in enumerate(others):
        rows = slice(nv * (1 + k), nv * (2 + k))
        u[rows] = E[k * nv:(k + 1) * nv] @ z_vh + z_f[f_sub_index(spec, i, j)]
    u += root @ xi_u
    y_v = u[:nv]

    reward_mat = spec.reward_mat[i]
    det = nz + na
    if cont:
        p, kx, ka, ka_d = rec.est_blocks[t + 1][i]
        y_w = _sqrt_psd(spec.noise_cov[i]) @ eye[nz + na + n_u:]
        m_pres = np.vstack([profile.M[t, j] @ z_f + profile.c[t, j][:, None] @ z_1 for j in range(n)])
        vh_fixed = p @ z_vh + kx @ (y_v + y_w) - ka_d @ z_f[f_index(spec, i)]
        f_fixed = rec.f_lin[t + 1] @ z_f
        act_rows = others_action_index(spec, i)

    def objective(theta):
        acts = np.zeros((n * na, dy))
        acts[i * na:(i + 1) * na] = a_i
        for k, j in enumerate(others):
            th = theta[j]
            acts[j * na:(j + 1) * na] = (th[:, :nv] @ u[nv * (1 + k):nv * (2 + k)]
                                         + th[:, nv:nv + nf] @ z_f + th[:, nz - 1:nz] @ z_1)
        x = np.vstack([y_v, acts])
        omega = x.T @ reward_mat @ x
        if cont:
            innov = acts - m_pres
            vh_next = vh_fixed + ka @ innov[act_rows]
            f_next = f_fixed + rec.f_act[t + 1] @ innov
            z_next = np.vstack([vh_next, f_next, z_1])
            omega = omega + z_next.T @ w_next @ z_next
        return symmetrize(omega[:det, :det]), float(np.trace(omega[det:, det:]))

    return objective


def _value_from(omega: np.ndarray, const: float, th_i: np.ndarray, nz: int) -> np.ndarray:
    lift = np.vstack([np.eye(nz), th_i])
    val = lift.T @ omega @ lift
    val[nz - 1, nz - 1] += const
    return symmetrize(val)


def _check_hessian(omega: np.ndarray, nz: int, i: int, t: int) -> bool:
    """Raise on a non-concave stage objective; return True when it is degenerate (flat)."""
    hess = omega[nz:, nz:]
    lam = np.linalg.eigvalsh(hess)
    scale = max(1.0, float(np.max(np.abs(omega))))
    if lam.max() > HESSIAN_TOL * scale:
        raise IllPosedStageGame(i, t, float(lam.max()))
    return bool(lam.max() >= -HESSIAN_TOL * scale)


def stage_expected_reward(spec: GameSpec, rec: PublicRecursion, profile: StrategyProfile,
                          t: int, i: int) -> np.ndarray:
    """E[R^i(V, A_t) | v̂^i_t, f_t] when everyone follows ``profile`` at stage t.

    Returned as a symmetric matrix over ``[v̂^i; f; 1]``; the constant (trace)
    term sits in the bottom-right entry.
    """
    theta = [profile.stage_matrix(t, j) for j in range(spec.n_players)]
    omega, const = _stage_objective(spec, rec, profile, t, i, theta, None)
    return _value_from(omega, const, theta[i], _dims(spec))


def stage_best_response(spec: GameSpec, rec: PublicRecursion, profile: StrategyProfile, t: int, i: int,
                        w_next: np.ndarray | None, theta_others=None):
    """Player i's optimal affine rule at stage t against fixed rules of the others.

    Returns ``(theta_i, value)``; ``theta_i`` is [L M c] acting on z.
    """
    nz = _dims(spec)
    theta = list(theta_others) if theta_others is not None else [
        profile.stage_matrix(t, j) for j in range(spec.n_players)]
    omega, const = _stage_objective(spec, rec, profile, t, i, theta, w_next)
    flat = _check_hessian(omega, nz, i, t)
    hess, cross = omega[nz:, nz:], omega[nz:, :nz]
    if flat:
        th_i, *_ = np.linalg.lstsq(hess, -cross, rcond=None)
        if np.max(np.abs(hess @ th_i + cross), initial=0.0) > CONSISTENCY_TOL:
            raise IllPosedStageGame(i, t, 0.0)
    else:
        th_i = -np.linalg.solve(hess, cross)
    return th_i, _value_from(omega, const, th_i, nz)


def _stage_nash(spec: GameSpec, rec: PublicRecursion, profile: StrategyProfile, t: int, w_next):
    """Solve all players' stage-t first-order conditions simultaneously.

    Player i's condition reads ``H_i theta_i + C_i(theta_{-i}) = 0`` with
    ``H_i`` free of every rule and ``C_i`` affine, so the stacked system is
    assembled from ``H_i`` and unit probes of the other players' blocks.
    """
    n, na = spec.n_players, spec.dim_a
    nz = _dims(spec)
    size = na * nz
    builders = [_objective_builder(spec, rec, profile, t, i, None if w_next is None else w_next[i])
                for i in range(n)]
    zero = np.zeros((n, na, nz))
    omegas = [b(zero) for b in builders]
    flat = [_check_hessian(om, nz, i, t) for i, (om, _) in enumerate(omegas)]
    base = np.concatenate([om[nz:, :nz].ravel() for om, _ in omegas])
    system = np.zeros((n * size, n * size))
    for i in range(n):
        rows = slice(i * size, (i + 1) * size)
        # vec (row-major) of H theta is kron(H, I) vec(theta)
        system[rows, rows] = np.kron(omegas[i][0][nz:, nz:], np.eye(nz))
        for k in spec.others(i):
            for col in range(size):
                probe = zero.copy()
                probe.reshape(n, size)[k, col] = 1.0
                system[rows, k * size + col] = builders[i](probe)[0][nz:, :nz].ravel() - base[rows]
    if any(flat) or np.linalg.cond(system) > 1e12:
        sol, *_ = np.linalg.lstsq(system, -base, rcond=None)
        miss = float(np.max(np.abs(system @ sol + base), initial=0.0))
        if miss > CONSISTENCY_TOL * max(1.0, float(np.max(np.abs(base), initial=0.0))):
            raise StageSingularError(t, miss)
    else:
        sol = np.linalg.solve(system, -base)
    theta = sol.reshape(n, na, nz)
    values = []
    for i in range(n):
        omega, const = builders[i](theta)
        values.append(_value_from(omega, const, theta[i], nz))
    return theta, values, [om for om, _ in omegas]


def profile_values(spec: GameSpec, rec: PublicRecursion, profile: StrategyProfile) -> QuadraticValues:
    """Reward-to-go of every player when all follow ``profile`` from each stage on."""
    nz = _dims(spec)
    mats = np.zeros((spec.horizon, spec.n_players, nz, nz))
    w_next = None
    for t in reversed(range(spec.horizon)):
        theta = [profile.stage_matrix(t, j) for j in range(spec.n_players)]
        for i in range(spec.n_players):
            omega, const = _stage_objective(spec, rec, profile, t, i, theta,
                                            None if w_next is None else w_next[i])
            mats[t, i] = _value_from(omega, const, theta[i], nz)
        w_next = mats[t]
    return QuadraticValues(mats)


def backward_pass(spec: GameSpec, rec: PublicRecursion, profile: StrategyProfile,
                  continuation: str = "profile"):
    """Best-response profile and values from t = T down to 1 with zero terminal value.

    ``continuation="best_response"`` chains the freshly solved later stages into
    the continuation. ``"profile"`` values the future under ``profile`` itself,
    which keeps the continuation an actual expected reward under the filters in
    ``rec``; both share their fixed points.

    Returns ``(new_profile, QuadraticValues, hessians)``; ``hessians[t][i]`` is the
    second-derivative matrix of player i's stage objective in that player's own action.
    """
    if continuation not in ("profile", "best_response"):
        raise ValueError(f"unknown continuation {continuation!r}")
    future = profile_values(spec, rec, profile).mats if continuation == "profile" else None
    n, na, nv, nf, horizon = spec.n_players, spec.dim_a, spec.dim_v, spec.dim_f_all, spec.horizon
    nz = _dims(spec)
    L = np.zeros((horizon, n, na, nv))
    M = np.zeros((horizon, n, na, nf))
    c = np.zeros((horizon, n, na))
    mats = np.zeros((horizon, n, nz, nz))
    hessians = [None] * horizon
    w_next = None
    for t in reversed(range(horizon)):
        theta, values, omegas = _stage_nash(spec, rec, profile, t, w_next)
        L[t], M[t], c[t] = theta[:, :, :nv], theta[:, :, nv:nv + nf], theta[:, :, nz - 1]
        mats[t] = np.stack(values)
        hessians[t] = [om[nz:, nz:] for om in omegas]
        w_next = mats[t] if future is None else future[t]
    return StrategyProfile(L, M, c), QuadraticValues(mats), hessians


@dataclass
class SolveResult:
    profile: StrategyProfile
    recursion: PublicRecursion
    values: QuadraticValues
    hessians: list
    converged: bool
    n_iter: int
    residual: float
    history: list = field(default_factory=list)

    def report(self) -> dict:
        return {"converged": self.converged, "iterations": self.n_iter, "residual": self.residual}


def solve_equilibrium(spec: GameSpec, options: SolverOptions | None = None) -> SolveResult:
    """Damped Picard iteration: profile -> public recursion -> backward pass -> profile.

    Stops when the sup-norm change between a profile and its best response is
    at most ``tol``. Non-convergence is reported in the result, not raised.
    """
    spec = validate_game(spec)
    options = options or SolverOptions()
    profile = (options.init_profile or StrategyProfile.zeros(spec)).check(spec)
    history = []
    result = None
    for it in range(1, options.max_outer_iters + 1):
        rec = build_public_recursion(spec, profile.L)
        new, values, hessians = backward_pass(spec, rec, profile)
        resid = profile.distance(new)
        history.append(resid)
        logger.debug("outer iteration %d: residual %.3e", it, resid)
        if resid <= options.tol:
            return SolveResult(profile, rec, values, hessians, True, it, resid, history)
        result = SolveResult(profile, rec, values, hessians, False, it, resid, history)
        profile = profile.blend(new, options.damping)
    logger.warning("no convergence after %d outer iterations (residual %.3e)",
                   options.max_outer_iters, result.residual)
    return result


class LQGEquilibrium(BaseEstimator):
    """Estimator-style front end: ``fit`` a game, ``predict`` equilibrium actions.

    Parameters
    ----------
    damping : float, default=0.5
        Weight of the new best response in each outer update.
    tol : float, default=1e-9
        Sup-norm tolerance on the profile fixed-point residual.
    max_iter : int, default=500
        Maximum number of outer iterations.
    init_profile : StrategyProfile or None
        Warm start; zeros when None.

    Attributes
    ----------
    profile_, recursion_, values_, converged_, n_iter_, residual_
    """

    def __init__(self, damping=0.5, tol=1e-9, max_iter=500, init_profile=None):
        self.damping = damping
        self.tol = tol
        self.max_iter = max_iter
        self.init_profile = init_profile

    def fit(self, game: GameSpec, y=None):
        opts = SolverOptions(self.damping, self.tol, self.max_iter, self.init_profile)
        res = solve_equilibrium(game, opts)
        self.game_ = validate_game(game)
        self.profile_ = res.profile
        self.recursion_ = res.recursion
        self.values_ = res.values
        self.converged_ = res.converged
        self.n_iter_ = res.n_iter
        self.residual_ = res.residual
        return self

    def _check_fitted(self):
        if not hasattr(self, "profile_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("LQGEquilibrium is not fitted yet; call fit(game) first")

    def predict(self, v_hat, f, stage: int, player: int) -> np.ndarray:
        """Equilibrium action of ``player`` at 0-based ``stage`` for rows of (v̂, f)."""
        self._check_fitted()
        v_hat = np.atleast_2d(np.asarray(v_hat, dtype=float))
        f = np.atleast_2d(np.asarray(f, dtype=float))
        if v_hat.shape[1] != self.game_.dim_v or f.shape[1] != self.game_.dim_f_all:
            raise ValueError(f"expected v_hat with {self.game_.dim_v} and f with "
                             f"{self.game_.dim_f_all} columns")
        return self.profile_.action(stage, player, v_hat, f)

    def value(self, v_hat, f, stage: int, player: int) -> np.ndarray:
        """Reward-to-go of ``player`` from ``stage`` on."""
        self._check_fitted()
        return self.values_.evaluate(stage, player, v_hat, f)
