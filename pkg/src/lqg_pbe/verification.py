"""Statistical and oracle checks of a solved profile.

The oracles live in :mod:`lqg_pbe.oracles` and are re-exported here. Everything
else is Monte Carlo: deviation gains under common random numbers and
regression / covariance checks of the belief recursions. A check passes when
its standardized deviation is at most ``Z_CRIT`` standard errors.
"""
from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, field

import numpy as np

from .belief_filters import PublicRecursion, build_public_recursion, stacked_filter_means
from .game_model import GameSpec, random_game
from .oracles import OracleError, conditioning_oracle, one_stage_oracle, single_agent_lqg_oracle
from .simulation import DeviationSpec, simulate_paths
from .state_evolution import f_sub_index, layout
from .strategy import StrategyProfile

__all__ = [
    "OracleError", "conditioning_oracle", "one_stage_oracle", "single_agent_lqg_oracle",
    "canonical_game", "DeviationResult", "deviation_gain", "deviation_grid", "CertificateReport",
    "certify_equilibrium", "corrupt_profile", "CheckResult", "ConsistencyReport", "consistency_report",
    "ols",
]

Z_CRIT = 3.0
MIN_DEVIATION_PATHS = 1000
MIN_STAT_PATHS = 1000
GRID_MAGNITUDES = (1e-2, 1e-1)
GRID_DIRECTIONS = 3
GRID_ACTIONS = (-1.0, -0.1, 0.1, 1.0)
CANONICAL_SEED = 1
CANONICAL_COUPLING = 0.1
OFF_PATH_NOTE = ("only on-path histories and histories reached by one unilateral deviation "
                 "are sampled; arbitrary off-path histories are not tested")


def canonical_game(horizon: int = 3) -> GameSpec:
    """Two players, scalar state and actions, unit prior and noise, fixed random rewards."""
    return random_game(n_players=2, horizon=horizon, dim_v=1, dim_a=1, seed=CANONICAL_SEED,
                       coupling=CANONICAL_COUPLING)


# ---------------------------------------------------------------- deviations

@dataclass(frozen=True)
class DeviationResult:
    deviation: DeviationSpec
    gain: float
    stderr: float

    @property
    def significant(self) -> bool:
        """Gain exceeds ``Z_CRIT`` standard errors (an exact zero never does)."""
        return self.gain > Z_CRIT * self.stderr and self.gain > 0.0

    def to_dict(self) -> dict:
        d = self.deviation
        return {"player": d.player + 1, "stage": d.stage + 1, "kind": d.kind,
                "magnitude": d.magnitude, "gain": self.gain, "stderr": self.stderr}


def _totals(spec, profile, rec, n_paths, seed, threads, deviation, player):
    out = simulate_paths(spec, profile, rec, n_paths, seed, threads, deviation)
    return out["r"][:, :, player].sum(axis=1)


def deviation_gain(spec: GameSpec, profile: StrategyProfile, deviation: DeviationSpec, n_paths: int,
                   seed: int, rec: PublicRecursion | None = None, threads: int = 1,
                   baseline: np.ndarray | None = None) -> DeviationResult:
    """Paired Monte Carlo estimate of the deviator's gain in total reward.

    Both arms use identical V and W draws. ``baseline`` may carry the
    deviator's on-profile per-path totals for the same seed to skip one arm.
    """
    if n_paths < MIN_DEVIATION_PATHS:
        raise ValueError(f"deviation_gain needs n_paths >= {MIN_DEVIATION_PATHS}, got {n_paths}")
    rec = rec or build_public_recursion(spec, profile.L)
    i = deviation.player
    if baseline is None:
        baseline = _totals(spec, profile, rec, n_paths, seed, threads, None, i)
    diff = _totals(spec, profile, rec, n_paths, seed, threads, deviation, i) - baseline
    return DeviationResult(deviation, float(diff.mean()), float(diff.std(ddof=1) / np.sqrt(n_paths)))


def deviation_grid(spec: GameSpec, player: int, stage: int, seed: int = 0) -> list[DeviationSpec]:
    """Sixteen deviations: 2 magnitudes x 3 random directions x 2 signs, plus 4 constant actions.

    Directions are unit vectors in the joint (dL, dM, dc) coefficient space.
    """
    na, nv, nf = spec.dim_a, spec.dim_v, spec.dim_f_all
    ss = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(b"deviation-grid"), player, stage))
    rng = np.random.Generator(np.random.PCG64(ss))
    size = na * (nv + nf + 1)
    grid = []
    for _ in range(GRID_DIRECTIONS):
        u = rng.standard_normal(size)
        u /= np.linalg.norm(u)
        d_l = u[:na * nv].reshape(na, nv)
        d_m = u[na * nv:na * (nv + nf)].reshape(na, nf)
        d_c = u[na * (nv + nf):]
        for mag in GRID_MAGNITUDES:
            for sign in (1.0, -1.0):
                s = sign * mag
                grid.append(DeviationSpec(player, stage, "coef", s * d_l, s * d_m, s * d_c, magnitude=s))
    for value in GRID_ACTIONS:
        grid.append(DeviationSpec(player, stage, "action", action=np.full(na, value), magnitude=value))
    return grid


@dataclass
class CertificateReport:
    results: list
    n_paths: int
    seed: int
    note: str = OFF_PATH_NOTE

    @property
    def violations(self) -> list:
        return [r for r in self.results if r.significant]

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"passed": self.passed, "n_paths": self.n_paths, "seed": self.seed, "note": self.note,
                "n_deviations": len(self.results), "results": [r.to_dict() for r in self.results]}


def certify_equilibrium(spec: GameSpec, profile: StrategyProfile, n_paths: int, seed: int,
                        rec: PublicRecursion | None = None, threads: int = 1,
                        players=None, stages=None, grid_size: int = 16) -> CertificateReport:
    """Run the first ``grid_size`` grid deviations at every (player, stage) and collect gains."""
    rec = rec or build_public_recursion(spec, profile.L)
    players = range(spec.n_players) if players is None else players
    stages = range(spec.horizon) if stages is None else stages
    results = []
    base = simulate_paths(spec, profile, rec, n_paths, seed, threads)["r"].sum(axis=1)
    for i in players:
        for t in stages:
            for dev in deviation_grid(spec, i, t, seed)[:grid_size]:
                results.append(deviation_gain(spec, profile, dev, n_paths, seed, rec, threads, base[:, i]))
    return CertificateReport(results, n_paths, seed)


def corrupt_profile(profile: StrategyProfile, player: int = 0, factor: float = 2.0) -> StrategyProfile:
    """Scale one player's estimate weights at every stage (a negative control)."""
    L = profile.L.copy()
    L[:, player] *= factor
    return profile.replace(L=L)


# ---------------------------------------------------------------- consistency

def ols(y: np.ndarray, x: np.ndarray):
    """Least squares of ``y`` (n,) on ``x`` (n, k) with homoskedastic standard errors."""
    n, k = x.shape
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    dof = max(n - k, 1)
    s2 = resid @ resid / dof
    cov = s2 * np.linalg.pinv(x.T @ x)
    return coef, np.sqrt(np.clip(np.diag(cov), 0.0, None))


def _zscore(diff: np.ndarray, se: np.ndarray, abs_tol: float = 0.0) -> float:
    excess = np.clip(np.abs(diff) - abs_tol, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(excess == 0.0, 0.0, excess / se)
    return float(np.max(z, initial=0.0))


@dataclass(frozen=True)
class CheckResult:
    claim: str
    detail: str
    statistic: float
    tolerance: float
    n_samples: int
    status: str  # "pass", "fail" or "warn"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class ConsistencyReport:
    checks: list = field(default_factory=list)
    n_paths: int = 0
    seed: int = 0

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    @property
    def warnings(self) -> list:
        return [c for c in self.checks if c.status == "warn"]

    def by_claim(self, claim: str) -> list:
        return [c for c in self.checks if c.claim == claim]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "n_paths": self.n_paths, "seed": self.seed,
                "checks": [c.to_dict() for c in self.checks]}

    def to_text(self) -> str:
        lines = [f"consistency report: n_paths={self.n_paths} seed={self.seed}"]
        for c in self.checks:
            lines.append(f"  [{c.status.upper():4}] {c.claim:<26} {c.detail:<28} "
                         f"z={c.statistic:.3f} tol={c.tolerance:g} n={c.n_samples}")
        lines.append("  overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def _add(report: ConsistencyReport, claim: str, detail: str, z: float, n: int):
    if n < MIN_STAT_PATHS:
        status = "warn"
    else:
        status = "pass" if z <= Z_CRIT else "fail"
    report.checks.append(CheckResult(claim, detail, z, Z_CRIT, n, status))


def _cross_estimate_checks(report, spec, rec, sim):
    n = sim["v"].shape[0]
    nv = spec.dim_v
    for t in range(spec.horizon):
        for i in range(spec.n_players):
            E = rec.cross_coeff[t][i]
            for k, j in enumerate(spec.others(i)):
                f_ij = sim["f"][:, t, f_sub_index(spec, i, j)]
                use_f = bool(np.ptp(f_ij, axis=0).max() > 0.0)
                worst = 0.0
                for r in range(nv):
                    cols = [sim["v_hat"][:, t, i]] + ([f_ij[:, r:r + 1]] if use_f else []) + [np.ones((n, 1))]
                    x = np.hstack(cols)
                    coef, se = ols(sim["v_hat"][:, t, j, r], x)
                    want = np.concatenate([E[k * nv + r], [1.0] if use_f else [], [0.0]])
                    worst = max(worst, _zscore(coef - want, se))
                _add(report, "cross-estimate linearity", f"stage {t + 1} player {i + 1} on {j + 1}", worst, n)


def _covariance_checks(report, spec, rec, sim):
    n, horizon, nn, na = sim["v"].shape[0], spec.horizon, spec.n_players, spec.dim_a
    act_innov = (sim["a"] - sim["m"]).reshape(n, horizon, nn * na)
    for i in range(nn):
        lay = layout(spec, i)
        means = stacked_filter_means(rec, i, sim["x"][:, :, i], act_innov, sim["f"])
        for t in range(horizon):
            prev = sim["v_hat"][:, t - 1] if t > 0 else np.zeros_like(sim["v_hat"][:, 0])
            state = np.zeros((n, lay.n_state))
            state[:, lay.v] = sim["v"]
            state[:, lay.vh_self] = prev[:, i]
            for j in lay.others:
                state[:, lay.vh_other(j)] = prev[:, j]
            state[:, lay.x] = sim["x"][:, t, i]
            err = state - means[:, t]
            emp = err.T @ err / n
            sig = rec.sigma[t][i]
            d = np.clip(np.diag(sig), 0.0, None)
            se = np.sqrt((np.outer(d, d) + sig ** 2) / n)
            z = _zscore(emp - sig, se, abs_tol=1e-9)
            _add(report, "error covariance", f"stage {t + 1} player {i + 1}", z, n)


def _martingale_checks(report, spec, sim):
    n = sim["v"].shape[0]
    vh, f, x = sim["v_hat"], sim["f"], sim["x"]
    nv = spec.dim_v
    for i in range(spec.n_players):
        incs = []
        for t in range(spec.horizon):
            prev = vh[:, t - 1, i] if t > 0 else np.zeros((n, nv))
            inc = vh[:, t, i] - prev
            incs.append(inc)
            past = np.hstack([prev, f[:, t - 1]]) if t > 0 else np.zeros((n, 0))
            xr = np.hstack([np.ones((n, 1)), past[:, np.ptp(past, axis=0) > 0.0]])
            worst = max(_zscore(*ols(inc[:, r], xr)) for r in range(nv))
            _add(report, "martingale increments", f"stage {t + 1} player {i + 1}", worst, n)
            sig = x[:, t, i] - prev
            se = sig.std(axis=0, ddof=1) / np.sqrt(n)
            _add(report, "signal innovation mean", f"stage {t + 1} player {i + 1}",
                 _zscore(sig.mean(axis=0), se), n)
        for t in range(1, spec.horizon):
            a, b = incs[t - 1], incs[t]
            worst = 0.0
            for r in range(nv):
                for s in range(nv):
                    if a[:, r].std() == 0.0 or b[:, s].std() == 0.0:
                        continue
                    rho = np.corrcoef(a[:, r], b[:, s])[0, 1]
                    worst = max(worst, abs(rho) * np.sqrt(n))
            _add(report, "innovation whiteness", f"stages {t}-{t + 1} player {i + 1}", worst, n)


def _publicness_check(report, spec, profile, rec, n):
    again = build_public_recursion(spec, profile.L)
    same = all(np.array_equal(a, b) for t in range(spec.horizon) for a, b in zip(rec.sigma[t], again.sigma[t]))
    same &= all(np.array_equal(a, b) for t in range(spec.horizon)
                for a, b in zip(rec.cross_coeff[t], again.cross_coeff[t]))
    report.checks.append(CheckResult("covariance publicness", "rebuilt from profile alone",
                                     0.0 if same else np.inf, 0.0, n, "pass" if same else "fail"))


def consistency_report(spec: GameSpec, profile: StrategyProfile, n_paths: int, seed: int,
                       rec: PublicRecursion | None = None, threads: int = 1) -> ConsistencyReport:
    """Monte Carlo checks of the belief recursions under ``profile``.

    Claims tested: cross-estimates are affine in the own estimate with the
    public coefficients; posterior error covariances equal the public ones;
    private estimates are martingales with white increments; signals are
    unbiased given the previous estimate; and the public quantities do not
    depend on any realization. Samples below ``MIN_STAT_PATHS`` downgrade
    every statistical check to a warning.
    """
    rec = rec or build_public_recursion(spec, profile.L)
    sim = simulate_paths(spec, profile, rec, n_paths, seed, threads)
    report = ConsistencyReport(n_paths=n_paths, seed=seed)
    _publicness_check(report, spec, profile, rec, n_paths)
    _cross_estimate_checks(report, spec, rec, sim)
    _covariance_checks(report, spec, rec, sim)
    _martingale_checks(report, spec, sim)
    return report
