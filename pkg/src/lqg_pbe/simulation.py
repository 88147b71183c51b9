"""Forward simulation of the game under an affine profile.

Random numbers follow a counter-style contract: paths are grouped in fixed
blocks of ``BLOCK`` and block ``b`` of stream ``tag`` is drawn from
``SeedSequence(seed, spawn_key=(crc32(tag), b))``. A path's draws therefore depend
only on (seed, tag, path index), never on ``n_paths`` or the thread count.
"""
from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .belief_filters import PublicRecursion, init_private, update_private, update_public_EF
from .game_model import GameSpec, batch_reward
from .strategy import StrategyProfile

BLOCK = 1024


@dataclass(frozen=True)
class Primitives:
    """Standardized-free draws: v (n, nv) and w (n, T, N, nv)."""

    v: np.ndarray
    w: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.v.shape[0]

    def subset(self, rows) -> "Primitives":
        return Primitives(self.v[rows], self.w[rows])


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(np.asarray(m))
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def _block_normals(seed: int, tag: str, block: int, width: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(tag.encode()), block))
    return np.random.Generator(np.random.PCG64(ss)).standard_normal((BLOCK, width))


def draw_primitives(spec: GameSpec, seed: int, n_paths: int, start: int = 0,
                    tag: str = "primitives") -> Primitives:
    """Draw V ~ N(0, Σ) and W^i_t ~ N(0, Q^i) for paths ``start .. start + n_paths - 1``."""
    nv, n, horizon = spec.dim_v, spec.n_players, spec.horizon
    width = nv * (1 + n * horizon)
    stop = start + n_paths
    chunks = [_block_normals(seed, tag, b, width) for b in range(start // BLOCK, (stop - 1) // BLOCK + 1)]
    z = np.concatenate(chunks)[start - (start // BLOCK) * BLOCK:][:n_paths]
    v = z[:, :nv] @ _sqrt_psd(spec.prior_cov).T
    w = z[:, nv:].reshape(n_paths, horizon, n, nv)
    roots = np.stack([_sqrt_psd(q) for q in spec.noise_cov])
    w = np.einsum("jab,ptjb->ptja", roots, w)
    return Primitives(v, w)


@dataclass(frozen=True)
class DeviationSpec:
    """A unilateral one-stage deviation.

    ``kind == "coef"`` adds (dL, dM, dc) to the deviator's coefficients at ``stage``;
    ``kind == "action"`` plays the fixed ``action`` instead. ``magnitude`` is a label.
    """

    player: int
    stage: int
    kind: str = "coef"
    dL: np.ndarray | None = None
    dM: np.ndarray | None = None
    dc: np.ndarray | None = None
    action: np.ndarray | None = None
    magnitude: float = 0.0

    def __post_init__(self):
        if self.kind not in ("coef", "action"):
            raise ValueError(f"unknown deviation kind {self.kind!r}")
        if not np.isfinite(self.magnitude):
            raise ValueError("deviation magnitude must be finite")

    def apply(self, a: np.ndarray, v_hat: np.ndarray, f: np.ndarray) -> np.ndarray:
        if self.kind == "action":
            return np.broadcast_to(np.asarray(self.action, dtype=float), a.shape).copy()
        out = a.copy()
        if self.dL is not None:
            out += v_hat @ np.asarray(self.dL).T
        if self.dM is not None:
            out += f @ np.asarray(self.dM).T
        if self.dc is not None:
            out += np.asarray(self.dc)
        return out


def simulate(spec: GameSpec, profile: StrategyProfile, rec: PublicRecursion, prims: Primitives,
             deviation: DeviationSpec | None = None) -> dict:
    """Run all paths in ``prims`` through the filters and the profile.

    Returns arrays with a leading path axis: ``x``, ``v_hat`` (n, T, N, nv),
    ``f`` (n, T, F), ``m``, ``a`` (n, T, N, na), ``r`` (n, T, N) and ``v``.
    """
    n_paths, horizon, n, nv, na = prims.n_paths, spec.horizon, spec.n_players, spec.dim_v, spec.dim_a
    x = prims.v[:, None, None, :] + prims.w
    v_hat = np.zeros((n_paths, horizon, n, nv))
    f = np.zeros((n_paths, horizon, spec.dim_f_all))
    m = np.zeros((n_paths, horizon, n, na))
    a = np.zeros((n_paths, horizon, n, na))
    r = np.zeros((n_paths, horizon, n))
    for t in range(horizon):
        if t == 0:
            for i in range(n):
                v_hat[:, 0, i] = init_private(rec, i, x[:, 0, i])
        else:
            innov = (a[:, t - 1] - m[:, t - 1]).reshape(n_paths, n * na)
            for i in range(n):
                v_hat[:, t, i] = update_private(rec, t, i, v_hat[:, t - 1, i], f[:, t - 1], x[:, t, i], innov)
            f[:, t] = update_public_EF(rec, t, f[:, t - 1], innov)[1]
        for i in range(n):
            m[:, t, i] = profile.offset(t, i, f[:, t])
            a[:, t, i] = v_hat[:, t, i] @ profile.L[t, i].T + m[:, t, i]
            if deviation is not None and deviation.player == i and deviation.stage == t:
                a[:, t, i] = deviation.apply(a[:, t, i], v_hat[:, t, i], f[:, t])
        a_flat = a[:, t].reshape(n_paths, n * na)
        for i in range(n):
            r[:, t, i] = batch_reward(spec, i, prims.v, a_flat)
    return {"v": prims.v, "x": x, "v_hat": v_hat, "f": f, "m": m, "a": a, "r": r}


def simulate_paths(spec: GameSpec, profile: StrategyProfile, rec: PublicRecursion, n_paths: int,
                   seed: int, threads: int = 1, deviation: DeviationSpec | None = None,
                   tag: str = "primitives") -> dict:
    """Draw and simulate ``n_paths`` paths, optionally split across threads by RNG block."""
    starts = list(range(0, n_paths, BLOCK))

    def run(start: int) -> dict:
        prims = draw_primitives(spec, seed, min(BLOCK, n_paths - start), start, tag)
        return simulate(spec, profile, rec, prims, deviation)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


@dataclass(frozen=True)
class Trajectory:
    v: np.ndarray
    x: np.ndarray
    v_hat: np.ndarray
    f: np.ndarray
    m: np.ndarray
    a: np.ndarray
    r: np.ndarray

    def records(self):
        """One dict per stage, suitable for line-delimited export."""
        for t in range(self.x.shape[0]):
            yield {
                "stage": t + 1,
                "v": self.v.tolist(),
                "x": self.x[t].tolist(),
                "v_hat": self.v_hat[t].tolist(),
                "f": self.f[t].tolist(),
                "m": self.m[t].tolist(),
                "a": self.a[t].tolist(),
                "r": self.r[t].tolist(),
            }


def sample_path(spec: GameSpec, profile: StrategyProfile, rec: PublicRecursion, seed: int,
                path_index: int = 0, deviation: DeviationSpec | None = None) -> Trajectory:
    prims = draw_primitives(spec, seed, 1, start=path_index)
    out = simulate(spec, profile, rec, prims, deviation)
    return Trajectory(*(out[k][0] for k in ("v", "x", "v_hat", "f", "m", "a", "r")))


@dataclass(frozen=True)
class McReport:
    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int
    seed: int

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "stderr": self.stderr.tolist(),
                "n_paths": self.n_paths, "seed": self.seed}


def monte_carlo(spec: GameSpec, profile: StrategyProfile, rec: PublicRecursion, n_paths: int,
                seed: int, threads: int = 1) -> McReport:
    """Mean total reward per player with standard error std / sqrt(n)."""
    if n_paths < 2:
        raise ValueError("monte_carlo needs n_paths >= 2")
    totals = simulate_paths(spec, profile, rec, n_paths, seed, threads)["r"].sum(axis=1)
    return McReport(totals.mean(axis=0), totals.std(axis=0, ddof=1) / np.sqrt(n_paths), n_paths, seed)
