"""Affine strategy profiles: a^i_t = L^i_t v̂^i_t + M^i_t f_t + c^i_t."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .game_model import GameSpec


@dataclass(frozen=True)
class StrategyProfile:
    """Per (stage, player) affine coefficients.

    Shapes: ``L`` (T, N, dim_a, dim_v), ``M`` (T, N, dim_a, N*(N-1)*dim_v),
    ``c`` (T, N, dim_a). ``M`` acts on the stacked public offsets
    ``f_t = (f^1_t, ..., f^N_t)``.
    """

    L: np.ndarray
    M: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, spec: GameSpec) -> "StrategyProfile":
        t, n, na, nv = spec.horizon, spec.n_players, spec.dim_a, spec.dim_v
        return cls(np.zeros((t, n, na, nv)), np.zeros((t, n, na, spec.dim_f_all)), np.zeros((t, n, na)))

    def check(self, spec: GameSpec) -> "StrategyProfile":
        t, n, na, nv = spec.horizon, spec.n_players, spec.dim_a, spec.dim_v
        expected = {"L": (t, n, na, nv), "M": (t, n, na, spec.dim_f_all), "c": (t, n, na)}
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"profile.{name}: expected shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"profile.{name}: non-finite coefficients")
        return self

    def stage_matrix(self, t: int, i: int) -> np.ndarray:
        """Coefficient matrix [L M c] acting on z = [v̂; f; 1]."""
        return np.hstack([self.L[t, i], self.M[t, i], self.c[t, i][:, None]])

    def action(self, t: int, i: int, v_hat, f) -> np.ndarray:
        """Prescribed action; broadcasts over a leading path axis."""
        v_hat = np.asarray(v_hat)
        f = np.asarray(f)
        return v_hat @ self.L[t, i].T + f @ self.M[t, i].T + self.c[t, i]

    def offset(self, t: int, i: int, f) -> np.ndarray:
        """Public part m^i_t = M^i_t f_t + c^i_t."""
        return np.asarray(f) @ self.M[t, i].T + self.c[t, i]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.L.ravel(), self.M.ravel(), self.c.ravel()])

    @classmethod
    def from_flat(cls, spec: GameSpec, vec) -> "StrategyProfile":
        """Inverse of ``flat`` for the shapes of ``spec``."""
        z = cls.zeros(spec)
        vec = np.asarray(vec, dtype=float)
        cuts = np.cumsum([z.L.size, z.M.size])
        if vec.size != z.flat().size:
            raise ValueError(f"expected {z.flat().size} coefficients, got {vec.size}")
        return cls(vec[:cuts[0]].reshape(z.L.shape), vec[cuts[0]:cuts[1]].reshape(z.M.shape),
                   vec[cuts[1]:].reshape(z.c.shape))

    def distance(self, other: "StrategyProfile") -> float:
        return float(np.max(np.abs(self.flat() - other.flat()))) if self.flat().size else 0.0

    def blend(self, other: "StrategyProfile", weight: float) -> "StrategyProfile":
        """(1 - weight) * self + weight * other."""
        w = weight
        return StrategyProfile((1 - w) * self.L + w * other.L,
                               (1 - w) * self.M + w * other.M,
                               (1 - w) * self.c + w * other.c)

    def replace(self, L=None, M=None, c=None) -> "StrategyProfile":
        return StrategyProfile(self.L if L is None else np.asarray(L, dtype=float),
                               self.M if M is None else np.asarray(M, dtype=float),
                               self.c if c is None else np.asarray(c, dtype=float))

    def to_dict(self) -> dict:
        return {"L": self.L.tolist(), "M": self.M.tolist(), "c": self.c.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "StrategyProfile":
        return cls(np.asarray(data["L"], dtype=float), np.asarray(data["M"], dtype=float),
                   np.asarray(data["c"], dtype=float))
