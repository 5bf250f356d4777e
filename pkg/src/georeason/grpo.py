"""Group-relative advantages and the clipped, KL-penalised surrogate objective."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class GroupTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class GrpoConfig:
    epsilon: float = 0.2
    beta: float = 0.04
    std_floor: float = 1e-8

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.std_floor <= 0:
            raise ValueError("std_floor must be positive")


@dataclass(frozen=True)
class RolloutGroup:
    rewards: tuple[float, ...]
    logp_current: tuple[float, ...]
    logp_old: tuple[float, ...]
    logp_ref: tuple[float, ...]

    def __post_init__(self):
        n = len(self.rewards)
        if n < 2:
            raise GroupTooSmall(f"group needs at least 2 samples, got {n}")
        for name in ("logp_current", "logp_old", "logp_ref"):
            vals = getattr(self, name)
            if len(vals) != n:
                raise ValueError(f"{name} has {len(vals)} entries, expected {n}")
            if not all(math.isfinite(v) and v <= 0 for v in vals):
                raise ValueError(f"{name} must be finite log-probabilities <= 0")
        for name in ("rewards", "logp_current", "logp_old", "logp_ref"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    def __len__(self) -> int:
        return len(self.rewards)


def advantages(rewards: Sequence[float], std_floor: float = 1e-8) -> np.ndarray:
    """(r - mean) / max(population std, std_floor); zeros for a constant group."""
    r = np.asarray(rewards, dtype=float)
    if r.size < 2:
        raise GroupTooSmall(f"group needs at least 2 samples, got {r.size}")
    centered = r - r.mean()
    std = r.std()
    if std == 0 or np.all(r == r[0]):
        return np.zeros_like(r)
    return centered / max(std, std_floor)


def clipped_term(logp_current, logp_old, advantage, epsilon: float):
    """Pessimistic surrogate min(ratio * A, clip(ratio, 1-eps, 1+eps) * A).

    Works elementwise on arrays.
    """
    ratio = np.exp(np.asarray(logp_current, dtype=float) - np.asarray(logp_old, dtype=float))
    adv = np.asarray(advantage, dtype=float)
    out = np.minimum(ratio * adv, np.clip(ratio, 1 - epsilon, 1 + epsilon) * adv)
    return float(out) if out.ndim == 0 else out


def kl_penalty(logp_current, logp_ref):
    """k3 estimator exp(d) - d - 1 with d = logp_ref - logp_current; >= 0."""
    d = np.asarray(logp_ref, dtype=float) - np.asarray(logp_current, dtype=float)
    out = np.expm1(d) - d
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def grpo_objective(group: RolloutGroup, cfg: GrpoConfig = GrpoConfig()) -> float:
    """Mean over the group of clipped_term - beta * kl_penalty (to be maximised)."""
    adv = advantages(group.rewards, cfg.std_floor)
    surrogate = clipped_term(np.array(group.logp_current), np.array(group.logp_old), adv, cfg.epsilon)
    kl = kl_penalty(np.array(group.logp_current), np.array(group.logp_ref))
    terms = np.atleast_1d(surrogate) - cfg.beta * np.atleast_1d(kl)
    return float(np.mean(terms))
