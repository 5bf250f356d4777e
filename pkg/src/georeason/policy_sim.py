"""Desk-scale GRPO: a softmax policy over a quantised box vocabulary.

Each "response" is a single token, either a box on a ``G x G`` anchor grid or
EMIT_NOTHING, rendered through the real output grammar so rewards go through
the parser. Ratios and KL are exact, which leaves the objective and reward
as the only moving parts.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import BBox
from .grpo import GroupTooSmall, GrpoConfig, advantages
from .parser import StructuredOutput, render_output
from .reward import MatchingMode, total_reward

NOTHING_THINK = "no target"
CURVE_FIELDS = ("step", "mean_reward", "mean_abs_advantage", "kl", "clip_fraction")


@dataclass(frozen=True)
class BoxVocabulary:
    grid_size: int = 4
    scales: tuple[int, ...] = (1,)
    image_width: int = 64
    image_height: int = 64

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(int(s) for s in self.scales))
        if self.grid_size < 1 or not self.scales or min(self.scales) < 1:
            raise ValueError("grid_size and scales must be positive")

    @property
    def size(self) -> int:
        return self.grid_size ** 2 * len(self.scales) + 1

    @property
    def emit_nothing(self) -> int:
        return self.size - 1

    def token(self, row: int, col: int, scale_index: int = 0) -> int:
        g = self.grid_size
        if not (0 <= row < g and 0 <= col < g and 0 <= scale_index < len(self.scales)):
            raise IndexError("cell or scale out of range")
        return scale_index * g * g + row * g + col

    def box(self, token: int) -> BBox | None:
        """Box for ``token``, clipped to the image; None for EMIT_NOTHING."""
        if not 0 <= token < self.size:
            raise IndexError(f"token {token} outside vocabulary of size {self.size}")
        if token == self.emit_nothing:
            return None
        g = self.grid_size
        scale_index, cell = divmod(token, g * g)
        row, col = divmod(cell, g)
        s = self.scales[scale_index]
        cw, ch = self.image_width / g, self.image_height / g
        return BBox(col * cw, row * ch,
                    min((col + s) * cw, self.image_width),
                    min((row + s) * ch, self.image_height))

    def to_dict(self) -> dict:
        return {"grid_size": self.grid_size, "scales": list(self.scales),
                "image_width": self.image_width, "image_height": self.image_height}


def token_to_output(vocab: BoxVocabulary, token: int) -> str:
    b = vocab.box(token)
    if b is None:
        return render_output(StructuredOutput(NOTHING_THINK, ()))
    think = f"target at [{b.x_min:g},{b.y_min:g},{b.x_max:g},{b.y_max:g}]"
    return render_output(StructuredOutput(think, (b,)))


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class ToyPolicy:
    """Logits table of shape (num_queries, vocabulary size)."""

    logits: np.ndarray

    def __post_init__(self):
        arr = np.array(self.logits, dtype=float, copy=True)
        if arr.ndim != 2:
            raise ValueError("logits must be 2-D (queries x vocabulary)")
        if not np.all(np.isfinite(arr)):
            raise ValueError("logits must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "logits", arr)

    @classmethod
    def uniform(cls, num_queries: int, vocab_size: int) -> "ToyPolicy":
        return cls(np.zeros((num_queries, vocab_size)))

    @property
    def num_queries(self) -> int:
        return self.logits.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.logits.shape[1]

    def log_probs(self, query: int | None = None) -> np.ndarray:
        rows = self.logits if query is None else self.logits[query]
        return _log_softmax(rows)

    def probs(self, query: int | None = None) -> np.ndarray:
        return np.exp(self.log_probs(query))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ToyPolicy):
            return NotImplemented
        return np.array_equal(self.logits, other.logits)

    def to_json(self, vocab: BoxVocabulary | None = None) -> str:
        obj = {"logits": self.logits.tolist()}
        if vocab is not None:
            obj["vocabulary"] = vocab.to_dict()
        return json.dumps(obj)


def exact_kl(policy: ToyPolicy, ref: ToyPolicy, query: int | None = None) -> np.ndarray | float:
    """KL(policy || ref) per query (or for one query)."""
    lp, lq = policy.log_probs(query), ref.log_probs(query)
    kl = (np.exp(lp) * (lp - lq)).sum(axis=-1)
    return float(kl) if np.ndim(kl) == 0 else kl


@dataclass(frozen=True)
class SyntheticTask:
    query: int
    gt_boxes: tuple[BBox, ...]
    image_width: int = 64
    image_height: int = 64

    def __post_init__(self):
        object.__setattr__(self, "gt_boxes", tuple(self.gt_boxes))
        for b in self.gt_boxes:
            if b.x_max > self.image_width or b.y_max > self.image_height:
                raise ValueError(f"gt box {b.to_list()} leaves the image")


def standard_task(vocab: BoxVocabulary | None = None, row: int = 1, col: int = 2) -> SyntheticTask:
    """One query whose single gt box is exactly a vocabulary box."""
    vocab = vocab or BoxVocabulary()
    return SyntheticTask(0, (vocab.box(vocab.token(row, col)),), vocab.image_width, vocab.image_height)


def sample_group(policy: ToyPolicy, query: int, n: int,
                 seed: int | np.random.Generator) -> list[tuple[int, float]]:
    """``n`` i.i.d. draws from the query's softmax, with exact log-probabilities."""
    if n < 2:
        raise GroupTooSmall(f"group needs at least 2 samples, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lp = policy.log_probs(query)
    p = np.exp(lp)
    tokens = rng.choice(policy.vocab_size, size=n, p=p / p.sum())
    return [(int(t), float(lp[t])) for t in tokens]


def logprob_grad(policy: ToyPolicy, query: int, token: int) -> np.ndarray:
    """d log pi(token | query) / d logits[query] = onehot(token) - softmax."""
    g = -policy.probs(query)
    g[token] += 1.0
    return g


@dataclass(frozen=True)
class GroupBatch:
    """One sampled group: tokens drawn for ``query`` and their rewards."""

    query: int
    tokens: tuple[int, ...]
    rewards: tuple[float, ...]


def policy_objective(logits: np.ndarray, old: ToyPolicy, ref: ToyPolicy,
                     batch: Sequence[GroupBatch], cfg: GrpoConfig,
                     kl_mode: str = "exact") -> float:
    """GRPO objective of the policy with these logits, averaged over groups.

    ``kl_mode="exact"`` uses the categorical KL to ``ref``; ``"k3"`` uses the
    per-sample estimator on the drawn tokens.
    """
    lp_all = _log_softmax(np.asarray(logits, dtype=float))
    lp_old = old.log_probs()
    lp_ref = ref.log_probs()
    total = 0.0
    for g in batch:
        t = np.array(g.tokens)
        adv = advantages(g.rewards, cfg.std_floor)
        ratio = np.exp(lp_all[g.query, t] - lp_old[g.query, t])
        surrogate = np.minimum(ratio * adv, np.clip(ratio, 1 - cfg.epsilon, 1 + cfg.epsilon) * adv)
        if kl_mode == "exact":
            p = np.exp(lp_all[g.query])
            kl = float(np.sum(p * (lp_all[g.query] - lp_ref[g.query])))
            total += float(np.mean(surrogate)) - cfg.beta * kl
        elif kl_mode == "k3":
            d = lp_ref[g.query, t] - lp_all[g.query, t]
            total += float(np.mean(surrogate - cfg.beta * (np.expm1(d) - d)))
        else:
            raise ValueError(f"unknown kl_mode {kl_mode!r}")
    return total / len(batch)


def policy_objective_grad(logits: np.ndarray, old: ToyPolicy, ref: ToyPolicy,
                          batch: Sequence[GroupBatch], cfg: GrpoConfig,
                          kl_mode: str = "exact") -> tuple[np.ndarray, float]:
    """Analytic gradient of :func:`policy_objective` w.r.t. the full logits table.

    Also returns the fraction of samples whose ratio fell outside the clip range.
    """
    logits = np.asarray(logits, dtype=float)
    lp_all = _log_softmax(logits)
    lp_old = old.log_probs()
    lp_ref = ref.log_probs()
    grad = np.zeros_like(logits)
    clipped = 0
    n_samples = 0
    for g in batch:
        q = g.query
        t = np.array(g.tokens)
        n = len(t)
        p = np.exp(lp_all[q])
        adv = advantages(g.rewards, cfg.std_floor)
        ratio = np.exp(lp_all[q, t] - lp_old[q, t])
        lo, hi = 1 - cfg.epsilon, 1 + cfg.epsilon
        # the unclipped branch carries the gradient whenever it attains the min
        active = ratio * adv <= np.clip(ratio, lo, hi) * adv
        clipped += int(np.sum((ratio < lo) | (ratio > hi)))
        n_samples += n
        # d/dlogits of log p[t] is onehot(t) - p
        coef = np.where(active, ratio * adv, 0.0)
        if kl_mode == "k3":
            d = lp_ref[q, t] - lp_all[q, t]
            coef = coef - cfg.beta * (1.0 - np.exp(d))
        row = np.bincount(t, weights=coef, minlength=logits.shape[1]) - coef.sum() * p
        row /= n
        if kl_mode == "exact":
            kl = float(np.sum(p * (lp_all[q] - lp_ref[q])))
            row -= cfg.beta * p * (lp_all[q] - lp_ref[q] - kl)
        elif kl_mode != "k3":
            raise ValueError(f"unknown kl_mode {kl_mode!r}")
        grad[q] += row
    return grad / len(batch), (clipped / n_samples if n_samples else 0.0)


@dataclass(frozen=True)
class TrainConfig:
    grpo: GrpoConfig = field(default_factory=GrpoConfig)
    lr: float = 0.5
    group_size: int = 8
    matching: MatchingMode = MatchingMode.PER_GT_MAX
    kl_mode: str = "exact"

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.group_size < 2:
            raise GroupTooSmall(f"group needs at least 2 samples, got {self.group_size}")
        if self.kl_mode not in ("exact", "k3"):
            raise ValueError(f"unknown kl_mode {self.kl_mode!r}")


@dataclass(frozen=True)
class StepReport:
    step: int
    mean_reward: float
    mean_abs_advantage: float
    kl: float
    clip_fraction: float

    def row(self) -> list:
        return [self.step, repr(self.mean_reward), repr(self.mean_abs_advantage),
                repr(self.kl), repr(self.clip_fraction)]


def token_rewards(vocab: BoxVocabulary, task: SyntheticTask,
                  matching: MatchingMode = MatchingMode.PER_GT_MAX) -> np.ndarray:
    """Total reward of every vocabulary token for ``task``."""
    return np.array([total_reward(token_to_output(vocab, t), task.gt_boxes, matching).total
                     for t in range(vocab.size)])


def grpo_step(policy: ToyPolicy, old_policy: ToyPolicy, ref_policy: ToyPolicy,
              tasks: SyntheticTask | Sequence[SyntheticTask], vocab: BoxVocabulary,
              cfg: TrainConfig, seed: int | np.random.Generator,
              step: int = 0) -> tuple[ToyPolicy, StepReport]:
    """Sample one group per task from ``old_policy`` and take one ascent step."""
    if isinstance(tasks, SyntheticTask):
        tasks = [tasks]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    batch = []
    all_rewards, abs_adv = [], []
    for task in tasks:
        draws = sample_group(old_policy, task.query, cfg.group_size, rng)
        tokens = tuple(t for t, _ in draws)
        rewards = tuple(total_reward(token_to_output(vocab, t), task.gt_boxes, cfg.matching).total
                        for t in tokens)
        batch.append(GroupBatch(task.query, tokens, rewards))
        all_rewards.extend(rewards)
        abs_adv.extend(np.abs(advantages(rewards, cfg.grpo.std_floor)))
    queries = [t.query for t in tasks]
    kl = float(np.mean(np.atleast_1d(exact_kl(policy, ref_policy))[queries]))
    grad, clip_fraction = policy_objective_grad(policy.logits, old_policy, ref_policy,
                                                batch, cfg.grpo, cfg.kl_mode)
    new_policy = ToyPolicy(policy.logits + cfg.lr * grad)
    report = StepReport(step, float(np.mean(all_rewards)), float(np.mean(abs_adv)), kl, clip_fraction)
    return new_policy, report


@dataclass
class TrainResult:
    curve: list[StepReport]
    policy: ToyPolicy
    initial_policy: ToyPolicy
    expected_reward: float
    """Exact expected total reward of the final policy, averaged over tasks."""
    final_kl: float

    def curve_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CURVE_FIELDS)
        for r in self.curve:
            writer.writerow(r.row())
        return buf.getvalue()


def expected_reward(policy: ToyPolicy, vocab: BoxVocabulary, tasks: Sequence[SyntheticTask],
                    matching: MatchingMode = MatchingMode.PER_GT_MAX) -> float:
    return float(np.mean([policy.probs(t.query) @ token_rewards(vocab, t, matching) for t in tasks]))


def train(tasks: Sequence[SyntheticTask], cfg: TrainConfig, steps: int, seed: int,
          vocab: BoxVocabulary | None = None,
          init_policy: ToyPolicy | None = None) -> TrainResult:
    """Run ``steps`` GRPO steps; old policy refreshed every step, reference frozen at init."""
    if not tasks:
        raise ValueError("need at least one task")
    vocab = vocab or BoxVocabulary()
    num_queries = max(t.query for t in tasks) + 1
    policy = init_policy or ToyPolicy.uniform(num_queries, vocab.size)
    if policy.vocab_size != vocab.size:
        raise ValueError("policy and vocabulary sizes differ")
    ref = policy
    rng = np.random.default_rng(seed)
    curve = []
    for step in range(steps):
        old = policy
        policy, report = grpo_step(policy, old, ref, tasks, vocab, cfg, rng, step)
        curve.append(report)
    queries = [t.query for t in tasks]
    final_kl = float(np.mean(np.atleast_1d(exact_kl(policy, ref))[queries]))
    return TrainResult(curve, policy, ref, expected_reward(policy, vocab, tasks, cfg.matching), final_kl)
