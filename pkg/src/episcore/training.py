"""Pairwise preference training: losses, optimizer, and the train loop.

The objective on a batch of (chosen, rejected) pairs is

    total = mean_i softplus(-(r+_i - r-_i)) + lambda * mean_i (r+_i + r-_i)^2

The first term is the pairwise ranking loss (negative log-likelihood of
the chosen side winning under a logistic preference model); it is
invariant under a common shift of all scores, which is exactly why the
second, centering term exists: it anchors the score scale near zero so
domain shifts cannot drift the rewards without bound.

Gradients flow through :func:`episcore.scorer.backward` with the per-pair
upstreams

    dL/dr+ = (1/n) * (-sigmoid(-(r+ - r-)) + 2 lambda (r+ + r-))
    dL/dr- = (1/n) * (+sigmoid(-(r+ - r-)) + 2 lambda (r+ + r-))

and are verified against finite differences at the loss level in the test
suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import scorer
from .episodes import PreferencePair
from .errors import EmptyBatchError
from .scorer import ScorerConfig, ScorerParams

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    total_steps: int = 1200
    lambda_center: float = 1e-2
    peak_lr: float = 1e-3
    weight_decay: float = 0.05
    warmup_frac: float = 0.15
    clip_norm: float = 1.0
    batch_size: int = 32
    seed: int = 0
    eval_every: int = 50

    def __post_init__(self):
        if self.lambda_center < 0:
            raise ValueError("lambda_center must be >= 0")
        if not 0 <= self.warmup_frac < 1:
            raise ValueError("warmup_frac must be in [0, 1)")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")

    @classmethod
    def large_backbone(cls, **overrides) -> "TrainConfig":
        """Preset with the peak learning rate used for billion-parameter
        backbones (2e-5); the desk-scale scorer needs the larger default."""
        overrides.setdefault("peak_lr", 2e-5)
        return cls(**overrides)


@dataclass
class StepReport:
    step: int
    loss_pref: float
    loss_center: float
    loss_total: float
    grad_norm_preclip: float
    lr: float
    mean_chosen_r: float
    mean_rejected_r: float
    batch_margin: float
    val_loss: float | None = None
    val_accuracy: float | None = None


def bt_loss(r_plus, r_minus):
    """Ranking loss softplus(-(r_plus - r_minus)) = -log sigmoid(r_plus - r_minus).

    Computed as max(x, 0) + log1p(exp(-|x|)) with x = -(r_plus - r_minus),
    which neither overflows for large |x| nor underflows to 0 for margins
    as wide as float64 can represent. Accepts scalars or arrays.
    """
    x = -(np.asarray(r_plus, dtype=np.float64) - np.asarray(r_minus, dtype=np.float64))
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return float(out) if out.ndim == 0 else out


def center_loss(r_plus, r_minus):
    """Squared sum (r_plus + r_minus)^2; zero only for antisymmetric scores."""
    s = np.asarray(r_plus, dtype=np.float64) + np.asarray(r_minus, dtype=np.float64)
    out = s * s
    return float(out) if out.ndim == 0 else out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class BatchLoss:
    value: float
    loss_pref: float
    loss_center: float
    grads: ScorerParams
    r_chosen: np.ndarray
    r_rejected: np.ndarray


def score_pairs(
    pairs: list[PreferencePair],
    cfg: ScorerConfig,
    params: ScorerParams,
    inputs: list[tuple[np.ndarray, np.ndarray]] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Forward-only scoring of both sides of every pair."""
    r_chosen = np.empty(len(pairs))
    r_rejected = np.empty(len(pairs))
    for i, pair in enumerate(pairs):
        xc, xr = inputs[i] if inputs is not None else (None, None)
        r_chosen[i], _ = scorer.score(pair.chosen, pair.criterion, cfg, params, inputs=xc)
        r_rejected[i], _ = scorer.score(pair.rejected, pair.criterion, cfg, params, inputs=xr)
    return r_chosen, r_rejected


def build_pair_inputs(pairs: list[PreferencePair], cfg: ScorerConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """Precompute the input frame matrices once; they are parameter-free."""
    return [
        (scorer.episode_input_matrix(p.chosen, cfg), scorer.episode_input_matrix(p.rejected, cfg))
        for p in pairs
    ]


def total_loss(
    batch: list[PreferencePair],
    cfg: ScorerConfig,
    params: ScorerParams,
    lambda_center: float = 1e-2,
    inputs: list[tuple[np.ndarray, np.ndarray]] | None = None,
) -> BatchLoss:
    """Batch objective and its exact parameter gradients.

    Both sides of a pair are scored in the same pass so the centering term
    couples them pairwise, exactly as written above.
    """
    if not batch:
        raise EmptyBatchError("cannot compute a loss over an empty batch")
    n = len(batch)
    grads = scorer.zeros_like_params(params)
    r_chosen = np.empty(n)
    r_rejected = np.empty(n)
    acts_c = []
    acts_r = []
    for i, pair in enumerate(batch):
        xc, xr = inputs[i] if inputs is not None else (None, None)
        r_chosen[i], ac = scorer.score(pair.chosen, pair.criterion, cfg, params, inputs=xc)
        r_rejected[i], ar = scorer.score(pair.rejected, pair.criterion, cfg, params, inputs=xr)
        acts_c.append(ac)
        acts_r.append(ar)
    delta = r_chosen - r_rejected
    sig = _sigmoid(-delta)  # = 1 - sigmoid(delta), the miss probability
    ssum = r_chosen + r_rejected
    loss_pref = float(np.mean(bt_loss(r_chosen, r_rejected)))
    loss_center = float(np.mean(center_loss(r_chosen, r_rejected)))
    value = loss_pref + lambda_center * loss_center
    for i, pair in enumerate(batch):
        up_c = (-sig[i] + 2.0 * lambda_center * ssum[i]) / n
        up_r = (sig[i] + 2.0 * lambda_center * ssum[i]) / n
        scorer.params_add(grads, scorer.backward(acts_c[i], up_c, cfg, params))
        scorer.params_add(grads, scorer.backward(acts_r[i], up_r, cfg, params))
    return BatchLoss(value, loss_pref, loss_center, grads, r_chosen, r_rejected)


# ---------------------------------------------------------------------------
# Optimizer: linear warmup into a cosine decay, global-norm clipping,
# decoupled weight decay on every tensor.
# ---------------------------------------------------------------------------


def warmup_steps(cfg: TrainConfig) -> int:
    return int(round(cfg.warmup_frac * cfg.total_steps))


def lr_at_step(step: int, cfg: TrainConfig) -> float:
    """Learning rate at 1-based ``step``; peak at warmup end, 0 at the end."""
    wu = warmup_steps(cfg)
    if step >= cfg.total_steps:
        return 0.0
    if wu > 0 and step <= wu:
        return cfg.peak_lr * step / wu
    span = max(cfg.total_steps - wu, 1)
    progress = (step - wu) / span
    return cfg.peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def clip_gradients(grads: ScorerParams, clip_norm: float) -> tuple[ScorerParams, float]:
    """Scale grads to global L2 norm <= clip_norm; direction is unchanged."""
    norm = scorer.params_norm(grads)
    if norm > clip_norm:
        scale = clip_norm / norm
        return scorer.params_map(lambda g: g * scale, grads), norm
    return grads, norm


@dataclass
class AdamState:
    m: ScorerParams
    v: ScorerParams
    t: int = 0

    @classmethod
    def init(cls, params: ScorerParams) -> "AdamState":
        return cls(m=scorer.zeros_like_params(params), v=scorer.zeros_like_params(params))


def optimizer_step(
    params: ScorerParams,
    grads: ScorerParams,
    state: AdamState,
    cfg: TrainConfig,
    step: int,
) -> ScorerParams:
    """One clipped AdamW update; returns new params, mutates ``state``."""
    grads, _ = clip_gradients(grads, cfg.clip_norm)
    state.t += 1
    lr = lr_at_step(step, cfg)
    bc1 = 1.0 - ADAM_BETA1**state.t
    bc2 = 1.0 - ADAM_BETA2**state.t
    new = {}
    for name in scorer.PARAM_FIELDS:
        g = getattr(grads, name)
        m = getattr(state.m, name)
        v = getattr(state.v, name)
        m[...] = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v[...] = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        theta = getattr(params, name)
        new[name] = theta - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS) - lr * cfg.weight_decay * theta
    return ScorerParams(**new)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    best_params: ScorerParams
    best_step: int
    best_val_loss: float
    history: list[StepReport]


def evaluate_loss(
    pairs: list[PreferencePair],
    cfg: ScorerConfig,
    params: ScorerParams,
    lambda_center: float,
    inputs=None,
) -> tuple[float, float]:
    """(total loss, pairwise accuracy) on a held-out set, forward only."""
    rc, rr = score_pairs(pairs, cfg, params, inputs=inputs)
    loss = float(np.mean(bt_loss(rc, rr))) + lambda_center * float(np.mean(center_loss(rc, rr)))
    acc = float(np.mean(rc > rr))
    return loss, acc


CHECKPOINT_WINDOW = 20


def train(
    pairs: list[PreferencePair],
    val_pairs: list[PreferencePair],
    scorer_cfg: ScorerConfig,
    cfg: TrainConfig,
    checkpoint_dir: str | Path | None = None,
) -> TrainResult:
    """Run the pairwise training loop and return the best checkpoint.

    Deterministic given ``cfg.seed``: parameter init and the shuffling
    stream both derive from it. Validation loss is measured every
    ``eval_every`` steps (and at the last step); the returned params are
    the ones with minimal validation loss. When ``checkpoint_dir`` is
    given, a rolling window of the 20 most recent eval-point checkpoints
    is kept on disk.
    """
    if not pairs:
        raise EmptyBatchError("training requires a non-empty pair set")
    root = np.random.SeedSequence(cfg.seed)
    init_ss, shuffle_ss = root.spawn(2)
    params = scorer.init_params(scorer_cfg, seed=int(init_ss.generate_state(1)[0]))
    shuffle_rng = np.random.Generator(np.random.PCG64(shuffle_ss))

    train_inputs = build_pair_inputs(pairs, scorer_cfg)
    val_inputs = build_pair_inputs(val_pairs, scorer_cfg) if val_pairs else None

    state = AdamState.init(params)
    n = len(pairs)
    bs = min(cfg.batch_size, n)
    order = shuffle_rng.permutation(n)
    pos = 0

    history: list[StepReport] = []
    best_params = scorer.clone_params(params)
    best_step = 0
    best_val = math.inf
    window: list[Path] = []
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    for step in range(1, cfg.total_steps + 1):
        if pos + bs > n:
            order = shuffle_rng.permutation(n)
            pos = 0
        idx = order[pos : pos + bs]
        pos += bs
        batch = [pairs[i] for i in idx]
        batch_inputs = [train_inputs[i] for i in idx]

        result = total_loss(batch, scorer_cfg, params, cfg.lambda_center, inputs=batch_inputs)
        _, preclip = clip_gradients(result.grads, cfg.clip_norm)
        params = optimizer_step(params, result.grads, state, cfg, step)

        report = StepReport(
            step=step,
            loss_pref=result.loss_pref,
            loss_center=result.loss_center,
            loss_total=result.loss_pref + cfg.lambda_center * result.loss_center,
            grad_norm_preclip=preclip,
            lr=lr_at_step(step, cfg),
            mean_chosen_r=float(result.r_chosen.mean()),
            mean_rejected_r=float(result.r_rejected.mean()),
            batch_margin=float((result.r_chosen - result.r_rejected).mean()),
        )

        if val_pairs and (step % cfg.eval_every == 0 or step == cfg.total_steps):
            val_loss, val_acc = evaluate_loss(val_pairs, scorer_cfg, params, cfg.lambda_center, inputs=val_inputs)
            report.val_loss = val_loss
            report.val_accuracy = val_acc
            if val_loss < best_val:
                best_val = val_loss
                best_step = step
                best_params = scorer.clone_params(params)
            if ckpt_dir is not None:
                path = ckpt_dir / f"step-{step:06d}.ckpt"
                scorer.save_checkpoint(path, scorer_cfg, params)
                window.append(path)
                while len(window) > CHECKPOINT_WINDOW:
                    old = window.pop(0)
                    old.unlink(missing_ok=True)

        history.append(report)

    if not val_pairs:
        best_params = scorer.clone_params(params)
        best_step = cfg.total_steps
        best_val = math.nan
    return TrainResult(best_params=best_params, best_step=best_step, best_val_loss=best_val, history=history)
