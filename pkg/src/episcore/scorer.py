"""The reward scorer: frame encoder, criterion conditioning, pooling, head.

One episode is laid out as a single sequence of d_in-dimensional input
frames:

    row 0:               the criterion embedding (a learned table row,
                         passed through to H unchanged)
    per turn, in order:  one row per transcript token, then one row per
                         audio frame (truncated to ``max_frames_per_turn``)

so L = 1 + sum_t min(F_t, max_frames_per_turn) + sum_t tokens(x_t).
Token rows are deterministic hash embeddings of the case-folded,
whitespace-split token strings; no external tokenizer is involved.

Every non-criterion row is encoded as h = tanh(W_enc f + b_enc), the
sequence is pooled (last / mean / attention), and a one-hidden-layer tanh
MLP maps the pooled vector to a scalar reward. The forward pass caches
enough intermediates for :func:`backward` to produce exact reverse-mode
gradients of the reward w.r.t. every parameter tensor, which the test
suite verifies against central finite differences.

All arithmetic is float64 for clean gradient checks. Scoring is pure:
identical (episode, criterion, params) gives a bitwise-identical reward.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .episodes import Criterion, Episode
from .errors import AllMaskedError, ShapeMismatchError, StaleCacheError

POOLING_MODES = ("last", "mean", "attention")
_POOLING_CODE = {"last": 0, "mean": 1, "attention": 2}
_POOLING_FROM_CODE = {v: k for k, v in _POOLING_CODE.items()}

# Fixed seed of the token hash embedding; part of the model definition.
TOKEN_EMBED_SEED = 0x70CEA5


@dataclass
class ScorerConfig:
    d_in: int
    d: int = 16
    pooling: str = "mean"
    head_hidden: int = 16
    max_frames_per_turn: int = 60
    activation: str = "tanh"  # fixed; recorded for the contract, not a knob

    def __post_init__(self):
        if min(self.d_in, self.d, self.head_hidden, self.max_frames_per_turn) < 1:
            raise ValueError("all scorer dimensions must be >= 1")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"unknown pooling {self.pooling!r}, expected one of {POOLING_MODES}")
        if self.activation != "tanh":
            raise ValueError("the activation is fixed to tanh")


# Field order doubles as the tensor order in checkpoints and gradients.
PARAM_FIELDS = ("w_enc", "b_enc", "e_crit", "q", "w1", "b1", "w2", "b2")


@dataclass(eq=False)
class ScorerParams:
    """All learnable tensors. The same container holds gradients."""

    w_enc: np.ndarray  # (d, d_in) frame encoder weight
    b_enc: np.ndarray  # (d,)      frame encoder bias
    e_crit: np.ndarray  # (2, d)   criterion embeddings
    q: np.ndarray      # (d,)      attention-pooling query
    w1: np.ndarray     # (head_hidden, d)
    b1: np.ndarray     # (head_hidden,)
    w2: np.ndarray     # (1, head_hidden)
    b2: np.ndarray     # (1,)

    def tensors(self):
        return [(name, getattr(self, name)) for name in PARAM_FIELDS]


def param_shapes(cfg: ScorerConfig) -> dict[str, tuple[int, ...]]:
    return {
        "w_enc": (cfg.d, cfg.d_in),
        "b_enc": (cfg.d,),
        "e_crit": (2, cfg.d),
        "q": (cfg.d,),
        "w1": (cfg.head_hidden, cfg.d),
        "b1": (cfg.head_hidden,),
        "w2": (1, cfg.head_hidden),
        "b2": (1,),
    }


def init_params(cfg: ScorerConfig, seed: int = 0) -> ScorerParams:
    rng = np.random.default_rng(seed)
    return ScorerParams(
        w_enc=rng.standard_normal((cfg.d, cfg.d_in)) / math.sqrt(cfg.d_in),
        b_enc=np.zeros(cfg.d),
        e_crit=0.1 * rng.standard_normal((2, cfg.d)),
        q=0.1 * rng.standard_normal(cfg.d),
        w1=rng.standard_normal((cfg.head_hidden, cfg.d)) / math.sqrt(cfg.d),
        b1=np.zeros(cfg.head_hidden),
        w2=rng.standard_normal((1, cfg.head_hidden)) / math.sqrt(cfg.head_hidden),
        b2=np.zeros(1),
    )


def zeros_like_params(params: ScorerParams) -> ScorerParams:
    return ScorerParams(**{name: np.zeros_like(t) for name, t in params.tensors()})


def clone_params(params: ScorerParams) -> ScorerParams:
    return ScorerParams(**{name: t.copy() for name, t in params.tensors()})


def check_shapes(cfg: ScorerConfig, params: ScorerParams) -> None:
    for name, want in param_shapes(cfg).items():
        got = getattr(params, name).shape
        if got != want:
            raise ShapeMismatchError(f"params.{name} has shape {got}, config expects {want}")


# ---------------------------------------------------------------------------
# Input construction
# ---------------------------------------------------------------------------


def tokenize(text: str) -> list[str]:
    return text.casefold().split()


@lru_cache(maxsize=1 << 16)
def _token_vector_cached(token: str, d_in: int) -> np.ndarray:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    key = int.from_bytes(digest, "little")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([TOKEN_EMBED_SEED, key, d_in])))
    vec = rng.standard_normal(d_in)
    vec.setflags(write=False)
    return vec


def token_embedding(token: str, d_in: int) -> np.ndarray:
    """Deterministic hash embedding of one token into R^d_in."""
    return _token_vector_cached(token, d_in)


def episode_input_matrix(episode: Episode, cfg: ScorerConfig) -> np.ndarray:
    """Stack the non-criterion input frames of an episode, in layout order."""
    rows = []
    for turn in episode.turns:
        if turn.d_in != cfg.d_in:
            raise ShapeMismatchError(
                f"turn features have d_in={turn.d_in}, config expects {cfg.d_in}"
            )
        for tok in tokenize(turn.transcript):
            rows.append(token_embedding(tok, cfg.d_in))
        frames = turn.features[: cfg.max_frames_per_turn]
        rows.append(np.asarray(frames, dtype=np.float64))
    if not rows:
        return np.zeros((0, cfg.d_in))
    return np.vstack(rows).astype(np.float64, copy=False)


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Activations:
    """Cached intermediates of one forward pass, consumed by backward()."""

    x: np.ndarray            # (L-1, d_in) non-criterion input frames
    h: np.ndarray            # (L, d) encoded sequence
    mask: np.ndarray         # (L,) bool, True = real row
    pool_weights: np.ndarray  # (L,) pooling weights, 0 at masked rows
    pooled: np.ndarray       # (d,)
    a1: np.ndarray           # (head_hidden,) head hidden activation
    r: float
    criterion_index: int
    pooling: str
    params: ScorerParams     # identity tag; backward() rejects stale caches


def _encode_body(x: np.ndarray, params: ScorerParams) -> np.ndarray:
    return np.tanh(x @ params.w_enc.T + params.b_enc)


def encode(
    episode: Episode,
    criterion: Criterion,
    cfg: ScorerConfig,
    params: ScorerParams,
    inputs: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Encode an episode into the (L, d) hidden sequence plus its mask."""
    check_shapes(cfg, params)
    x = episode_input_matrix(episode, cfg) if inputs is None else inputs
    if x.shape[1] != cfg.d_in:
        raise ShapeMismatchError(f"inputs have d_in={x.shape[1]}, config expects {cfg.d_in}")
    h = np.vstack([params.e_crit[criterion.index][None, :], _encode_body(x, params)])
    mask = np.ones(h.shape[0], dtype=bool)
    return h, mask


def _pool_weights(h: np.ndarray, mask: np.ndarray, mode: str, params: ScorerParams) -> np.ndarray:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise AllMaskedError("cannot pool a fully masked sequence")
    w = np.zeros(h.shape[0])
    if mode == "last":
        w[idx[-1]] = 1.0
    elif mode == "mean":
        w[idx] = 1.0 / idx.size
    elif mode == "attention":
        z = h[idx] @ params.q / math.sqrt(h.shape[1])
        e = np.exp(z - z.max())
        w[idx] = e / e.sum()
    else:
        raise ValueError(f"unknown pooling {mode!r}")
    return w


def pool(h: np.ndarray, mask: np.ndarray, mode: str, params: ScorerParams) -> np.ndarray:
    """Aggregate the hidden sequence into one d-vector.

    last: the last unmasked row. mean: arithmetic mean of unmasked rows.
    attention: softmax(H q / sqrt(d)) weights over unmasked rows. With
    q = 0 the attention weights are exactly uniform, so attention pooling
    reproduces mean pooling bit for bit.
    """
    return _pool_weights(h, mask, mode, params) @ h


def score(
    episode: Episode,
    criterion: Criterion,
    cfg: ScorerConfig,
    params: ScorerParams,
    inputs: np.ndarray | None = None,
) -> tuple[float, Activations]:
    """Scalar reward for one episode under one criterion."""
    check_shapes(cfg, params)
    x = episode_input_matrix(episode, cfg) if inputs is None else inputs
    h, mask = encode(episode, criterion, cfg, params, inputs=x)
    w = _pool_weights(h, mask, cfg.pooling, params)
    pooled = w @ h
    a1 = np.tanh(params.w1 @ pooled + params.b1)
    r = float((params.w2 @ a1)[0] + params.b2[0])
    acts = Activations(
        x=x,
        h=h,
        mask=mask,
        pool_weights=w,
        pooled=pooled,
        a1=a1,
        r=r,
        criterion_index=criterion.index,
        pooling=cfg.pooling,
        params=params,
    )
    return r, acts


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


def backward(acts: Activations, upstream: float, cfg: ScorerConfig, params: ScorerParams) -> ScorerParams:
    """Exact gradients of (upstream * r) w.r.t. every parameter tensor.

    ``acts`` must come from a forward pass with the same params object and
    pooling mode; anything else raises STALE_CACHE rather than silently
    producing wrong gradients.
    """
    if acts.params is not params:
        raise StaleCacheError("activations were produced by a different params object")
    if acts.pooling != cfg.pooling:
        raise StaleCacheError(
            f"activations were produced with {acts.pooling!r} pooling, config says {cfg.pooling!r}"
        )
    g = zeros_like_params(params)
    u = float(upstream)

    # Head: r = w2 tanh(w1 p + b1) + b2
    g.b2[0] = u
    g.w2[0, :] = u * acts.a1
    da1 = u * params.w2[0]
    du1 = da1 * (1.0 - acts.a1**2)
    g.w1[...] = np.outer(du1, acts.pooled)
    g.b1[...] = du1
    dpooled = params.w1.T @ du1

    # Pooling: p = w @ H. For attention the weights also depend on H and q.
    w = acts.pool_weights
    dh = np.outer(w, dpooled)
    if acts.pooling == "attention":
        idx = np.flatnonzero(acts.mask)
        scale = 1.0 / math.sqrt(acts.h.shape[1])
        wm = w[idx]
        dwm = acts.h[idx] @ dpooled
        dz = wm * (dwm - float(wm @ dwm))
        dh[idx] += np.outer(dz, params.q) * scale
        g.q[...] = scale * (dz @ acts.h[idx])

    # Criterion row passes through the encoder unchanged.
    g.e_crit[acts.criterion_index] = dh[0]

    # Body rows: h = tanh(w_enc x + b_enc)
    if acts.h.shape[0] > 1:
        hb = acts.h[1:]
        dub = dh[1:] * (1.0 - hb**2)
        g.w_enc[...] = dub.T @ acts.x
        g.b_enc[...] = dub.sum(axis=0)
    return g


# ---------------------------------------------------------------------------
# Checkpoint format: 5 little-endian uint64 header fields
# (version, d_in, d, head_hidden, pooling code), then the parameter
# tensors in declared order as little-endian float64, row-major.
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<QQQQQ")


def save_checkpoint(path: str | Path, cfg: ScorerConfig, params: ScorerParams) -> None:
    check_shapes(cfg, params)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CHECKPOINT_VERSION, cfg.d_in, cfg.d, cfg.head_hidden, _POOLING_CODE[cfg.pooling]))
        for _, tensor in params.tensors():
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ScorerConfig, ScorerParams]:
    """Load a checkpoint; max_frames_per_turn is not serialized and keeps
    its default."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"checkpoint {path} is truncated (no header)")
    version, d_in, d, head_hidden, pool_code = _HEADER.unpack_from(raw)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if pool_code not in _POOLING_FROM_CODE:
        raise ValueError(f"unknown pooling code {pool_code}")
    cfg = ScorerConfig(d_in=int(d_in), d=int(d), pooling=_POOLING_FROM_CODE[pool_code], head_hidden=int(head_hidden))
    shapes = param_shapes(cfg)
    offset = _HEADER.size
    fields = {}
    for name in PARAM_FIELDS:
        shape = shapes[name]
        count = int(np.prod(shape))
        end = offset + count * 8
        if end > len(raw):
            raise ValueError(f"checkpoint {path} is truncated in tensor {name}")
        fields[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset = end
    if offset != len(raw):
        raise ValueError(f"checkpoint {path} has {len(raw) - offset} trailing bytes")
    return cfg, ScorerParams(**fields)


# Convenience arithmetic over parameter containers (used by the optimizer).


def params_map(fn, *trees: ScorerParams) -> ScorerParams:
    out = {}
    for name in PARAM_FIELDS:
        out[name] = fn(*[getattr(t, name) for t in trees])
    return ScorerParams(**out)


def params_dot(a: ScorerParams, b: ScorerParams) -> float:
    return float(sum(np.vdot(getattr(a, n), getattr(b, n)) for n in PARAM_FIELDS))


def params_norm(a: ScorerParams) -> float:
    return math.sqrt(params_dot(a, a))


def params_add(accum: ScorerParams, grad: ScorerParams, scale: float = 1.0) -> None:
    """In-place accumulate: accum += scale * grad."""
    for name in PARAM_FIELDS:
        getattr(accum, name).__iadd__(scale * getattr(grad, name))
