"""Finite-difference verification of the scorer's reverse-mode gradients.

Central differences with h = 1e-5 in float64 give truncation error around
1e-10 for O(1) rewards, so a relative tolerance of 1e-4 has orders of
magnitude of headroom; any real gradient bug lands far outside it. The
relative error uses a small scale floor so components whose true gradient
is exactly zero (for example the attention query under mean pooling) do
not divide by zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import scorer
from .episodes import Criterion, Episode, Turn
from .scorer import PARAM_FIELDS, POOLING_MODES, ScorerConfig, ScorerParams

DEFAULT_STEP = 1e-5
DEFAULT_TOL = 1e-4
REL_ERR_FLOOR = 1e-4


def relative_error(analytic: float, numeric: float, floor: float = REL_ERR_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def numerical_gradient(f, params: ScorerParams, h: float = DEFAULT_STEP) -> ScorerParams:
    """Central finite differences of scalar f(params) w.r.t. every entry."""
    grads = scorer.zeros_like_params(params)
    for name in PARAM_FIELDS:
        tensor = getattr(params, name)
        grad = getattr(grads, name)
        flat = tensor.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            up = f(params)
            flat[i] = original - h
            down = f(params)
            flat[i] = original
            gflat[i] = (up - down) / (2.0 * h)
    return grads


def random_case(rng: np.random.Generator) -> tuple[ScorerConfig, ScorerParams, Episode, Criterion]:
    """A small random (config, params, episode, criterion) draw."""
    d_in = int(rng.integers(3, 7))
    cfg = ScorerConfig(
        d_in=d_in,
        d=int(rng.integers(4, 9)),
        head_hidden=int(rng.integers(3, 8)),
        max_frames_per_turn=6,
    )
    params = scorer.init_params(cfg, seed=int(rng.integers(0, 2**31)))
    vocab = ["yeah", "so", "okay", "right", "well", "um"]
    turns = []
    n_turns = int(rng.integers(1, 4))
    for t in range(n_turns):
        n_frames = int(rng.integers(1, 5))
        n_words = int(rng.integers(0, 4))
        words = " ".join(vocab[int(w)] for w in rng.integers(0, len(vocab), size=n_words))
        feats = rng.standard_normal((n_frames, d_in))
        turns.append(Turn(f"spk-{t % 2}", words, n_frames * 0.5, feats))
    episode = Episode("gradcheck-ep", turns, "wild")
    criterion = Criterion.MODALITY if rng.integers(0, 2) == 0 else Criterion.COLLOQUIALNESS
    return cfg, params, episode, criterion


@dataclass
class GroupResult:
    max_rel_err: float = 0.0
    worst_draw: int = -1
    worst_mode: str = ""
    worst_index: int = -1

    def to_dict(self) -> dict:
        return {
            "max_rel_err": self.max_rel_err,
            "worst_draw": self.worst_draw,
            "worst_mode": self.worst_mode,
            "worst_index": self.worst_index,
        }


@dataclass
class GradcheckReport:
    passed: bool
    tolerance: float
    n_draws: int
    modes: tuple[str, ...]
    groups: dict[str, GroupResult] = field(default_factory=dict)

    @property
    def max_rel_err(self) -> float:
        return max((g.max_rel_err for g in self.groups.values()), default=0.0)

    @property
    def worst_group(self) -> str:
        return max(self.groups, key=lambda name: self.groups[name].max_rel_err)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tolerance": self.tolerance,
            "n_draws": self.n_draws,
            "modes": list(self.modes),
            "max_rel_err": self.max_rel_err,
            "worst_group": self.worst_group,
            "groups": {name: g.to_dict() for name, g in self.groups.items()},
        }


def run_gradcheck(
    n_draws: int = 100,
    seed: int = 0,
    h: float = DEFAULT_STEP,
    tol: float = DEFAULT_TOL,
    modes: tuple[str, ...] = POOLING_MODES,
    corrupt_group: str | None = None,
) -> GradcheckReport:
    """Compare reverse-mode and finite-difference gradients over random
    draws of (params, episode, criterion) for every pooling mode.

    ``corrupt_group`` is a fault-injection hook for tests: it perturbs
    that gradient group before comparison, which must make the check fail.
    """
    rng = np.random.default_rng(seed)
    groups = {name: GroupResult() for name in PARAM_FIELDS}
    for draw in range(n_draws):
        cfg, params, episode, criterion = random_case(rng)
        inputs = scorer.episode_input_matrix(episode, cfg)
        for mode in modes:
            mode_cfg = ScorerConfig(
                d_in=cfg.d_in,
                d=cfg.d,
                pooling=mode,
                head_hidden=cfg.head_hidden,
                max_frames_per_turn=cfg.max_frames_per_turn,
            )
            _, acts = scorer.score(episode, criterion, mode_cfg, params, inputs=inputs)
            analytic = scorer.backward(acts, 1.0, mode_cfg, params)
            if corrupt_group is not None:
                getattr(analytic, corrupt_group)[...] += 1e-2
            numeric = numerical_gradient(
                lambda p: scorer.score(episode, criterion, mode_cfg, p, inputs=inputs)[0],
                params,
                h=h,
            )
            for name in PARAM_FIELDS:
                a = getattr(analytic, name).reshape(-1)
                nmr = getattr(numeric, name).reshape(-1)
                for i in range(a.size):
                    err = relative_error(a[i], nmr[i])
                    if err > groups[name].max_rel_err:
                        groups[name] = GroupResult(err, draw, mode, i)
    passed = all(g.max_rel_err < tol for g in groups.values())
    return GradcheckReport(passed=passed, tolerance=tol, n_draws=n_draws, modes=tuple(modes), groups=groups)
