import numpy as np
import pytest

from episcore import Criterion, Episode, PreferencePair, Turn

D_IN = 4


def make_turn(speaker="spk-a", transcript="yeah okay", duration=5.0, n_frames=3, d_in=D_IN, fill=0.5, **kw):
    feats = np.full((n_frames, d_in), fill, dtype=np.float32)
    return Turn(speaker, transcript, duration, feats, **kw)


def make_episode(n_turns=2, episode_id="ep-0", tier="wild", duration=5.0, metadata=None, d_in=D_IN):
    turns = [
        make_turn(speaker="spk-a" if i % 2 == 0 else "spk-b", duration=duration, d_in=d_in)
        for i in range(n_turns)
    ]
    return Episode(episode_id, turns, tier, metadata or {})


def make_pair(pair_id="pair-0", n_turns=2, tier="wild", criterion=Criterion.MODALITY, split="train", metadata=None):
    meta = metadata or {"primary_dimension": "neutral", "secondary_dimension": "laughter"}
    return PreferencePair(
        pair_id=pair_id,
        chosen=make_episode(n_turns, f"{pair_id}-c", tier, metadata=dict(meta)),
        rejected=make_episode(n_turns, f"{pair_id}-r", tier, metadata=dict(meta)),
        criterion=criterion,
        split=split,
    )


@pytest.fixture
def tiny_pair():
    return make_pair()
