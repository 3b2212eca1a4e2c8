"""From raw diarized segments to a stratified benchmark.

Shows the whole curation path: grouping rules (interval, duration cap,
two-dominant-speaker assumption, density floor, even-turn repair),
structural filtering with exhaustive violation codes, judge-threshold
filtering, and the capped per-bucket benchmark sampler.
"""

import numpy as np

from episcore import (
    GroupingConfig,
    HeuristicJudge,
    Segment,
    SegmentManifest,
    filter_by_judge,
    filter_structural,
    group_segments,
    stratify_bench,
    synth_config,
    synth_pairs,
    validate_episode,
)
from episcore.episodes import write_features

rng = np.random.default_rng(0)
d_in = 8

# A synthetic "diarization output": mostly two speakers trading turns,
# with occasional interruptions from a third voice and some long pauses.
feat_dir = __import__("tempfile").mkdtemp(prefix="episcore-demo-")
records = []
clock = 0.0
for i in range(60):
    speaker = ["host", "guest", "host", "guest", "crowd"][rng.integers(0, 5) if i % 7 == 6 else i % 2]
    duration = float(rng.uniform(2.0, 25.0))
    if rng.random() < 0.1:
        clock += float(rng.uniform(20.0, 120.0))  # a long silence splits groups
    path = f"{feat_dir}/seg-{i:03d}.f32"
    write_features(path, rng.standard_normal((int(duration * 2), d_in)).astype(np.float32))
    records.append(Segment(speaker, clock, clock + duration, f"segment {i} text", path))
    clock += duration

manifest = SegmentManifest(records)
episodes = group_segments(manifest, GroupingConfig(), source_tier="wild")
print(f"{len(records)} segments -> {len(episodes)} candidate episodes")
for ep in episodes[:5]:
    print(f"  {ep.episode_id}: T={ep.n_turns}, speech={ep.total_speech_s:.1f}s, violations={validate_episode(ep)}")

kept, rejected = filter_structural(episodes)
print(f"structural filter: kept {len(kept)}, rejected {len(rejected)}")
for ep, codes in rejected[:3]:
    print(f"  rejected {ep.episode_id}: {codes}")

# Judge filtering and stratification operate on preference pairs; use the
# synthetic generator for a quick supply of them.
pairs = synth_pairs(synth_config(seed=3), 240, split="val")
kept_pairs = filter_by_judge(pairs, HeuristicJudge())
print(f"judge filter kept {len(kept_pairs)}/{len(pairs)} pairs")

bench = stratify_bench(kept_pairs, cap=15, seed=0)
buckets = {}
for p in bench:
    key = (p.source_tier, p.chosen.metadata["secondary_dimension"])
    buckets[key] = buckets.get(key, 0) + 1
print(f"stratified benchmark: {len(bench)} pairs across {len(buckets)} buckets (cap 15)")
for key in sorted(buckets):
    print(f"  {key[0]:>10} / {key[1]:<14} {buckets[key]}")
