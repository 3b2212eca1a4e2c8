"""Micro/macro aggregation, agreement tables, and report files.

The evaluation harness is score-source agnostic: here it runs on
hand-written per-subset numbers and on a synthetic score file.
"""

import numpy as np

from episcore import ScoredPair, aggregate, agreement_stats, build_report, confidence_buckets
from episcore.evaluation import format_percent, report_csv

# Aggregation from per-subset accuracies (percent) and pair counts. Micro
# weights by count; macro averages subsets, penalizing single-regime
# overfitting.
acc = {"wild": 100.00, "semi-wild": 92.47, "scripted": 92.27, "colloquial": 97.20}
counts = {"wild": 824, "semi-wild": 186, "scripted": 466, "colloquial": 250}
aggs = aggregate(acc, counts)
print("aggregates from per-subset accuracies:")
for name in ("modality_micro", "modality_macro", "colloq_acc", "overall_micro", "overall_macro"):
    print(f"  {name:>15}: {getattr(aggs, name):.2f}")

# Human-agreement rows: (subset, count, avg margin, agree rate).
rows, overall = agreement_stats(
    [
        ("high_confidence", 20, 1.65, 0.883),
        ("low_confidence", 20, 0.06, 0.783),
        ("random_sampling", 20, 0.77, 0.767),
        ("model_wrong", 15, -0.19, 0.933),
    ]
)
print("\nagreement table (rate +- binomial SE):")
for row in rows + [overall]:
    print(
        f"  {row.subset_name:>15}: n={row.count:<3} margin={row.avg_margin:+.2f} "
        f"rate={format_percent(row.agree_rate)}% +- {format_percent(row.se)}%"
    )

# A full report from per-pair scores.
rng = np.random.default_rng(1)
scored = []
for subset in ("wild", "semi-wild", "scripted", "colloquial"):
    for i in range(40):
        margin = rng.normal(1.2, 1.0)
        base = rng.normal(0.0, 0.4)
        scored.append(ScoredPair(f"{subset}-{i}", base + margin / 2, base - margin / 2, subset, "modality"))

report = build_report(scored)
print("\nscore-file report (CSV row, percent):")
print(report_csv(report))
buckets = confidence_buckets(scored)
print(
    f"confidence buckets: high={len(buckets['high_confidence'])} "
    f"low={len(buckets['low_confidence'])} mis-ranked={len(buckets['mis_ranked'])}"
)
