"""Command-line entry point.

One binary, subcommand style. Every invocation resolves its configuration
up front, records it (plus artifact versions and the seed) in a
run-manifest.json under --out-dir, and only then runs. All randomness
flows from the single recorded seed, so reruns with identical inputs are
byte-identical. The default seed comes from $EPISCORE_SEED when the flag
is omitted.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, config as configio, evaluation, gradcheck, pipeline, scorer, training
from .episodes import read_pairs, read_segments, write_episodes, write_pairs, read_episodes
from .errors import EmptySetError, EpiscoreError, ManifestParseError

SEED_ENV_VAR = "EPISCORE_SEED"


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV_VAR, "0"))


def _resolve(out_dir: str, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else Path(out_dir) / p


def _write_run_manifest(args: argparse.Namespace, out_dir: Path) -> None:
    record = {
        "subcommand": args.subcommand,
        "config": {
            k: v for k, v in sorted(vars(args).items()) if k not in ("func", "subcommand") and v is not None
        },
        "versions": {
            "episcore": __version__,
            "numpy": np.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run-manifest.json").write_text(
        json.dumps(record, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    entries = configio.parse_kv_file(args.config) if args.config else {}
    if args.seed is not None:
        entries["seed"] = str(args.seed)
    cfg = configio.synth_config(entries)
    pairs = pipeline.synth_pairs(cfg, args.n, split=args.split)
    out = _resolve(args.out_dir, args.out)
    write_pairs(pairs, out)
    print(f"wrote {len(pairs)} pairs to {out}")
    return 0


def cmd_pipeline_group(args) -> int:
    manifest = read_segments(args.manifest)
    entries = configio.parse_kv_file(args.config) if args.config else {}
    cfg = configio.grouping_config(entries)
    episodes = pipeline.group_segments(manifest, cfg, source_tier=args.tier)
    out = _resolve(args.out_dir, args.out)
    write_episodes(episodes, out)
    print(f"grouped {len(manifest.records)} segments into {len(episodes)} episodes at {out}")
    return 0


def cmd_pipeline_filter(args) -> int:
    episodes = read_episodes(args.input)
    kept, rejected = pipeline.filter_structural(episodes)
    out = _resolve(args.out_dir, args.out)
    write_episodes(kept, out)
    rejects_path = _resolve(args.out_dir, args.rejects)
    rejects_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        json.dumps({"episode_id": ep.episode_id, "violations": codes}, separators=(",", ":"))
        for ep, codes in rejected
    ]
    rejects_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    print(f"kept {len(kept)}, rejected {len(rejected)} (codes in {rejects_path})")
    return 0


def cmd_pipeline_stratify(args) -> int:
    pairs = read_pairs(args.input)
    train_ids = frozenset()
    if args.train_ids:
        train_ids = frozenset(
            line.strip() for line in Path(args.train_ids).read_text(encoding="utf-8").splitlines() if line.strip()
        )
    bench = pipeline.stratify_bench(pairs, cap=args.cap, seed=args.seed, train_ids=train_ids)
    out = _resolve(args.out_dir, args.out)
    write_pairs(bench, out)
    print(f"stratified {len(pairs)} pairs into a benchmark of {len(bench)} at {out}")
    return 0


def cmd_train(args) -> int:
    entries = configio.parse_kv_file(args.config) if args.config else {}
    scorer_cfg = configio.scorer_config(entries)
    train_cfg = configio.train_config(entries, seed=args.seed)
    pairs = read_pairs(args.pairs)
    val_pairs = read_pairs(args.val) if args.val else []
    out_dir = Path(args.out_dir)
    result = training.train(pairs, val_pairs, scorer_cfg, train_cfg, checkpoint_dir=out_dir / "checkpoints")
    history_path = out_dir / "history.jsonl"
    with open(history_path, "w", encoding="utf-8") as fh:
        for report in result.history:
            fh.write(json.dumps(dataclasses.asdict(report), separators=(",", ":")) + "\n")
    best_path = out_dir / "best.ckpt"
    scorer.save_checkpoint(best_path, scorer_cfg, result.best_params)
    print(
        f"trained {train_cfg.total_steps} steps; best val loss {result.best_val_loss:.6f} "
        f"at step {result.best_step}; checkpoint at {best_path}"
    )
    return 0


def cmd_score(args) -> int:
    pairs = read_pairs(args.pairs)
    cfg, params = scorer.load_checkpoint(args.checkpoint)
    scored = []
    for pair in pairs:
        rc, _ = scorer.score(pair.chosen, pair.criterion, cfg, params)
        rr, _ = scorer.score(pair.rejected, pair.criterion, cfg, params)
        scored.append(
            evaluation.ScoredPair(
                pair_id=pair.pair_id,
                r_chosen=rc,
                r_rejected=rr,
                subset=pair.source_tier,
                criterion=pair.criterion.value,
            )
        )
    out = _resolve(args.out_dir, args.out)
    evaluation.write_scores(scored, out)
    print(f"scored {len(scored)} pairs to {out}")
    return 0


def cmd_eval(args) -> int:
    scored = evaluation.read_scores(args.scores)
    if not scored:
        raise EmptySetError(f"score file {args.scores} is empty")
    if args.pairs:
        by_id = {p.pair_id: p for p in read_pairs(args.pairs)}
        for s in scored:
            pair = by_id.get(s.pair_id)
            if pair is None:
                raise ManifestParseError(f"scored pair {s.pair_id} not present in {args.pairs}")
            if pair.source_tier != s.subset:
                raise ManifestParseError(
                    f"pair {s.pair_id}: subset {s.subset!r} does not match manifest tier {pair.source_tier!r}"
                )
    report = evaluation.build_report(scored)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    (out_dir / "report.csv").write_text(evaluation.report_csv(report), encoding="utf-8")
    print(
        f"evaluated {len(scored)} pairs: overall micro "
        f"{evaluation.format_percent(report.overall_micro)}%, reports in {out_dir}"
    )
    return 0


def cmd_agreement(args) -> int:
    rows = []
    with open(args.rows, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                (
                    rec["subset"],
                    int(rec["count"]),
                    float(rec["avg_margin"]),
                    float(rec["agree_rate"]),
                )
            )
    per_subset, overall = evaluation.agreement_stats(rows)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "rows": [dataclasses.asdict(r) for r in per_subset],
        "overall": dataclasses.asdict(overall),
    }
    (out_dir / "agreement.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    with open(out_dir / "agreement.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subset", "count", "avg_margin", "agree_rate", "se"])
        for r in per_subset + [overall]:
            writer.writerow([r.subset_name, r.count, r.avg_margin, r.agree_rate, f"{r.se:.6f}"])
    print(
        f"overall agreement {evaluation.format_percent(overall.agree_rate)}% "
        f"(se {evaluation.format_percent(overall.se)}%) over {overall.count} pairs"
    )
    return 0


def cmd_gradcheck(args) -> int:
    report = gradcheck.run_gradcheck(
        n_draws=args.draws,
        seed=args.seed,
        tol=args.tol,
        corrupt_group=args.corrupt_group,
    )
    out = _resolve(args.out_dir, args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    verdict = "PASS" if report.passed else "FAIL"
    print(
        f"gradcheck {verdict}: max rel err {report.max_rel_err:.3e} "
        f"(worst group {report.worst_group}) over {report.n_draws} draws; report at {out}"
    )
    return 0 if report.passed else 1


def cmd_e2e(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    synth_cfg = pipeline.synth_config(d_in=args.d_in, seed=args.seed, noise_std=args.noise_std)
    train_pairs = pipeline.synth_pairs(synth_cfg, args.n_train, split="train")
    val_cfg = dataclasses.replace(synth_cfg, seed=synth_cfg.seed + 1)
    val_pairs = pipeline.synth_pairs(val_cfg, args.n_val, split="val")
    write_pairs(train_pairs, out_dir / "train.jsonl")
    write_pairs(val_pairs, out_dir / "val.jsonl")

    scorer_cfg = scorer.ScorerConfig(d_in=args.d_in, pooling=args.pooling)
    train_cfg = training.TrainConfig(
        total_steps=args.steps,
        lambda_center=args.lambda_center,
        seed=args.seed,
    )
    result = training.train(train_pairs, val_pairs, scorer_cfg, train_cfg, checkpoint_dir=out_dir / "checkpoints")
    with open(out_dir / "history.jsonl", "w", encoding="utf-8") as fh:
        for report in result.history:
            fh.write(json.dumps(dataclasses.asdict(report), separators=(",", ":")) + "\n")
    scorer.save_checkpoint(out_dir / "best.ckpt", scorer_cfg, result.best_params)

    rc, rr = training.score_pairs(val_pairs, scorer_cfg, result.best_params)
    scored = [
        evaluation.ScoredPair(p.pair_id, float(c), float(r), p.source_tier, p.criterion.value)
        for p, c, r in zip(val_pairs, rc, rr)
    ]
    evaluation.write_scores(scored, out_dir / "val-scores.jsonl")
    report = evaluation.build_report(scored)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    (out_dir / "report.csv").write_text(evaluation.report_csv(report), encoding="utf-8")

    summary = {
        "seed": args.seed,
        "lambda_center": args.lambda_center,
        "steps": args.steps,
        "best_step": result.best_step,
        "best_val_loss": result.best_val_loss,
        "val_accuracy": float(np.mean(rc > rr)),
        "drift": float(np.mean(rc + rr)),
        "mean_margin": float(np.mean(rc - rr)),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(
        f"e2e done: val accuracy {summary['val_accuracy']:.4f}, "
        f"drift {summary['drift']:+.4f}, margin {summary['mean_margin']:.4f} (summary in {out_dir})"
    )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser, seed: bool = True) -> None:
    parser.add_argument("--out-dir", default=".", help="directory for outputs and run-manifest.json")
    if seed:
        parser.add_argument(
            "--seed",
            type=int,
            default=None,
            help=f"random seed (default: ${SEED_ENV_VAR} or 0)",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="episcore", description=__doc__)
    parser.add_argument("--version", action="version", version=f"episcore {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate synthetic planted-signature preference pairs")
    p.add_argument("--config", help="flat key-value synthesis config file")
    p.add_argument("--n", type=int, required=True, help="number of pairs")
    p.add_argument("--out", required=True, help="output pair manifest (JSONL)")
    p.add_argument("--split", default="train", choices=("train", "val", "bench"))
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    pipe = sub.add_parser("pipeline", help="episode construction and dataset curation")
    pipe_sub = pipe.add_subparsers(dest="pipeline_command", required=True)

    p = pipe_sub.add_parser("group", help="group raw segments into candidate episodes")
    p.add_argument("--manifest", required=True, help="segment manifest (JSONL)")
    p.add_argument("--config", help="flat key-value grouping config file")
    p.add_argument("--out", required=True, help="output episode manifest (JSONL)")
    p.add_argument("--tier", default="wild", help="source tier recorded on grouped episodes")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_pipeline_group)

    p = pipe_sub.add_parser("filter", help="partition episodes by the structural rules")
    p.add_argument("--in", dest="input", required=True, help="input episode manifest")
    p.add_argument("--out", required=True, help="output manifest of kept episodes")
    p.add_argument("--rejects", required=True, help="output JSONL of rejected ids + violation codes")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_pipeline_filter)

    p = pipe_sub.add_parser("stratify", help="balanced per-bucket benchmark sampling")
    p.add_argument("--in", dest="input", required=True, help="input pair manifest")
    p.add_argument("--cap", type=int, default=50, help="per-bucket retention cap")
    p.add_argument("--out", required=True, help="output benchmark pair manifest")
    p.add_argument("--train-ids", help="file of train pair ids to exclude (one per line)")
    _add_common(p)
    p.set_defaults(func=cmd_pipeline_stratify)

    p = pipe_sub.add_parser("synth", help="alias of the top-level synth subcommand")
    p.add_argument("--config", help="flat key-value synthesis config file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train", choices=("train", "val", "bench"))
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the scorer on a pair manifest")
    p.add_argument("--pairs", required=True, help="training pair manifest")
    p.add_argument("--val", help="validation pair manifest")
    p.add_argument("--config", help="flat key-value scorer + training config file")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a pair manifest with a checkpoint")
    p.add_argument("--pairs", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output score file (JSONL)")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="build accuracy/margin reports from a score file")
    p.add_argument("--scores", required=True, help="score file (JSONL)")
    p.add_argument("--pairs", help="optional pair manifest to cross-check ids and subsets")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("agreement", help="human-agreement table with binomial standard errors")
    p.add_argument("--rows", required=True, help="CSV with subset,count,avg_margin,agree_rate columns")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("gradcheck", help="finite-difference verification of the scorer gradients")
    p.add_argument("--draws", type=int, default=100)
    p.add_argument("--tol", type=float, default=gradcheck.DEFAULT_TOL)
    p.add_argument("--out", default="gradcheck-report.json")
    p.add_argument("--corrupt-group", help=argparse.SUPPRESS)
    _add_common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("e2e", help="synth -> train -> score -> eval in one seeded run")
    p.add_argument("--n-train", type=int, default=800)
    p.add_argument("--n-val", type=int, default=200)
    p.add_argument("--steps", type=int, default=1200)
    p.add_argument("--lambda-center", type=float, default=1e-2)
    p.add_argument("--noise-std", type=float, default=0.25)
    p.add_argument("--d-in", type=int, default=8)
    p.add_argument("--pooling", default="mean", choices=scorer.POOLING_MODES)
    _add_common(p)
    p.set_defaults(func=cmd_e2e)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None and hasattr(args, "seed"):
        args.seed = _default_seed()
    out_dir = Path(getattr(args, "out_dir", "."))
    try:
        _write_run_manifest(args, out_dir)
        return args.func(args)
    except EpiscoreError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
