"""Command-line front end: generate / track / eval / ablate.

Every failure exits nonzero after printing one machine-readable JSON object
to stderr. Same inputs and seed produce byte-identical output payloads;
wall-clock timings live in timing.json sidecars only. HCOT_WORKERS caps the
per-sequence worker pool.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__, dataio, metrics, synthetic
from .tracker import track_sequence
from .types import TrackerConfig

GENERATORS = ("spdan_toy", "spectral_correlation")


def _worker_count() -> int:
    env = os.environ.get("HCOT_WORKERS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("HCOT_WORKERS must be >= 1")
        return n
    return min(4, os.cpu_count() or 1)


def cmd_generate(args) -> None:
    if args.suite != "standard":
        raise ValueError(f"unknown suite {args.suite!r}")
    out = Path(args.out)
    specs = synthetic.standard_suite(args.seed)
    entries = []
    for spec in specs:
        seq = synthetic.generate(spec)
        dataio.write_sequence(seq, out / spec.name)
        entries.append(dataio.dataset_entry(seq, spec.name))
    manifest_path = out / "manifest.json"
    dataio.write_dataset_manifest(entries, out)
    # record suite provenance alongside the schema fields
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    manifest["suite"] = {"name": args.suite, "seed": args.seed}
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(entries)} sequences to {out}")


def _load_track_config(args) -> TrackerConfig:
    cfg = dataio.read_config(args.config) if args.config else TrackerConfig.desk()
    overrides = {}
    if getattr(args, "no_dam", False):
        overrides["use_dam"] = False
    if getattr(args, "rgb_only", False):
        overrides["rgb_only"] = True
    if getattr(args, "generator", None):
        overrides["response_generator"] = args.generator
    return cfg.with_overrides(**overrides) if overrides else cfg


def _track_dataset(data_dir: Path, out_dir: Path, cfg: TrackerConfig) -> None:
    entries = dataio.read_dataset_manifest(data_dir)

    def run_one(entry):
        seq = dataio.read_sequence(data_dir / entry["path"])
        run = track_sequence(seq, cfg)
        dataio.write_track_run(run, out_dir / entry["name"])
        return entry["name"]

    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        for name in pool.map(run_one, entries):
            print(f"tracked {name}")


def cmd_track(args) -> None:
    cfg = _load_track_config(args)
    _track_dataset(Path(args.data), Path(args.out), cfg)


def _evaluate(runs_dir: Path, data_dir: Path) -> metrics.EvalResult:
    entries = dataio.read_dataset_manifest(data_dir)
    evals = []
    for entry in entries:
        run_dir = runs_dir / entry["name"]
        if not (run_dir / "run.json").is_file():
            raise dataio.ManifestError(f"no run found for sequence {entry['name']!r} in {runs_dir}")
        run = dataio.read_track_run(run_dir)
        seq = dataio.read_sequence(data_dir / entry["path"])
        evals.append(
            metrics.SequenceEval.from_boxes(
                entry["name"], run.boxes, seq.annotations[1:], seq.attributes
            )
        )
    return metrics.aggregate(evals)


def cmd_eval(args) -> None:
    result = _evaluate(Path(args.runs), Path(args.data))
    dataio.write_eval_report(result, Path(args.out))
    print(f"auc {result.auc:.4f}  dp20 {result.dp20:.4f}")


ABLATION_VARIANTS = (
    ("spectral_no_dam", {"use_dam": False, "rgb_only": False}),
    ("spectral_dam", {"use_dam": True, "rgb_only": False}),
    ("rgb_no_dam", {"use_dam": False, "rgb_only": True}),
    ("rgb_dam", {"use_dam": True, "rgb_only": True}),
)


def cmd_ablate(args) -> None:
    data_dir = Path(args.data)
    out_dir = Path(args.out)
    base_cfg = dataio.read_config(args.config) if args.config else TrackerConfig.desk()
    rows = []
    for name, overrides in ABLATION_VARIANTS:
        cfg = base_cfg.with_overrides(**overrides)
        runs_dir = out_dir / name / "runs"
        _track_dataset(data_dir, runs_dir, cfg)
        result = _evaluate(runs_dir, data_dir)
        dataio.write_eval_report(result, out_dir / name / "eval")
        rows.append({"variant": name, "auc": result.auc, "dp20": result.dp20})
    base = rows[0]
    for row in rows:
        row["delta_auc"] = row["auc"] - base["auc"]
        row["delta_dp20"] = row["dp20"] - base["dp20"]
    payload = {"format_version": dataio.FORMAT_VERSION, "baseline": base["variant"], "rows": rows}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ablate.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    lines = ["variant,auc,dp20,delta_auc,delta_dp20"]
    for row in rows:
        lines.append(
            f"{row['variant']},{row['auc']!r},{row['dp20']!r},"
            f"{row['delta_auc']!r},{row['delta_dp20']!r}"
        )
    (out_dir / "ablate.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for row in rows:
        print(
            f"{row['variant']:>16}  auc {row['auc']:.4f} ({row['delta_auc']:+.4f})"
            f"  dp20 {row['dp20']:.4f} ({row['delta_dp20']:+.4f})"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hcot",
        description="Hyperspectral camouflaged-object tracking testbed",
    )
    parser.add_argument(
        "--version", action="version",
        version=f"hcot {__version__} format_version {dataio.FORMAT_VERSION}",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic benchmark suite")
    p.add_argument("--suite", default="standard", help="suite name (standard)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("track", help="run the tracker over a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="tracker config JSON (default: desk scale)")
    p.add_argument("--out", required=True)
    p.add_argument("--no-dam", action="store_true", dest="no_dam",
                   help="disable the distractor-aware module")
    p.add_argument("--rgb-only", action="store_true", dest="rgb_only",
                   help="restrict features to the false-color bands")
    p.add_argument("--generator", choices=GENERATORS, default=None)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score runs against ground truth")
    p.add_argument("--runs", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="paired DAM/spectral ablation runs with deltas")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # report every failure as machine-readable JSON
        error = {"error": {"kind": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
