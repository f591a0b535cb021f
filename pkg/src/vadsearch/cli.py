"""Command-line entry point: search, train, eval, synth-data, params, export-arch."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vadsearch",
        description="Cell-based architecture search and training for frame-level "
                    "voice activity detection.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run the Bayesian-optimization search loop")
    p.add_argument("--config", required=True, help="search config JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", action="store_true",
                   help="continue from an existing archive in --out")
    p.add_argument("--baseline-random", action="store_true",
                   help="run the random-search baseline instead of BO")
    p.add_argument("--cheap-benchmark", action="store_true",
                   help="score candidates with the attention-fraction benchmark "
                        "instead of training networks")
    p.add_argument("--jobs", type=int, default=1,
                   help="evaluation parallelism (1 = deterministic)")

    p = sub.add_parser("train", help="train one architecture on a corpus")
    p.add_argument("--arch", required=True, help="architecture JSON file")
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint output path")

    p = sub.add_parser("eval", help="evaluate a checkpoint (boosted AUC / F1)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--csv", help="optional CSV path for the metric dump")

    p = sub.add_parser("synth-data", help="generate a synthetic labeled corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clips", type=int, default=30)
    p.add_argument("--snr-low", type=float, default=-10.0)
    p.add_argument("--snr-high", type=float, default=10.0)
    p.add_argument("--duration", type=float, default=4.0)

    p = sub.add_parser("params", help="print the parameter count of an architecture")
    p.add_argument("--arch", required=True)

    p = sub.add_parser("export-arch", help="write a preset architecture document")
    p.add_argument("--preset", default="discovered", choices=["discovered"])
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--out", required=True)
    return parser


def _cmd_search(args) -> int:
    from .search import Archive, SearchConfig, cheap_evaluator, run_random_search, run_search
    config_path = Path(args.config)
    if not config_path.exists():
        print(f"error: config not found: {config_path}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        cfg = SearchConfig.from_json(config_path.read_text())
    except (ValueError, TypeError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    archive_path = out / "archive.jsonl"
    if archive_path.exists() and not args.resume:
        print(f"error: {archive_path} exists; pass --resume to continue",
              file=sys.stderr)
        return EXIT_USAGE
    evaluator = cheap_evaluator(cfg) if args.cheap_benchmark else None
    runner = run_random_search if args.baseline_random else run_search
    archive = runner(cfg, archive_path, evaluator=evaluator, log=print)
    ranked = sorted(archive.ok_records(), key=lambda r: -r.auc)
    print(f"{'rank':>4}  {'hash':16}  {'auc':>8}  {'params':>9}")
    for rank, rec in enumerate(ranked, start=1):
        print(f"{rank:>4}  {rec.hash:16}  {rec.auc:8.4f}  {rec.params:>9}")
    best = archive.best()
    if best is not None:
        from .arch import serialize_arch
        (out / "best_arch.json").write_text(serialize_arch(best.arch))
        print(f"best architecture written to {out / 'best_arch.json'}")
    return EXIT_OK


class _CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load_arch(path: str):
    from .arch import ArchFormatError, deserialize_arch
    p = Path(path)
    if not p.exists():
        raise _CliError(f"file not found: {p}", EXIT_RUNTIME)
    try:
        return deserialize_arch(p.read_text())
    except ArchFormatError as exc:
        raise _CliError(str(exc), EXIT_USAGE)


def _cmd_train(args) -> int:
    from . import data as vad_data
    from .model import build_model, save_checkpoint
    from .training import TrainConfig, train
    arch = _load_arch(args.arch)
    if not Path(args.data).exists():
        print(f"error: corpus not found: {args.data}", file=sys.stderr)
        return EXIT_RUNTIME
    cfg = TrainConfig(max_epochs=args.epochs, batch_size=args.batch_size,
                      early_stop_patience=min(10, args.epochs), seed=args.seed)
    train_clips = vad_data.load_split(args.data, "train", arch.window_frames,
                                      arch.target_offsets)
    val_clips = vad_data.load_split(args.data, "val", arch.window_frames,
                                    arch.target_offsets)
    model = build_model(arch, rng_seed=args.seed)
    report = train(model, vad_data.stack_split(train_clips),
                   vad_data.stack_split(val_clips), cfg)
    for i, ep in enumerate(report.epochs):
        print(f"epoch {i:3d}  train_loss {ep.train_loss:.4f}  "
              f"val_loss {ep.val_loss:.4f}  val_auc {ep.val_auc:.4f}")
    print(f"stop: {report.stop_reason} (best epoch {report.best_epoch})")
    save_checkpoint(args.out, model, extra={"stop_reason": report.stop_reason,
                                            "best_epoch": report.best_epoch})
    print(f"checkpoint written to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from . import data as vad_data
    from .arch import canonical_hash
    from .model import load_checkpoint
    from .search import boosted_auc
    if not Path(args.checkpoint).exists():
        print(f"error: checkpoint not found: {args.checkpoint}", file=sys.stderr)
        return EXIT_RUNTIME
    if not Path(args.data).exists():
        print(f"error: corpus not found: {args.data}", file=sys.stderr)
        return EXIT_RUNTIME
    model, _ = load_checkpoint(args.checkpoint)
    arch = model.arch
    clips = vad_data.load_split(args.data, args.split, arch.window_frames,
                                arch.target_offsets)
    auc_value, f1_value = boosted_auc(model, clips, arch.target_offsets,
                                      return_f1=True)
    print(f"AUC {auc_value:.4f}")
    print(f"F1  {f1_value:.4f} (threshold 0.5)")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("metric,value,threshold,arch_hash\n")
            h = canonical_hash(arch.cell)
            fh.write(f"auc,{auc_value:.6f},,{h}\n")
            fh.write(f"f1,{f1_value:.6f},0.5,{h}\n")
        print(f"metrics written to {args.csv}")
    return EXIT_OK


def _cmd_synth_data(args) -> int:
    from .data import make_corpus
    try:
        manifest = make_corpus(args.out, n_clips=args.clips, seed=args.seed,
                               snr_low_db=args.snr_low, snr_high_db=args.snr_high,
                               duration_s=args.duration)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wrote {len(manifest['records'])} clips to {args.out}")
    return EXIT_OK


def _cmd_params(args) -> int:
    from .model import build_model, count_params
    arch = _load_arch(args.arch)
    print(count_params(build_model(arch)))
    return EXIT_OK


def _cmd_export_arch(args) -> int:
    from .arch import discovered_arch, serialize_arch
    arch = discovered_arch(base_channels=args.channels)
    Path(args.out).write_text(serialize_arch(arch))
    print(f"architecture written to {args.out}")
    return EXIT_OK


_HANDLERS = {
    "search": _cmd_search,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "synth-data": _cmd_synth_data,
    "params": _cmd_params,
    "export-arch": _cmd_export_arch,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return _HANDLERS[args.command](args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
