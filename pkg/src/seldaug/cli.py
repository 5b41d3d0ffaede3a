"""Command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 some items failed
(the manifest is still written), 3 nothing to produce (empty inventory, no
reference events).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset
from .acs import apply_to_audio, apply_to_labels, get_transform
from .annotations import CLASS_NAMES
from .exceptions import ConfigInvalid, NoReferences, SeldAugError
from .features import read_features, write_features
from .metrics import SeldEvaluator
from .mix_mask import TfmConfig, render_plan, tfm_apply, tfm_plan
from .pipeline import STAGES, PipelineConfig, run

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_EMPTY = 0, 1, 2, 3

log = logging.getLogger("seldaug")


def _common(p: argparse.ArgumentParser, io: bool = True) -> None:
    p.add_argument("--config", type=Path, help="YAML pipeline config")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--workers", type=int, help="worker processes")
    if io:
        p.add_argument("--input", type=Path, help="dataset directory (mic/, foa/, metadata/)")
        p.add_argument("--output", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seldaug", description="SELD data augmentation toolkit")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the configured stages")
    _common(p)
    p.add_argument("--stage", choices=STAGES, help="run a single stage")

    p = sub.add_parser("acs", help="audio channel swapping")
    _common(p)
    p.add_argument("--patterns", type=int, nargs="+", help="table rows 1..8 (default all)")
    p.add_argument("--format", choices=("mic", "foa"), default="mic",
                   help="channel layout when --input is a single 4-channel WAV")
    p.add_argument("--metadata", type=Path, help="labels for a single-file --input")

    p = sub.add_parser("mcs", help="multichannel simulation")
    _common(p)
    p.add_argument("--n-outputs", type=int)
    p.add_argument("--em-iterations", type=int)

    p = sub.add_parser("tdm", help="time-domain mixing")
    _common(p)
    p.add_argument("--n-outputs", type=int)

    p = sub.add_parser("features", help="write feature files")
    _common(p)

    p = sub.add_parser("tfm-preview", help="show (or apply) time-frequency mask placements")
    _common(p, io=False)
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--max-time-mask", type=int, default=35)
    p.add_argument("--time-mask-period", type=int, default=100)
    p.add_argument("--max-freq-mask", type=int, default=30)
    p.add_argument("--features", type=Path, help="feature file to mask")
    p.add_argument("--output", type=Path, help="where to write the masked feature file")

    p = sub.add_parser("evaluate", help="score prediction CSVs against references")
    p.add_argument("--ref", type=Path, required=True)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=20.0)
    p.add_argument("--json", type=Path, help="also write the report as JSON here")
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("inventory", help="list solo event segments as JSON lines")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--min-frames", type=int, default=dataset.MIN_SEGMENT_FRAMES)
    p.add_argument("--static-tolerance", type=float, default=dataset.STATIC_TOLERANCE)
    return ap


# --------------------------------------------------------------------------

def _stage_config(args, stage: str) -> PipelineConfig:
    """Config for a single-stage subcommand: from --config, or from flags."""
    if args.config is not None:
        cfg = PipelineConfig.load(args.config)
    else:
        if args.input is None or args.output is None:
            raise ConfigInvalid("input" if args.input is None else "output",
                                "give --config or both --input and --output")
        stages = {s: {"enabled": s == stage} for s in STAGES}
        cfg = PipelineConfig.from_dict({"input": str(args.input), "output": str(args.output),
                                        "stages": stages})
    overrides = {"input": args.input, "output": args.output}
    for k, v in overrides.items():
        if v is not None and args.config is not None:
            setattr(cfg, k, v)
    st = cfg.stages[stage]
    if getattr(args, "patterns", None):
        st["patterns"] = list(args.patterns)
    if getattr(args, "n_outputs", None) is not None:
        st["n_outputs"] = args.n_outputs
    if getattr(args, "em_iterations", None) is not None:
        st["em_iterations"] = args.em_iterations
    _apply_globals(cfg, args)
    return cfg


def _apply_globals(cfg: PipelineConfig, args) -> None:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    cfg.validate()


def _report_run(result) -> int:
    for stage, entry in result.manifest["stages"].items():
        if entry.get("enabled") and "input_hours" in entry:
            print(f"{stage:9s} in {entry['input_hours']:.4f} h  out {entry['output_hours']:.4f} h  "
                  f"items {entry['n_items']}")
    print(f"manifest: {result.manifest_path}")
    if result.errors:
        for e in result.errors:
            print(f"error: {e['stage']} {e['key']}: {e['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_run(args) -> int:
    if args.config is None:
        raise ConfigInvalid("--config", "required")
    cfg = PipelineConfig.load(args.config)
    if args.input is not None:
        cfg.input = args.input
    if args.output is not None:
        cfg.output = args.output
    _apply_globals(cfg, args)
    return _report_run(run(cfg, args.stage))


def _acs_single_file(args) -> int:
    if args.output is None:
        raise ConfigInvalid("output", "required")
    clip = dataset.read_wav(args.input, args.format.upper())
    ann = dataset.parse_metadata(args.metadata) if args.metadata else None
    for p in sorted(set(args.patterns or range(1, 9))):
        t = get_transform(p)
        stem = f"{args.input.stem}_acs{p}"
        dataset.write_wav(apply_to_audio(clip, t), args.output / f"{stem}.wav")
        if ann is not None:
            dataset.emit_metadata(apply_to_labels(ann, t), args.output / f"{stem}.csv")
        print(args.output / f"{stem}.wav")
    return EXIT_OK


def cmd_stage(args) -> int:
    if args.command == "acs" and args.input is not None and args.input.is_file():
        return _acs_single_file(args)
    cfg = _stage_config(args, args.command)
    return _report_run(run(cfg, args.command))


def cmd_tfm_preview(args) -> int:
    cfg = TfmConfig(args.max_time_mask, args.time_mask_period, args.max_freq_mask)
    seed = 0 if args.seed is None else args.seed
    if args.features is not None:
        stack = read_features(args.features)
        plan = tfm_plan(stack.n_frames, cfg, np.random.default_rng(seed))
        print(render_plan(plan, cfg.n_bins))
        if args.output is not None:
            write_features(tfm_apply(stack, cfg, plan=plan), args.output)
            print(f"wrote {args.output}")
        return EXIT_OK
    print(render_plan(tfm_plan(args.frames, cfg, np.random.default_rng(seed)), cfg.n_bins))
    return EXIT_OK


def _format_report(rep: dict) -> str:
    o = rep["overall"]
    lines = [f"segments: {rep['n_segments']}   DOA threshold: {rep['doa_threshold']:g} deg",
             f"ER: {o['er20']:.4f}  F: {o['f20']:.4f}  LE: {o['le_cd']:.2f} deg  "
             f"LR: {o['lr_cd']:.4f}  SELD: {o['seld_score']:.4f}",
             "", f"{'class':>5} {'name':16s} {'n_ref':>6} {'F':>7} {'LE':>8} {'LR':>7}"]
    for c, row in rep["per_class"].items():
        lines.append(f"{c:>5} {CLASS_NAMES[int(c)]:16s} {row['n_ref']:6d} {row['f20']:7.4f} "
                     f"{row['le_cd']:8.2f} {row['lr_cd']:7.4f}")
    return "\n".join(lines)


def cmd_evaluate(args) -> int:
    for p in (args.ref, args.pred):
        if not p.is_dir():
            raise ConfigInvalid("--ref" if p is args.ref else "--pred", f"{p} is not a directory")
    ev = SeldEvaluator(args.threshold)
    refs = sorted(args.ref.glob("*.csv"))
    for ref_path in refs:
        pred_path = args.pred / ref_path.name
        ref = dataset.parse_metadata(ref_path)
        if pred_path.is_file():
            pred = dataset.parse_metadata(pred_path)
        else:
            log.warning("no prediction file for %s; scoring it as empty", ref_path.name)
            pred = dataset.EventAnnotationList()
        ev.add(ref, pred)
    try:
        rep = ev.report()
    except NoReferences as exc:
        print(f"nothing to score: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    rep["files"] = len(refs)
    if args.json is not None:
        args.json.write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    print(json.dumps(rep, indent=2, sort_keys=True) if args.format == "json" else _format_report(rep))
    return EXIT_OK


def cmd_inventory(args) -> int:
    if not args.input.is_dir():
        raise ConfigInvalid("--input", f"{args.input} is not a directory")
    segs = []
    for item in dataset.discover(args.input):
        clip, ann = item.load()
        segs.extend(s for s in dataset.extract_segments(ann, item.stem, args.min_frames,
                                                        args.static_tolerance, clip)
                    if not s.overlapping)
    dataset.write_inventory(segs, args.output)
    if not segs:
        print(f"no solo event segments found under {args.input}; wrote an empty inventory",
              file=sys.stderr)
        return EXIT_EMPTY
    n_ok = sum(s.eligible for s in segs)
    print(f"{len(segs)} solo segments ({n_ok} static) -> {args.output}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "acs": cmd_stage, "mcs": cmd_stage, "tdm": cmd_stage,
            "features": cmd_stage, "tfm-preview": cmd_tfm_preview, "evaluate": cmd_evaluate,
            "inventory": cmd_inventory}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; usage is a config error here
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SeldAugError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except ValueError as exc:  # bad option values surface here (e.g. mask lengths)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
