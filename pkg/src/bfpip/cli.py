"""``bfpip`` command-line entry point.

Subcommands: ingest, prepare, run, ablate, report, cache. Failures exit
with status 1 and print a one-line JSON error summary on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .backends import Predictor, ResponseCache
from .clipper import ClipBuilder, MediaTool
from .config import HarnessConfig, load_config
from .dataset import adapt_jaad, filter_split, parse_manifest, write_manifest
from .errors import BfpipError, EmptyRecordSet, InvalidValue, MissingFile
from .promptkit import PROMPT_ORDER, ModalityConfig
from .protocol import RecordSink, read_records
from .reports import FORMAT_ALIASES, REPORT_FILES, emit_report, summarize

logger = logging.getLogger("bfpip")


def _print(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True))


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_manifest(cfg: HarnessConfig, configs: Sequence[ModalityConfig], kind: str) -> dict:
    templates = cfg.templates()
    manifest_path = cfg.manifest_path
    return {
        "kind": kind,
        "configs": [c.label for c in configs],
        "split": cfg.split,
        "dataset": {"manifest": str(manifest_path), "sha256": _file_digest(manifest_path)},
        "backend": cfg.predictor.public_dict(),
        "protocol": {
            "repeats": cfg.protocol.repeats,
            "parse_mode": cfg.protocol.parse_mode,
            "tie_break": cfg.protocol.tie_break,
        },
        "templates": templates.digests(),
        "prompt_order": list(PROMPT_ORDER),
        "deviations": list(cfg.deviations),
        "config": cfg.doc,
    }


def derive_run_id(manifest: dict) -> str:
    payload = json.dumps({k: v for k, v in manifest.items() if k != "config"}, sort_keys=True)
    return f"{manifest['kind']}-{hashlib.sha256(payload.encode()).hexdigest()[:12]}"


def report_header(manifest: dict) -> dict:
    return {k: manifest[k] for k in ("backend", "protocol", "prompt_order", "deviations", "split") if k in manifest}


def write_reports(run_dir: Path, records, manifest: dict, formats: Sequence[str]) -> list[Path]:
    result = summarize(records, manifest["run_id"], report_header(manifest))
    written = []
    for fmt in formats:
        target = run_dir / REPORT_FILES[fmt]
        _atomic_write(target, emit_report(result, fmt=fmt))
        written.append(target)
    return written


def execute_run(cfg: HarnessConfig, configs: Sequence[ModalityConfig], kind: str, run_id: str | None = None) -> Path:
    manifest = parse_manifest(cfg.manifest_path)
    instances = [i for i in filter_split(manifest, cfg.split)]
    if not instances:
        raise EmptyRecordSet(f"split {cfg.split!r} has no instances")
    meta = run_manifest(cfg, configs, kind)
    meta["run_id"] = run_id or derive_run_id(meta)
    meta["counts"] = {"instances": len(instances), "videos": len({i.video_id for i in instances})}
    run_dir = cfg.path("runs_dir") / meta["run_id"]
    run_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(run_dir / "manifest.json", (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode())

    predictor = Predictor(cfg.predictor, cfg.cache())
    runner = cfg.runner(predictor)
    sink = RecordSink(run_dir / "records.jsonl")
    records = runner.run(instances, configs, sink)
    write_reports(run_dir, records, meta, ("markdown", "csv", "json"))
    logger.info("run %s: %d records, %d remote calls", meta["run_id"], len(records), predictor.network_calls)
    return run_dir


# -- subcommands -------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    manifest = adapt_jaad(args.annotations, args.splits)
    write_manifest(manifest, args.out)
    test = filter_split(manifest, "test")
    _print({
        "manifest": str(args.out),
        "instances": len(manifest),
        "test_instances": len(test),
        "test_videos": len({i.video_id for i in test}),
    })
    return 0


def cmd_prepare(args: argparse.Namespace) -> int:
    if args.config:
        cfg = load_config(args.config, args.set)
        builder = cfg.clip_builder()
        manifest_path = Path(args.manifest) if args.manifest else cfg.manifest_path
    else:
        if not args.manifest:
            raise InvalidValue("--manifest", "required without --config")
        manifest_path = Path(args.manifest)
        builder = ClipBuilder(
            clips_dir=Path(args.clips_dir),
            frames_root=Path(args.frames_root) if args.frames_root else None,
            videos_root=Path(args.videos_root) if args.videos_root else None,
            tool=MediaTool(),
            container=args.container,
        )
    if args.frames_root and args.config:
        builder.frames_root = Path(args.frames_root)
    manifest = parse_manifest(manifest_path)
    instances = filter_split(manifest, args.split)
    index = []
    for inst in instances:
        try:
            bundle = builder.build(inst, args.mode)
        except BfpipError as exc:
            raise exc.with_context(instance_id=inst.instance_id)
        index.append({"instance_id": inst.instance_id, "media_ref": bundle.media_ref,
                      "content_digest": bundle.content_digest, "mime_type": bundle.mime_type})
    out_dir = Path(builder.clips_dir) / args.mode
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(out_dir / "index.json", (json.dumps(index, indent=1, sort_keys=True) + "\n").encode())
    _print({"clips": len(index), "mode": args.mode, "index": str(out_dir / "index.json")})
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set)
    try:
        configs = [ModalityConfig.parse(args.modality)]
    except ValueError as exc:
        raise InvalidValue("--modality", str(exc)) from None
    run_dir = execute_run(cfg, configs, "run", args.run_id)
    _print({"run_dir": str(run_dir), "reports": [REPORT_FILES[f] for f in REPORT_FILES]})
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set)
    run_dir = execute_run(cfg, cfg.configs, "ablate", args.run_id)
    _print({"run_dir": str(run_dir), "reports": [REPORT_FILES[f] for f in REPORT_FILES]})
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    meta_path = run_dir / "manifest.json"
    if not meta_path.is_file():
        raise MissingFile(meta_path)
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    records = read_records(run_dir / "records.jsonl")
    if not records:
        raise EmptyRecordSet(f"no records in {run_dir}")
    formats = list(REPORT_FILES) if args.format == "all" else [FORMAT_ALIASES[args.format]]
    written = write_reports(run_dir, records, meta, formats)
    _print({"written": [str(p) for p in written]})
    return 0


def cmd_cache(args: argparse.Namespace) -> int:
    if args.cache_dir:
        cache = ResponseCache(args.cache_dir)
    elif args.config:
        cache = load_config(args.config, args.set).cache()
    else:
        raise InvalidValue("--config", "give --config or --cache-dir")
    if args.purge:
        _print({"purged": cache.purge()})
    else:
        _print(cache.stats())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bfpip", description="Zero-shot crossing-intention evaluation harness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p: argparse.ArgumentParser, required: bool = True) -> None:
        p.add_argument("--config", required=required, help="harness config JSON")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable), e.g. protocol.repeats=3")

    p = sub.add_parser("ingest", help="convert JAAD annotations into a canonical manifest")
    p.add_argument("--annotations", required=True)
    p.add_argument("--splits", required=True, help="split JSON file or directory of <split>.txt files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("prepare", help="build clips for one split")
    with_config(p, required=False)
    p.add_argument("--manifest")
    p.add_argument("--split", default="test")
    p.add_argument("--mode", choices=("annotated", "unannotated"), required=True)
    p.add_argument("--frames-root")
    p.add_argument("--videos-root")
    p.add_argument("--clips-dir", default="clips")
    p.add_argument("--container", choices=("mp4", "zip"), default="mp4")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("run", help="evaluate one modality configuration")
    with_config(p)
    p.add_argument("--modality", default="AV+S")
    p.add_argument("--run-id")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="evaluate every configured modality (all eight by default)")
    with_config(p)
    p.add_argument("--run-id")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="re-emit reports from stored records")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--format", choices=("md", "markdown", "csv", "json", "all"), default="all")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("cache", help="inspect or purge the response cache")
    with_config(p, required=False)
    p.add_argument("--cache-dir")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--stats", action="store_true")
    g.add_argument("--purge", action="store_true")
    p.set_defaults(func=cmd_cache)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except BfpipError as exc:
        print(json.dumps(exc.summary(), sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
