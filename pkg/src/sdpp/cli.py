"""``sdpp`` command line: each pipeline stage as a subcommand, plus ``run`` for all of them.

Options may also come from a TOML file passed with ``--config`` (flat keys
named like the long options, dashes or underscores). Command-line flags win.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from . import evaluation, generation
from .errors import BackendError, ConfigError
from .geo import LocalFrame
from .knowledge import (
    DeterministicBackend,
    RemoteBackend,
    build_store,
    chunk_document,
    load_templates,
)
from .knowledge.retrieval import DEFAULT_CHUNK_SIZE, DEFAULT_K, DEFAULT_OVERLAP
from .osm import OsmParseError, dump_segments, filter_roads, load_osm, load_segments, normalize_roads, serialize_osm

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger("sdpp")

VARIANT_NAMES = {"osg": "OSG", "ig": "IG", "ig-context": "IG_CONTEXT"}
ARTIFACTS = ("filtered.osm.xml", "segments.json", "specs.json", "enhanced.json", "enhanced.geojson")

DEFAULTS: dict[str, Any] = {
    "backend": "deterministic",
    "rules": None,
    "manual": None,
    "base_url": None,
    "model": None,
    "prompts": None,
    "template": "P2",
    "chunk_size": DEFAULT_CHUNK_SIZE,
    "overlap": DEFAULT_OVERLAP,
    "k": DEFAULT_K,
    "variant": "osg",
    "jobs": os.cpu_count() or 1,
    "origin": "auto",
    "drive_side": "right",
    "boundary": "total_width",
    "step": evaluation.DEFAULT_STEP,
    "threshold": evaluation.DEFAULT_THRESHOLD,
    "retries": 2,
    "max_in_flight": 4,
}


@dataclass
class PipelineConfig:
    backend: str
    rules: str | None
    manual: str | None
    base_url: str | None
    model: str | None
    prompts: str | None
    template: str
    chunk_size: int
    overlap: int
    k: int
    variant: str
    jobs: int
    origin: str
    drive_side: str
    boundary: str
    step: float
    threshold: float
    retries: int
    max_in_flight: int

    def __post_init__(self):
        if self.backend not in ("deterministic", "remote"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.variant not in VARIANT_NAMES:
            raise ConfigError(f"unknown variant {self.variant!r} (choose from {', '.join(VARIANT_NAMES)})")
        if not self.threshold > 0:
            raise ConfigError("threshold must be positive")
        if not self.step > 0:
            raise ConfigError("step must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.drive_side not in generation.DRIVE_SIDES:
            raise ConfigError(f"drive_side must be one of {', '.join(generation.DRIVE_SIDES)}")
        if self.boundary not in generation.BOUNDARY_SOURCES:
            raise ConfigError(f"boundary must be one of {', '.join(generation.BOUNDARY_SOURCES)}")

    @property
    def variant_name(self) -> str:
        return VARIANT_NAMES[self.variant]


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    file_values: dict[str, Any] = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, "rb") as fh:
                raw = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        raw = raw.get("sdpp", raw)
        file_values = {k.replace("-", "_"): v for k, v in raw.items()}
        unknown = set(file_values) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    values = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        values[key] = flag if flag is not None else file_values.get(key, default)
    return PipelineConfig(**values)


def make_store(cfg: PipelineConfig):
    if not cfg.manual:
        return None
    try:
        text = Path(cfg.manual).read_text("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read manual {cfg.manual}: {exc}") from None
    try:
        chunks = chunk_document(text, cfg.chunk_size, cfg.overlap)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return build_store(chunks)


def make_backend(cfg: PipelineConfig):
    """Backend plus the template name to record (None when no prompt is sent)."""
    templates = load_templates(cfg.prompts)
    template = templates[cfg.template]
    if cfg.backend == "deterministic":
        if cfg.rules and not Path(cfg.rules).is_file():
            raise ConfigError(f"rule table {cfg.rules} not found")
        return DeterministicBackend.from_file(cfg.rules), None
    if not cfg.manual:
        raise ConfigError("the remote backend needs --manual")
    return (
        RemoteBackend(
            cfg.base_url or "",
            cfg.model or "",
            template,
            retries=cfg.retries,
            max_in_flight=cfg.max_in_flight,
        ),
        template.name,
    )


def make_frame(cfg: PipelineConfig, segments) -> LocalFrame:
    if cfg.origin == "auto":
        return LocalFrame.centroid_of(p for s in segments for p in s.centerline)
    try:
        lat, lon = (float(v) for v in cfg.origin.split(","))
    except ValueError:
        raise ConfigError(f"--origin must be 'auto' or 'LAT,LON', got {cfg.origin!r}") from None
    return LocalFrame(lat, lon)


def _write(path: Path, text: str | bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(text, bytes):
        path.write_bytes(text)
    else:
        path.write_text(text, "utf-8")
    logger.info("wrote %s", path)


# -- stages -----------------------------------------------------------------------

def stage_filter(osm_path) -> bytes:
    return serialize_osm(filter_roads(load_osm(osm_path)))


def stage_normalize(osm_path) -> str:
    return dump_segments(normalize_roads(filter_roads(load_osm(osm_path))))


def stage_extract(cfg: PipelineConfig, segments) -> str:
    backend, template = make_backend(cfg)
    store = make_store(cfg)
    specs, failures = generation.extract_specs(
        segments, backend, store, cfg.variant_name, cfg.k, cfg.jobs
    )
    return generation.dump_specs(specs, failures, cfg.variant_name, backend.name, template)


def stage_generate(cfg: PipelineConfig, segments, specs_text: str) -> generation.EnhancedMap:
    specs, header = generation.load_specs(specs_text)
    frame = make_frame(cfg, segments)
    meta = {"backend": header.get("backend"), "template": header.get("template")}
    return generation.assemble_map(
        segments, specs, frame, header["variant"], header["failures"], meta,
        drive_side=cfg.drive_side, boundary=cfg.boundary,
    )


def run_pipeline(cfg: PipelineConfig, osm_path, out_dir) -> generation.EnhancedMap:
    """Run every stage and write the five artifacts into ``out_dir``."""
    out = Path(out_dir)
    filtered = stage_filter(osm_path)
    _write(out / "filtered.osm.xml", filtered)
    segments_text = stage_normalize(osm_path)
    _write(out / "segments.json", segments_text)
    segments = load_segments(segments_text)
    specs_text = stage_extract(cfg, segments)
    _write(out / "specs.json", specs_text)
    m = stage_generate(cfg, segments, specs_text)
    _write(out / "enhanced.json", generation.dump_enhanced(m))
    _write(out / "enhanced.geojson", json.dumps(generation.to_geojson(m), indent=2) + "\n")
    for f in m.failures:
        logger.warning("way %s failed: %s", f["way_id"], f["reason"])
    return m


# -- argument parsing ----------------------------------------------------------------

def _add_extraction_options(p: argparse.ArgumentParser):
    g = p.add_argument_group("extraction")
    g.add_argument("--backend", choices=["deterministic", "remote"])
    g.add_argument("--rules", help="rule table JSON for the deterministic backend (default: bundled fixture)")
    g.add_argument("--manual", help="road manual as UTF-8 plain text")
    g.add_argument("--base-url", dest="base_url", help="chat-completion endpoint base URL")
    g.add_argument("--model", help="model name for the remote backend")
    g.add_argument("--prompts", help="prompt template file (default: bundled)")
    g.add_argument("--template", help="prompt template name (default: P2)")
    g.add_argument("--chunk-size", dest="chunk_size", type=int)
    g.add_argument("--overlap", type=int)
    g.add_argument("-k", type=int, help="chunks retrieved per query")
    g.add_argument("--variant", choices=list(VARIANT_NAMES))
    g.add_argument("--retries", type=int)
    g.add_argument("--max-in-flight", dest="max_in_flight", type=int)


def _add_geometry_options(p: argparse.ArgumentParser):
    g = p.add_argument_group("geometry")
    g.add_argument("--origin", help="frame origin 'LAT,LON' or 'auto' (map centroid)")
    g.add_argument("--drive-side", dest="drive_side", choices=["right", "left"])
    g.add_argument("--boundary", choices=list(generation.BOUNDARY_SOURCES),
                   help="road edges from total_width (default) or from the outer lane edges")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdpp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with default option values")
    common.add_argument("--jobs", type=int, help="worker threads (default: CPU count)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", parents=[common], help="keep road ways only")
    p.add_argument("osm")
    p.add_argument("out")

    p = sub.add_parser("normalize", parents=[common], help="OSM XML -> segments.json")
    p.add_argument("osm")
    p.add_argument("out")

    p = sub.add_parser("extract", parents=[common], help="segments.json -> specs.json")
    p.add_argument("segments")
    p.add_argument("out")
    _add_extraction_options(p)

    p = sub.add_parser("generate", parents=[common], help="segments + specs -> enhanced.json")
    p.add_argument("segments")
    p.add_argument("specs")
    p.add_argument("out")
    _add_geometry_options(p)

    p = sub.add_parser("export", parents=[common], help="enhanced.json -> GeoJSON or ground-truth JSON")
    p.add_argument("enhanced")
    p.add_argument("out")
    p.add_argument("--format", choices=["geojson", "gt"], default="geojson")

    p = sub.add_parser("eval", parents=[common], help="score enhanced.json against ground truth")
    p.add_argument("enhanced")
    p.add_argument("gt")
    p.add_argument("--step", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--segments", help="segments.json listing every expected way (validity check)")
    p.add_argument("--json", dest="json_out", help="also write the full report here")

    p = sub.add_parser("run", parents=[common], help="all stages: OSM -> enhanced map artifacts")
    p.add_argument("osm")
    p.add_argument("out_dir")
    _add_extraction_options(p)
    _add_geometry_options(p)
    return parser


def _cmd_eval(cfg: PipelineConfig, args) -> int:
    m = generation.load_enhanced(Path(args.enhanced).read_text("utf-8"))
    gt = evaluation.GroundTruthMap.from_json(Path(args.gt).read_text("utf-8"))
    inputs = load_segments(Path(args.segments).read_text("utf-8")) if args.segments else None
    validity = generation.validate_map(m, inputs)
    origin = m.generation_metadata.get("frame")
    frame = LocalFrame(origin["origin_lat"], origin["origin_lon"]) if origin else None
    report = evaluation.evaluate(m, gt, validity, frame, cfg.step, cfg.threshold)
    sys.stdout.write(evaluation.format_table(report))
    if args.json_out:
        _write(Path(args.json_out), report.to_json())
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        cmd = args.command
        if cmd == "filter":
            _write(Path(args.out), stage_filter(args.osm))
        elif cmd == "normalize":
            _write(Path(args.out), stage_normalize(args.osm))
        elif cmd == "extract":
            segments = load_segments(Path(args.segments).read_text("utf-8"))
            _write(Path(args.out), stage_extract(cfg, segments))
        elif cmd == "generate":
            segments = load_segments(Path(args.segments).read_text("utf-8"))
            m = stage_generate(cfg, segments, Path(args.specs).read_text("utf-8"))
            _write(Path(args.out), generation.dump_enhanced(m))
        elif cmd == "export":
            m = generation.load_enhanced(Path(args.enhanced).read_text("utf-8"))
            if args.format == "geojson":
                text = json.dumps(generation.to_geojson(m), indent=2) + "\n"
            else:
                text = evaluation.ground_truth_from_map(m).to_json()
            _write(Path(args.out), text)
        elif cmd == "eval":
            return _cmd_eval(cfg, args)
        elif cmd == "run":
            run_pipeline(cfg, args.osm, args.out_dir)
    except ConfigError as exc:
        print(f"sdpp: configuration error: {exc}", file=sys.stderr)
        return 2
    except (OsmParseError, BackendError, evaluation.EvaluationError, OSError, ValueError, KeyError) as exc:
        print(f"sdpp: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
