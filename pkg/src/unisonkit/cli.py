"""Command-line front end: ``unisonkit analyze|compare|stu|uts``.

Section manifests are JSON files of the form::

    {"sections": [
        {"section": "Soprano", "song": "ER",
         "stems": ["soprano_1.wav", "soprano_2.wav"],
         "annotations": ["soprano_1.csv", "soprano_2.csv"]}
    ]}

Relative paths are resolved against the manifest's directory. Output
goes to ``--out-dir``, falling back to ``$UNISON_OUT_DIR`` and then to
``./unison_out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from . import vocoder
from .analysis import (
    compare_unison_f0, inter_singer_deviation, pool_deviations, pool_transitions,
    transition_regions, write_deviation_csv,
)
from .audio_io import AudioError, load_wav, mix_and_normalize, save_wav
from .contour import UnisonGroup, read_contour_csv, write_contour_csv
from .metrics import DEFAULT_TOLERANCE_CENTS
from .pitch import TrackerConfig, track_f0
from .synth import PRESETS, CloneParams, solo_to_unison, unison_prototype

log = logging.getLogger("unisonkit")

OUT_DIR_ENV = "UNISON_OUT_DIR"
DEFAULT_OUT_DIR = "unison_out"


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class SectionManifest:
    section: str
    stems: tuple
    annotations: tuple = ()
    song: str = ""

    def __post_init__(self):
        if not self.stems:
            raise ManifestError(f"section {self.section!r} lists no stems")
        if self.annotations and len(self.annotations) != len(self.stems):
            raise ManifestError(
                f"section {self.section!r}: {len(self.annotations)} annotations "
                f"for {len(self.stems)} stems")

    @property
    def key(self) -> str:
        """File-name-safe identifier, ``<song>_<section>`` or just the section."""
        raw = f"{self.song}_{self.section}" if self.song else self.section
        return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in raw)


def load_manifest(path) -> list[SectionManifest]:
    """Parse a manifest file; a bare section object is also accepted."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    entries = data.get("sections", [data]) if isinstance(data, dict) else data
    base = path.parent
    out = []
    for entry in entries:
        try:
            section = str(entry["section"])
            stems = tuple(str(base / s) for s in entry["stems"])
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"malformed manifest entry {entry!r}") from exc
        annotations = tuple(str(base / a) for a in entry.get("annotations") or ())
        out.append(SectionManifest(section, stems, annotations, str(entry.get("song", ""))))
    if not out:
        raise ManifestError(f"{path}: no sections")
    keys = [m.key for m in out]
    if len(set(keys)) != len(keys):
        raise ManifestError(f"{path}: duplicate song/section pairs")
    return out


CSD_NAME = re.compile(r"CSD_(?P<song>[A-Za-z]+)_(?P<part>soprano|alto|tenor|bass)_?(?P<idx>\d+)",
                      re.IGNORECASE)


def csd_manifest(root) -> dict:
    """Build a manifest from a Choral Singing Dataset checkout.

    Stems are found recursively by their ``CSD_<song>_<part>_<n>`` file
    names; an annotation is any ``.csv`` or ``.f0`` file under ``root``
    whose name carries the same song/part/index triple. One section entry
    is produced per (song, part); annotations are attached only when every
    stem of the entry has one.
    """
    root = Path(root)
    stems, notes = {}, {}
    for path in sorted(root.rglob("*")):
        m = CSD_NAME.search(path.name)
        if not m or not path.is_file():
            continue
        key = (m["song"].upper(), m["part"].lower(), int(m["idx"]))
        if path.suffix.lower() == ".wav":
            stems.setdefault(key, path)
        elif path.suffix.lower() in (".csv", ".f0"):
            notes.setdefault(key, path)
    groups = {}
    for key in sorted(stems):
        groups.setdefault(key[:2], []).append(key)
    sections = []
    for (song, part), keys in sorted(groups.items()):
        entry = {"section": part.capitalize(), "song": song,
                 "stems": [str(stems[k].resolve()) for k in keys]}
        if all(k in notes for k in keys):
            entry["annotations"] = [str(notes[k].resolve()) for k in keys]
        sections.append(entry)
    return {"sections": sections}


@dataclass
class ItemResult:
    """Outcome of one manifest entry; plain data so it can cross processes."""

    key: str
    section: str
    payload: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    deviation: object = None
    transitions: object = None
    comparison: object = None
    singers: tuple = ()


def _load_contours(item: SectionManifest, cfg: TrackerConfig, errors: list):
    """One contour per readable stem, from annotations when present."""
    contours, names = [], []
    for i, stem in enumerate(item.stems):
        try:
            if item.annotations:
                contours.append(read_contour_csv(item.annotations[i]))
            else:
                contours.append(track_f0(load_wav(stem), cfg))
            names.append(Path(stem).name)
        except (OSError, ValueError, AudioError) as exc:
            errors.append(f"{stem}: {exc}")
    return contours, names


def analyze_item(item: SectionManifest, cfg: TrackerConfig, hop: float | None) -> ItemResult:
    """Deviation and transition statistics of one section entry.

    ``hop`` regrids annotations; tracked contours always use ``cfg``'s hop.
    """
    result = ItemResult(item.key, item.section)
    contours, names = _load_contours(item, cfg, result.errors)
    if not contours:
        result.errors.append("no usable stems")
        return result
    group = UnisonGroup.aligned(item.section, contours, hop if item.annotations else cfg.hop_seconds)
    result.deviation = inter_singer_deviation(group)
    result.transitions = transition_regions(group)
    result.singers = tuple(names)
    result.payload = {
        "section": item.section,
        "song": item.song,
        "singers": names,
        "source": "annotations" if item.annotations else "tracker",
        "hop_seconds": group.hop_seconds,
        "delta_f0_cents": result.deviation.to_dict(),
        "transitions": result.transitions.to_dict(),
    }
    return result


def compare_item(item: SectionManifest, cfg: TrackerConfig, tolerance: float) -> ItemResult:
    """Mix the stems, track the mixture and score it against the annotations."""
    result = ItemResult(item.key, item.section)
    if not item.annotations:
        result.errors.append("compare needs F0 annotations for every stem")
        return result
    try:
        clips = [load_wav(s) for s in item.stems]
        contours = [read_contour_csv(a) for a in item.annotations]
        mixture = mix_and_normalize(clips)
    except (OSError, ValueError, AudioError) as exc:
        result.errors.append(str(exc))
        return result
    group = UnisonGroup.aligned(item.section, contours, cfg.hop_seconds)
    result.comparison = compare_unison_f0(group, mixture, cfg, tolerance)
    result.singers = tuple(Path(s).name for s in item.stems)
    result.payload = {
        "song": item.song,
        "singers": list(result.singers),
        "hop_seconds": cfg.hop_seconds,
        "tolerance_cents": tolerance,
        **result.comparison.to_dict(),
    }
    return result


def _run_items(func, items, jobs: int, *extra) -> list[ItemResult]:
    """Run ``func`` over manifest entries; results come back sorted by key."""
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(func, item, *extra) for item in items]
            results = [f.result() for f in futures]
    else:
        results = [func(item, *extra) for item in items]
    return sorted(results, key=lambda r: r.key)


def write_metrics_table(result: ItemResult, path) -> None:
    rows = ["target,rpa,oa,vr,vfa"]
    targets = list(zip(result.singers, result.comparison.individual))
    targets.append(("mean", result.comparison.mean))
    for name, rep in targets:
        rows.append(f"{name},{rep.rpa:.6f},{rep.oa:.6f},{rep.vr:.6f},{rep.vfa:.6f}")
    Path(path).write_text("\n".join(rows) + "\n")


def _write_results(results, out_dir: Path, suffix: str) -> bool:
    ok = True
    for r in results:
        for err in r.errors:
            log.error("%s: %s", r.key, err)
        ok = ok and not r.errors
        if not r.payload:
            continue
        payload = dict(r.payload, errors=r.errors) if r.errors else r.payload
        (out_dir / f"{r.key}_{suffix}.json").write_text(json.dumps(payload, indent=2))
        if r.deviation is not None:
            write_deviation_csv(r.deviation, out_dir / f"{r.key}_deviation.csv")
        if r.comparison is not None:
            write_metrics_table(r, out_dir / f"{r.key}_compare.csv")
            write_contour_csv(r.comparison.estimate, out_dir / f"{r.key}_estimate_f0.csv")
    return ok


def section_summary(results) -> dict:
    """Pool songs by section label (equal weight per frame and per region)."""
    summary = {}
    for section in sorted({r.section for r in results if r.deviation is not None}):
        done = [r for r in results if r.section == section and r.deviation is not None]
        summary[section] = {
            "delta_f0_cents": pool_deviations(r.deviation for r in done).to_dict(),
            "song_means_cents": {r.key: r.deviation.mean_cents
                                 for r in done if not r.deviation.empty},
            "transitions": pool_transitions(r.transitions for r in done).to_dict(),
        }
    return summary


def _tracker(args) -> TrackerConfig:
    return TrackerConfig(hop_seconds=args.hop) if args.hop else TrackerConfig()


def cmd_analyze(args) -> int:
    items = load_manifest(args.manifest)
    out_dir = _out_dir(args)
    results = _run_items(analyze_item, items, args.jobs, _tracker(args), args.hop)
    ok = _write_results(results, out_dir, "analysis")
    (out_dir / "sections_summary.json").write_text(json.dumps(section_summary(results), indent=2))
    return 0 if ok else 1


def cmd_compare(args) -> int:
    items = load_manifest(args.manifest)
    out_dir = _out_dir(args)
    results = _run_items(compare_item, items, args.jobs, _tracker(args), args.tolerance_cents)
    return 0 if _write_results(results, out_dir, "compare") else 1


def resolve_clone_params(args) -> CloneParams:
    base = PRESETS[args.preset] if args.preset else CloneParams(ns=4)
    overrides = {k: getattr(args, k) for k in ("std", "ts", "ns", "seed")
                 if getattr(args, k) is not None}
    if args.timbre is not None:
        overrides["timbre_variation"] = args.timbre
    return replace(base, **overrides)


def _output_path(args, suffix: str) -> Path:
    if args.output:
        return Path(args.output)
    return _out_dir(args) / f"{Path(args.input).stem}_{suffix}.wav"


def cmd_stu(args) -> int:
    params = resolve_clone_params(args)
    cfg = _tracker(args)
    out = _output_path(args, args.preset or "stu")
    clip = load_wav(args.input)
    unison = solo_to_unison(clip, params, cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_wav(unison, out)
    sidecar = {
        "command": "stu",
        "input": str(args.input),
        "output": str(out),
        "preset": args.preset,
        "params": params.to_dict(),
        "tracker": asdict(cfg),
        "vocoder_hop_seconds": vocoder.DEFAULT_HOP,
        "sample_rate": clip.sample_rate,
    }
    out.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    log.info("wrote %s", out)
    return 0


def cmd_uts(args) -> int:
    cfg = _tracker(args)
    out = _output_path(args, "uts")
    clip = load_wav(args.input)
    proto, f0 = unison_prototype(clip, cfg, seed=args.seed or 0)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_wav(proto, out)
    write_contour_csv(f0, out.with_suffix(".f0.csv"))
    sidecar = {
        "command": "uts",
        "input": str(args.input),
        "output": str(out),
        "seed": args.seed or 0,
        "tracker": asdict(cfg),
        "vocoder_hop_seconds": vocoder.DEFAULT_HOP,
        "sample_rate": clip.sample_rate,
    }
    out.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    log.info("wrote %s", out)
    return 0


def _out_dir(args) -> Path:
    path = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _positive(kind):
    def parse(text):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def _non_negative(text):
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./{DEFAULT_OUT_DIR})")
    common.add_argument("--hop", type=_positive(float), help="tracker hop in seconds (default 0.010)")
    common.add_argument("--tolerance-cents", type=_positive(float), default=DEFAULT_TOLERANCE_CENTS,
                        help="pitch tolerance for metrics (default %(default)s)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="unisonkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, text in (("analyze", cmd_analyze, "inter-singer deviation and timing statistics"),
                             ("compare", cmd_compare, "unison F0 estimate against singers and mean")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("manifest")
        p.add_argument("--jobs", type=_positive(int), default=1, help="worker processes")
        p.set_defaults(func=func)

    p = sub.add_parser("stu", parents=[common], help="render a unison from a solo voice")
    p.add_argument("input")
    p.add_argument("output", nargs="?")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--std", type=_non_negative, help="pitch deviation in cents")
    p.add_argument("--ts", type=_non_negative, help="timing deviation in seconds")
    p.add_argument("--ns", type=_positive(int), help="number of clones")
    p.add_argument("--seed", type=int)
    p.add_argument("--timbre", action=argparse.BooleanOptionalAction, default=None,
                   help="random envelope warp per clone")
    p.set_defaults(func=cmd_stu)

    p = sub.add_parser("uts", parents=[common], help="render a single-voice prototype of a unison")
    p.add_argument("input")
    p.add_argument("output", nargs="?")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_uts)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ManifestError, AudioError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
