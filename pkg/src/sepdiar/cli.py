"""Command-line entry point: run, score, sweep, sep-eval, simulate.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import backends, metrics, synth
from .core import Annotation, PipelineConfig, Segment
from .ingest import AudioFormatError, open_wav
from .rttm_io import RttmParseError, parse_rttm, parse_uem, write_rttm
from .stitch import run_pipeline

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


class ConfigError(ValueError):
    pass


class DataError(RuntimeError):
    pass


@dataclass
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    separator: str = "band-split"
    separator_params: dict[str, Any] = field(default_factory=dict)
    vad: str = "energy"
    vad_params: dict[str, Any] = field(default_factory=dict)
    embedder: str = "mel"
    embedder_params: dict[str, Any] = field(default_factory=dict)
    inputs: list[Path] = field(default_factory=list)
    outdir: Path = Path(".")
    stems: Path | None = None

    def validate(self) -> None:
        if self.separator not in ("oracle", "band-split"):
            raise ConfigError(f"separator: unknown backend {self.separator!r} (oracle, band-split)")
        if self.separator == "band-split" and not self.separator_params.get("bands"):
            raise ConfigError("separator.bands: band-split needs at least one band, e.g. --bands 0-1000,1000-2000")
        if self.vad != "energy":
            raise ConfigError(f"vad: unknown backend {self.vad!r} (energy)")
        if float(self.vad_params.get("threshold_db", -40.0)) >= 0:
            raise ConfigError("vad.threshold_db: must be negative")
        if int(self.vad_params.get("hangover", 0)) < 0:
            raise ConfigError("vad.hangover: must be >= 0")
        if self.embedder != "mel":
            raise ConfigError(f"embedder: unknown backend {self.embedder!r} (mel)")

    def build(self, wav: Path):
        stems = None
        if self.separator == "oracle":
            stem_dir = self.stems or wav.parent / "stems"
            stems = synth.load_stems(stem_dir)
        try:
            separator = backends.build_separator(self.separator, self.separator_params, stems)
            vad = backends.build_vad(self.vad, self.vad_params)
            embedder = backends.build_embedder(self.embedder, self.embedder_params)
        except backends.BackendConfigError as exc:
            raise ConfigError(str(exc)) from None
        return separator, vad, embedder


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def parse_bands(text: str) -> list[list[float]]:
    bands = []
    for item in text.split(","):
        try:
            lo, hi = item.split("-")
            bands.append([float(lo), float(hi)])
        except ValueError:
            raise ConfigError(f"separator.bands: cannot parse {item!r}; expected LO-HI in Hz") from None
    return bands


def parse_floats(text: str, name: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{name}: expected comma-separated numbers, got {text!r}") from None


_PIPELINE_FLAGS = {f.name for f in fields(PipelineConfig)}


def _add_pipeline_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--config", type=Path, help="TOML file; command-line flags override it")
    g.add_argument("--window", type=float)
    g.add_argument("--step", type=float)
    g.add_argument("--latency", type=float)
    g.add_argument("--tau-active", type=float)
    g.add_argument("--delta-new", type=float)
    g.add_argument("--rho-update", type=float)
    g.add_argument("--no-context-mapping", dest="map_context", action="store_false", default=None)
    g = p.add_argument_group("backends")
    g.add_argument("--separator", choices=["oracle", "band-split"])
    g.add_argument("--num-outputs", type=int, help="oracle separator output count")
    g.add_argument("--bands", help="band-split bands, e.g. 0-1000,1000-2000")
    g.add_argument("--stems", type=Path, help="directory of ground-truth stem WAVs (oracle)")
    g.add_argument("--vad", choices=["energy"])
    g.add_argument("--vad-threshold-db", type=float)
    g.add_argument("--vad-hangover", type=int)
    g.add_argument("--embedder", choices=["mel"])


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the optional TOML file and flags (flags win)."""
    data: dict[str, Any] = {}
    if getattr(args, "config", None):
        try:
            data = tomllib.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise DataError(f"file not found: {args.config}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config: {exc}") from None

    pipeline = dict(data.get("pipeline", {}))
    unknown = set(pipeline) - _PIPELINE_FLAGS
    if unknown:
        raise ConfigError(f"pipeline: unknown keys {sorted(unknown)}")
    for name in _PIPELINE_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            pipeline[name] = value
    try:
        pcfg = PipelineConfig(**pipeline)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"pipeline: {exc}") from None

    sep = dict(data.get("separator", {}))
    vad = dict(data.get("vad", {}))
    emb = dict(data.get("embedder", {}))
    cfg = RunConfig(
        pipeline=pcfg,
        separator=args.separator or sep.pop("name", "band-split"),
        separator_params={k: v for k, v in sep.items() if k != "name"},
        vad=args.vad or vad.pop("name", "energy"),
        vad_params={k: v for k, v in vad.items() if k != "name"},
        embedder=args.embedder or emb.pop("name", "mel"),
        embedder_params={k: v for k, v in emb.items() if k != "name"},
        stems=args.stems or (Path(data["stems"]) if "stems" in data else None),
    )
    if args.bands:
        cfg.separator_params["bands"] = parse_bands(args.bands)
    if cfg.separator == "band-split":
        # default to the synthetic speaker bands so simulate -> run works out of the box
        cfg.separator_params.setdefault("bands", [list(b) for b in synth.SPEAKER_BANDS])
    if args.num_outputs is not None:
        cfg.separator_params["num_outputs"] = args.num_outputs
    if args.vad_threshold_db is not None:
        cfg.vad_params["threshold_db"] = args.vad_threshold_db
    if args.vad_hangover is not None:
        cfg.vad_params["hangover"] = args.vad_hangover
    cfg.validate()
    return cfg


def diarize_file(cfg: RunConfig, wav: Path, pipeline: PipelineConfig | None = None) -> Annotation:
    stream = open_wav(wav)
    separator, vad, embedder = cfg.build(wav)
    return run_pipeline(stream, separator, vad, embedder, pipeline or cfg.pipeline)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_run_config(args)
    cfg.inputs = list(args.inputs)
    cfg.outdir = args.outdir
    for wav in cfg.inputs:
        if not wav.exists():
            raise DataError(f"file not found: {wav}")
    cfg.outdir.mkdir(parents=True, exist_ok=True)

    def work(wav: Path) -> tuple[Path, int, float]:
        t0 = time.perf_counter()
        ann = diarize_file(cfg, wav)
        out = cfg.outdir / f"{wav.stem}.rttm"
        out.write_text(write_rttm({wav.stem: ann}))
        return out, len(ann.labels()), time.perf_counter() - t0

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        for wav, result in zip(cfg.inputs, pool.map(work, cfg.inputs)):
            out, speakers, elapsed = result
            print(f"{wav}: {speakers} speakers, elapsed {elapsed:.2f}s -> {out}")
    return EXIT_OK


def _pct(x: float) -> str:
    return f"{100 * x:.1f}"


def _read_rttm(path: Path) -> dict[str, Annotation]:
    try:
        return parse_rttm(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    except RttmParseError as exc:
        raise DataError(f"{path}: {exc}") from None


def _ci95(values: Sequence[float]) -> tuple[float, float]:
    """Mean and normal-approximation 95% half-width."""
    arr = np.asarray(values, dtype=np.float64)
    if len(arr) < 2:
        return float(arr.mean()), float("nan")
    return float(arr.mean()), float(1.96 * arr.std(ddof=1) / math.sqrt(len(arr)))


def segment_ders(
    reference: Annotation,
    hypothesis: Annotation,
    length: float,
    uem: list[Segment] | None = None,
    overlap_only: bool = False,
    collar: float = 0.0,
) -> list[tuple[int, float]]:
    """DER of each ``length``-second chunk as ``(num_reference_speakers, der)``.

    Chunks without scored reference speech are skipped.
    """
    extent = reference.extent()
    if extent is None:
        return []
    out = []
    n = math.ceil(extent.end / length)
    for k in range(n):
        chunk = Segment(k * length, (k + 1) * length)
        region = [chunk] if uem is None else [r for r in (chunk.intersect(u) for u in uem) if r]
        if not region:
            continue
        ref_chunk = reference.crop(chunk)
        try:
            rep = metrics.der(reference, hypothesis, uem=region, collar=collar, overlap_only=overlap_only)
        except metrics.UndefinedDERError:
            continue
        out.append((len(ref_chunk.labels()), rep.der))
    return out


def cmd_score(args: argparse.Namespace) -> int:
    refs = _read_rttm(args.reference)
    hyps = _read_rttm(args.hypothesis)
    uems = None
    if args.uem:
        try:
            uems = parse_uem(Path(args.uem).read_text())
        except FileNotFoundError:
            raise DataError(f"file not found: {args.uem}") from None
    for file_id in sorted(set(hyps) - set(refs)):
        print(f"warning: {file_id} is in the hypothesis but not the reference; skipped", file=sys.stderr)
    common = sorted(set(refs) & set(hyps)) if hyps else []
    file_ids = sorted(refs) if hyps and common else []
    if not common:
        raise DataError("no file ids in common between reference and hypothesis")

    rows = []
    totals = dict(fa=0.0, ms=0.0, sc=0.0, speech=0.0)
    per_segment: list[tuple[int, float]] = []
    for file_id in file_ids:
        hyp = hyps.get(file_id, Annotation())
        uem = uems.get(file_id) if uems is not None else None
        try:
            rep = metrics.der(refs[file_id], hyp, uem=uem, collar=args.collar, overlap_only=args.overlap_only)
        except metrics.UndefinedDERError as exc:
            print(f"{file_id}: undefined DER: {exc}", file=sys.stderr)
            continue
        rows.append((file_id, rep))
        totals["fa"] += rep.false_alarm_time
        totals["ms"] += rep.missed_time
        totals["sc"] += rep.confusion_time
        totals["speech"] += rep.total_speech
        if args.segment_length:
            per_segment += segment_ders(refs[file_id], hyp, args.segment_length, uem, args.overlap_only, args.collar)
    if not rows:
        raise DataError("DER is undefined for every file (no scored reference speech)")

    speech = totals["speech"]
    fa, ms, sc = totals["fa"] / speech, totals["ms"] / speech, totals["sc"] / speech
    for file_id, rep in rows:
        print(f"{file_id}: DER {_pct(rep.der)} FA {_pct(rep.false_alarm)} MS {_pct(rep.missed)} SC {_pct(rep.confusion)}")
    print(f"TOTAL: DER {_pct(fa + ms + sc)} FA {_pct(fa)} MS {_pct(ms)} SC {_pct(sc)}")

    if per_segment:
        groups: dict[int, list[float]] = {}
        for n_spk, value in per_segment:
            groups.setdefault(n_spk, []).append(value)
        for n_spk in sorted(groups):
            mean, half = _ci95(groups[n_spk])
            print(f"segments with {n_spk} speaker(s): DER {_pct(mean)} +/- {_pct(half)} (n={len(groups[n_spk])})")
        mean, half = _ci95([v for _, v in per_segment])
        print(f"all segments: DER {_pct(mean)} +/- {_pct(half)} (n={len(per_segment)})")

    if args.csv:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["file", "DER", "FA", "MS", "SC", "total_speech"])
        for file_id, rep in rows:
            writer.writerow([file_id, rep.der, rep.false_alarm, rep.missed, rep.confusion, rep.total_speech])
        writer.writerow(["TOTAL", fa + ms + sc, fa, ms, sc, speech])
        _emit(args.csv, buf.getvalue())
    return EXIT_OK


def _emit(target: str, text: str) -> None:
    if target == "-":
        sys.stdout.write(text)
    else:
        Path(target).write_text(text)


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_run_config(args)
    latencies = parse_floats(args.latencies, "latencies")
    base = cfg.pipeline
    for lat in latencies:
        if not base.step <= lat <= base.window:
            raise ConfigError(f"latencies: {lat} outside the valid range [{base.step}, {base.window}]")
    if not args.input.exists():
        raise DataError(f"file not found: {args.input}")
    refs = _read_rttm(args.reference)
    file_id = args.file_id or args.input.stem
    if file_id not in refs:
        if len(refs) != 1:
            raise DataError(f"reference has no file id {file_id!r}")
        file_id = next(iter(refs))
    reference = refs[file_id]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["latency", "DER", "FA", "MS", "SC"])
    for lat in latencies:
        try:
            pcfg = PipelineConfig(**{**asdict(base), "latency": lat})
        except ValueError as exc:
            raise ConfigError(f"latency: {exc}") from None
        hyp = diarize_file(cfg, args.input, pcfg)
        rep = metrics.der(reference, hyp, collar=args.collar)
        writer.writerow([lat, rep.der, rep.false_alarm, rep.missed, rep.confusion])
        print(f"latency {lat}: DER {_pct(rep.der)} FA {_pct(rep.false_alarm)} MS {_pct(rep.missed)} SC {_pct(rep.confusion)}", file=sys.stderr)
    _emit(args.csv, buf.getvalue())
    return EXIT_OK


def cmd_sep_eval(args: argparse.Namespace) -> int:
    def load(paths):
        out = []
        for p in paths:
            if not Path(p).exists():
                raise DataError(f"file not found: {p}")
            out.append(open_wav(p).samples)
        return out

    ests, refs = load(args.est), load(args.ref)
    n = min(len(x) for x in ests + refs)
    ests = [x[:n] for x in ests]
    refs = [x[:n] for x in refs]
    if args.mode == "pit":
        score = metrics.pit_si_sdr(ests, refs)
    elif args.mode == "all-outputs":
        score = metrics.all_outputs_eval(ests, refs)
    else:
        score = metrics.pis_eval(ests, refs, len(refs))
    padded = len(score.assignment) - len(refs)
    for j, (e, value) in enumerate(zip(score.assignment, score.per_source)):
        name = args.ref[j] if j < len(refs) else f"<zero reference {j - len(refs) + 1}/{padded}>"
        print(f"{name} <- {args.est[e]}: {value:.2f} dB")
    print(f"mean SI-SDR ({args.mode}): {score.mean_si_sdr:.2f} dB")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        scenario = synth.generate(args.num_speakers, args.duration, args.overlap_ratio, args.seed)
    except synth.ScenarioConfigError as exc:
        raise ConfigError(str(exc)) from None
    paths = synth.save_scenario(scenario, args.outdir, args.file_id)
    bands = ",".join(f"{lo:g}-{hi:g}" for lo, hi in scenario.bands.values())
    print(f"wrote {paths['mixture']} and {paths['rttm']} ({scenario.num_speakers} stems)")
    print(f"measured overlap ratio: {scenario.measured_overlap:.3f}")
    print(f"speaker bands: {bands}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sepdiar", description="Separation-guided online speaker diarization.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="diarize WAV files into RTTM")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--outdir", type=Path, default=Path("."))
    p.add_argument("--jobs", type=int, default=1, help="files processed in parallel")
    _add_pipeline_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="DER / FA / MS / SC of a hypothesis RTTM")
    p.add_argument("reference", type=Path)
    p.add_argument("hypothesis", type=Path)
    p.add_argument("--uem", type=Path)
    p.add_argument("--collar", type=float, default=0.0)
    p.add_argument("--overlap-only", action="store_true")
    p.add_argument("--segment-length", type=float, help="also report per-chunk DER with 95%% CI")
    p.add_argument("--csv", help="write CSV to this path ('-' for stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", help="DER breakdown across latencies")
    p.add_argument("input", type=Path)
    p.add_argument("reference", type=Path)
    p.add_argument("--latencies", default="0.5,1.0,2.0,3.0,4.0,5.0")
    p.add_argument("--file-id")
    p.add_argument("--collar", type=float, default=0.0)
    p.add_argument("--csv", default="-")
    _add_pipeline_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sep-eval", help="SI-SDR of separated sources")
    p.add_argument("--est", nargs="+", required=True)
    p.add_argument("--ref", nargs="+", required=True)
    p.add_argument("--mode", choices=["pit", "all-outputs", "pis-eval"], default="pit")
    p.set_defaults(func=cmd_sep_eval)

    p = sub.add_parser("simulate", help="write a synthetic meeting scenario")
    p.add_argument("--num-speakers", type=int, default=3)
    p.add_argument("--duration", type=float, default=120.0)
    p.add_argument("--overlap-ratio", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", type=Path, required=True)
    p.add_argument("--file-id", default="mixture")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, AudioFormatError, OSError, backends.CapacityError, metrics.ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
