"""Command-line entry point: ``hypercircuit <command> [options]``.

Every command reads its inputs, computes everything in memory and only
then writes its outputs (atomically, via rename).  Data files contain no
timestamps; run metadata goes to ``run_manifest.json``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, analysis, circuit, spectrum
from .errors import CapacityError, HypercircuitError, NumericalError, ValidationError
from .hypgeo import Tiling, generate_tiling
from .lattice import LatticeGraph, build_flake, medial_lattice
from .pipeline import PipelineConfig, build_parent, coupling_plan, design

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


class Outputs:
    """Collects files and commits them together at the end of a command."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str) -> None:
        self.files[name] = text

    def commit(self, cfg: PipelineConfig, command: str) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.files["effective_config.json"] = cfg.to_json() + "\n"
        manifest = {
            "command": command,
            "version": __version__,
            "created_unix": time.time(),
            "files": sorted(self.files),
        }
        staged = []
        try:
            for name, text in sorted(self.files.items()) + [("run_manifest.json", json.dumps(manifest, indent=1) + "\n")]:
                fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=f".{name}.")
                with os.fdopen(fd, "w", newline="") as fh:
                    fh.write(text)
                staged.append((tmp, self.out_dir / name))
        except BaseException:
            for tmp, _ in staged:
                os.unlink(tmp)
            raise
        for tmp, dest in staged:
            os.replace(tmp, dest)


def _read(path: Path) -> str:
    if not path.is_file():
        raise ValidationError(f"input file not found: {path}")
    return path.read_text()


def _load_graph(path: Path) -> LatticeGraph:
    try:
        return LatticeGraph.from_json(_read(path))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: not a lattice JSON file ({exc})") from None


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1) + "\n"


# -- commands -------------------------------------------------------------------------


def cmd_tile(cfg: PipelineConfig, args, out: Outputs) -> str:
    t = generate_tiling(cfg.tiling_spec)
    out.add("tiling.json", t.to_json() + "\n")
    return f"{{{cfg.p},{cfg.q}}} depth={cfg.depth}: faces={len(t.faces)} vertices={len(t.vertices)}"


def cmd_flake(cfg: PipelineConfig, args, out: Outputs) -> str:
    tiling_path = args.tiling or Path(cfg.out_dir) / "tiling.json"
    if args.tiling or tiling_path.is_file():
        tiling = Tiling.from_dict(json.loads(_read(Path(tiling_path))))
    else:
        tiling = generate_tiling(cfg.tiling_spec)
    g = build_flake(tiling, cfg.flake_spec)
    out.add("lattice.json", g.to_json() + "\n")
    return g.summary()


def cmd_medial(cfg: PipelineConfig, args, out: Outputs) -> str:
    path = args.lattice or Path(cfg.out_dir) / "lattice.json"
    m = medial_lattice(_load_graph(Path(path)))
    out.add("medial.json", m.to_json() + "\n")
    return m.summary()


def _default_lattice_path(cfg: PipelineConfig) -> Path:
    return Path(cfg.out_dir) / ("medial.json" if cfg.kagome else "lattice.json")


def cmd_spectrum(cfg: PipelineConfig, args, out: Outputs) -> str:
    g = _load_graph(Path(args.lattice or _default_lattice_path(cfg)))
    weighting = coupling_plan(cfg, g) if cfg.weighting == "capacitive" else "uniform"
    spec = spectrum.adjacency_energies(g, weighting)
    report = spectrum.spectrum_report(spec, cfg.dos_bin_width, cfg.gap_threshold, cfg.degeneracy_tol)
    report["weighting"] = cfg.weighting
    out.add("spectrum.csv", spectrum.spectrum_csv(spec, cfg.degeneracy_tol))
    out.add("spectrum.json", _dumps(report))
    levels = spectrum.group_degeneracies(spec, cfg.degeneracy_tol)
    lines = [
        f"states={len(spec)} levels={len(levels)} range=[{spec.energies[0]:.6f}, {spec.energies[-1]:.6f}] "
        f"max_multiplicity={max(m for _, m in levels)} weighting={cfg.weighting}",
        f"gaps (threshold {cfg.gap_threshold}): {len(report['gaps']['intervals'])}",
    ]
    for lo, hi in report["gaps"]["intervals"]:
        lines.append(f"  gap [{lo:.4f}, {hi:.4f}] width {hi - lo:.4f}")
    if g.kind == "medial":
        flat = [(e, m) for e, m in levels if abs(e - spectrum.FLAT_BAND_ENERGY) < 1e-6]
        mult = flat[0][1] if flat else 0
        lines.append(f"flat band: E=-2, multiplicity {mult}")
        parent_path = Path(args.parent) if args.parent else Path(cfg.out_dir) / "lattice.json"
        if parent_path.is_file():
            parent = _load_graph(parent_path)
            cls = spectrum.construct_cls(parent, g)
            a = spectrum.hopping_matrix(g)
            dense = cls.dense()
            worst = float(np.max(np.linalg.norm(a @ dense + 2.0 * dense, axis=0)))
            if worst > spectrum.RESIDUAL_TOL:
                raise NumericalError(f"compact localized state residual {worst:.3e}")
            out.add("cls.json", cls.to_json() + "\n")
            lines.append(f"compact localized states: {len(cls)} (max residual {worst:.1e})")
    return "\n".join(lines)


def cmd_design(cfg: PipelineConfig, args, out: Outputs) -> str:
    parent = _load_graph(Path(args.lattice or Path(cfg.out_dir) / "lattice.json"))
    if parent.kind != "parent":
        raise ValidationError("design expects the parent lattice; kagome devices are set with --kagome")
    medial = None
    if cfg.kagome:
        mpath = Path(cfg.out_dir) / "medial.json"
        medial = _load_graph(mpath) if mpath.is_file() else medial_lattice(parent)
    net = design(cfg, parent, medial)
    out.add("netlist.cir", net.to_text())
    n_res = len(net.inductors)
    return f"resonators={n_res} capacitors={len(net.capacitors)} inductors={len(net.inductors)} ports={len(net.ports)}"


def cmd_simulate(cfg: PipelineConfig, args, out: Outputs) -> str:
    net = circuit.Netlist.from_text(_read(Path(args.netlist or Path(cfg.out_dir) / "netlist.cir")))
    sweep = circuit.ac_sweep(net, cfg.frequencies)
    modes = circuit.netlist_modes(net)
    out.add("sweep.csv", sweep.to_csv())
    out.add(f"sweep.s{sweep.n_ports}p", circuit.touchstone_text(sweep, cfg.z0_ohm))
    out.add("modes.csv", "index,frequency_hz\n" + "".join(f"{k},{f!r}\n" for k, f in enumerate(modes.tolist())))
    msg = f"points={len(sweep.frequencies)} ports={sweep.n_ports} modes={len(modes)}"
    if sweep.failed:
        msg += f" singular_points={len(sweep.failed)}"
    return msg


def _load_trace(path: Path, cfg: PipelineConfig) -> analysis.Trace:
    text = _read(path)
    suffix = path.suffix.lower()
    if suffix.startswith(".s") and suffix.endswith("p") and suffix[2:-1].isdigit():
        sweep = circuit.read_touchstone(text, int(suffix[2:-1]))
        return _sweep_trace(sweep, cfg)
    header = text.split("\n", 1)[0]
    if "re_S" in header:
        return _sweep_trace(circuit.SweepResult.from_csv(text), cfg)
    return analysis.read_trace_csv(text)


def _sweep_trace(sweep: circuit.SweepResult, cfg: PipelineConfig) -> analysis.Trace:
    if sweep.n_ports == 1:
        raise ValidationError("a one-port sweep has no transmission")
    out_port = cfg.out_port if cfg.out_port < sweep.n_ports else 0
    ins = [p for p in range(sweep.n_ports) if p != out_port]
    return circuit.simulated_trace(sweep, out_port, ins)


def _synthetic_trace(cfg: PipelineConfig) -> analysis.Trace:
    report = json.loads(_read(Path(cfg.out_dir) / "spectrum.json"))
    energies = np.array(report["energies"])
    f1, f2 = _anchor_defaults(cfg, energies)
    levels = analysis.distinct_levels(energies, cfg.degeneracy_tol)
    mapped = analysis.map_eigenvalues(energies, f1, f2, anchors=(levels[0], levels[1]))
    if cfg.synth_disorder_hz > 0:
        rng = np.random.default_rng(cfg.seed)
        mapped = mapped + rng.normal(0.0, cfg.synth_disorder_hz, size=len(mapped))
    return analysis.lorentzian_trace(cfg.frequencies, np.sort(mapped), cfg.synth_linewidth_hz)


def _anchor_defaults(cfg: PipelineConfig, energies: np.ndarray) -> tuple[float, float]:
    """First-order device model frequencies of the two lowest levels (for synthesis)."""
    levels = analysis.distinct_levels(energies, cfg.degeneracy_tol)
    f1 = cfg.f1_hz if cfg.f1_hz is not None else cfg.f0_hz + cfg.hz_per_hopping * levels[0]
    f2 = cfg.f2_hz if cfg.f2_hz is not None else cfg.f0_hz + cfg.hz_per_hopping * levels[1]
    return f1, f2


def cmd_analyze(cfg: PipelineConfig, args, out: Outputs) -> str:
    if args.synthesize:
        traces = [_synthetic_trace(cfg)]
    elif args.trace:
        traces = [_load_trace(Path(p), cfg) for p in args.trace]
    else:
        traces = [_load_trace(Path(cfg.out_dir) / "sweep.csv", cfg)]
    trace = analysis.aggregate_max(traces)
    peaks = analysis.find_peaks(trace, cfg.peak_prominence_db, cfg.peak_separation_hz)
    clusters = analysis.cluster_peaks(peaks, cfg.cluster_height_db, cfg.cluster_separation)
    out.add("trace.csv", trace.to_csv())
    out.add("peaks.csv", peaks.to_csv())
    out.add(
        "clusters.json",
        _dumps(
            {
                "separation_hz": cfg.cluster_separation,
                "height_threshold_db": cfg.cluster_height_db,
                "clusters": [
                    {"members": c.members, "f_lo": c.f_lo, "f_hi": c.f_hi, "max_height_db": c.max_height}
                    for c in clusters
                ],
                "unclustered": analysis.unclustered_peaks(peaks, clusters),
            }
        ),
    )
    return f"traces={len(traces)} points={len(trace)} peaks={len(peaks)} clusters={len(clusters)}"


def _read_peaks(path: Path) -> analysis.PeakSet:
    rows = list(csv.DictReader(io.StringIO(_read(path))))
    return analysis.PeakSet(
        [analysis.Peak(float(r["frequency_hz"]), float(r["height_db"]), float(r["prominence_db"]), k) for k, r in enumerate(rows)]
    )


def cmd_compare(cfg: PipelineConfig, args, out: Outputs) -> str:
    d = Path(cfg.out_dir)
    report = json.loads(_read(d / "spectrum.json"))
    peaks = _read_peaks(d / "peaks.csv")
    cl_data = json.loads(_read(d / "clusters.json"))
    clusters = [analysis.Cluster(c["members"], c["f_lo"], c["f_hi"], c["max_height_db"]) for c in cl_data["clusters"]]
    energies = np.array(report["energies"])
    levels = analysis.distinct_levels(energies, cfg.degeneracy_tol)
    if len(levels) < 2:
        raise ValidationError("need at least two distinct energy levels to anchor the mapping")
    if cfg.f1_hz is not None and cfg.f2_hz is not None:
        f1, f2 = cfg.f1_hz, cfg.f2_hz
    else:
        if len(peaks) < 2:
            raise ValidationError("fewer than two peaks detected; pass f1_hz and f2_hz explicitly")
        f1, f2 = float(peaks[0].frequency), float(peaks[1].frequency)
    mapped = analysis.map_eigenvalues(energies, f1, f2, anchors=(levels[0], levels[1]))
    gaps = [tuple(g) for g in report["gaps"]["intervals"]]
    rep = analysis.compare(
        energies, mapped, peaks, clusters, gaps, cfg.match_window, report.get("weighting", cfg.weighting),
        (levels[0], levels[1], f1, f2),
    )
    out.add("report.json", rep.to_json() + "\n")
    out.add("report.txt", rep.table())
    mult = spectrum.multiplicities(spectrum.Spectrum(energies, np.eye(len(energies))), cfg.degeneracy_tol)
    out.add(
        "series_mapped_eigenvalues.csv",
        "index,energy,frequency_hz,multiplicity\n"
        + "".join(f"{k},{e!r},{f!r},{m}\n" for k, (e, f, m) in enumerate(zip(energies.tolist(), mapped.tolist(), mult.tolist()))),
    )
    out.add(
        "series_peak_markers.csv",
        "frequency_hz,height_db,cluster\n"
        + "".join(
            f"{p.frequency!r},{p.height!r},{next((ci for ci, c in enumerate(clusters) if k in c.members), '')}\n"
            for k, p in enumerate(peaks)
        ),
    )
    n_aligned = sum(g.trace_gap is not None for g in rep.gaps)
    return (
        f"eigenvalues={len(rep.matches)} unmatched={len(rep.unmatched)} clusters={len(clusters)} "
        f"theory_gaps={len(rep.gaps)} aligned_gaps={n_aligned}"
    )


COMMANDS: dict[str, tuple[Callable, str]] = {
    "tile": (cmd_tile, "generate a {p,q} tiling"),
    "flake": (cmd_flake, "cut a finite flake out of the tiling"),
    "medial": (cmd_medial, "build the kagome-like (medial) lattice of a flake"),
    "spectrum": (cmd_spectrum, "tight-binding spectrum, DOS, gaps, IPR and CLSs"),
    "design": (cmd_design, "synthesize the resonator netlist"),
    "simulate": (cmd_simulate, "AC sweep of the netlist (S-parameters)"),
    "analyze": (cmd_analyze, "aggregate traces, find peaks and clusters"),
    "compare": (cmd_compare, "map eigenvalues onto the trace and report residuals"),
}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("configuration (overrides --config)")
    for f in fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name in ("out_dir", "seed"):
            continue
        if f.type in ("bool",) or f.type is bool:
            g.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        elif f.type in ("list",) or f.type is list:
            g.add_argument(flag, dest=f.name, type=int, nargs="*", default=None)
        elif "int" in str(f.type):
            g.add_argument(flag, dest=f.name, type=int, default=None)
        elif "float" in str(f.type):
            g.add_argument(flag, dest=f.name, type=float, default=None)
        else:
            g.add_argument(flag, dest=f.name, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypercircuit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--out-dir", dest="out_dir", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--lattice", type=Path, help="lattice JSON input")
        if name == "flake":
            p.add_argument("--tiling", type=Path, help="tiling JSON input (default: generate)")
        if name == "spectrum":
            p.add_argument("--parent", type=Path, help="parent lattice for compact localized states")
        if name == "simulate":
            p.add_argument("--netlist", type=Path)
        if name == "analyze":
            p.add_argument("--trace", action="append", help="trace file (repeat to aggregate by maximum)")
            p.add_argument("--synthesize", action="store_true", help="synthesize a trace from spectrum.json")
        _add_config_flags(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        layers = []
        if args.config is not None:
            try:
                layers.append(json.loads(_read(args.config)))
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{args.config}: invalid JSON ({exc})") from None
        cli_layer = {f.name: getattr(args, f.name, None) for f in fields(PipelineConfig)}
        layers.append(cli_layer)
        cfg = PipelineConfig.build(*layers)
        out = Outputs(Path(cfg.out_dir))
        func = COMMANDS[args.command][0]
        message = func(cfg, args, out)
        out.commit(cfg, args.command)
    except (NumericalError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, HypercircuitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(message)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
