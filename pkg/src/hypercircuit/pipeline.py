"""Run configuration, device presets and the glue between stages."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, fields
from typing import Any, Optional

import numpy as np

from . import circuit
from .errors import ValidationError
from .hypgeo import TilingSpec, generate_tiling, hyperbolic_distance
from .lattice import FlakeSpec, LatticeGraph, build_flake, medial_lattice

PRESETS: dict[str, dict[str, Any]] = {
    "paper-83": {"p": 8, "q": 3, "selection": "center_plus_edge_neighbors", "kagome": False,
                 "distance_basis": "euclidean", "gap_threshold": 0.25},
    "paper-124": {"p": 12, "q": 4, "selection": "center_plus_vertex_attached", "positions": [0, 3, 6, 9],
                  "kagome": False, "distance_basis": "euclidean", "gap_threshold": 0.2},
    "paper-83-kagome": {"p": 8, "q": 3, "selection": "center_plus_edge_neighbors", "kagome": True,
                        "distance_basis": "euclidean", "gap_threshold": 0.25},
    "paper-124-kagome": {"p": 12, "q": 4, "selection": "center_plus_vertex_attached", "positions": [0, 3, 6, 9],
                         "kagome": True, "distance_basis": "euclidean", "gap_threshold": 0.2},
    # equal coupling between all neighbours
    "uniform-83": {"p": 8, "q": 3, "selection": "center_plus_edge_neighbors", "kagome": False,
                     "distance_basis": "uniform", "gap_threshold": 0.25},
    "uniform-124": {"p": 12, "q": 4, "selection": "center_plus_vertex_attached", "positions": [0, 3, 6, 9],
                      "kagome": False, "distance_basis": "uniform", "gap_threshold": 0.2},
    "uniform-83-kagome": {"p": 8, "q": 3, "selection": "center_plus_edge_neighbors", "kagome": True,
                            "distance_basis": "uniform", "gap_threshold": 0.25},
    "uniform-124-kagome": {"p": 12, "q": 4, "selection": "center_plus_vertex_attached", "positions": [0, 3, 6, 9],
                             "kagome": True, "distance_basis": "uniform", "gap_threshold": 0.2},
}


@dataclass
class PipelineConfig:
    preset: Optional[str] = None
    # lattice
    p: int = 8
    q: int = 3
    depth: int = 1
    selection: str = "center_plus_edge_neighbors"
    positions: list = field(default_factory=list)
    face_ids: list = field(default_factory=list)
    kagome: bool = False
    # spectrum
    weighting: str = "uniform"
    dos_bin_width: float = 0.03
    gap_threshold: float = 0.25
    degeneracy_tol: float = 1e-8
    # circuit
    f0_hz: float = circuit.F0_DEFAULT
    impedance_ohm: float = circuit.Z_RES_DEFAULT
    z0_ohm: float = circuit.Z0_DEFAULT
    c_ref_f: float = circuit.C_REF_DEFAULT
    port_coupling_f: float = circuit.C_PORT_DEFAULT
    distance_basis: str = "euclidean"
    island_ground_f: float = 0.0
    n_ports: int = 4
    port_vertices: list = field(default_factory=list)
    out_port: int = 0
    shunt_conductance_s: float = 0.0
    f_start_hz: Optional[float] = None
    f_stop_hz: Optional[float] = None
    n_points: int = circuit.SWEEP_POINTS
    # analysis
    peak_prominence_db: float = 3.0
    peak_separation_hz: float = 1e6
    cluster_height_db: float = -40.0
    cluster_separation_hz: Optional[float] = None
    cluster_separation_t: float = 0.4
    match_window_hz: Optional[float] = None
    f1_hz: Optional[float] = None
    f2_hz: Optional[float] = None
    synth_linewidth_hz: float = 50e3
    synth_disorder_hz: float = 0.0
    # run
    out_dir: str = "out"
    seed: int = 0

    def validate(self) -> None:
        if self.preset is not None and self.preset not in PRESETS:
            raise ValidationError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        TilingSpec(self.p, self.q, self.depth)
        if self.selection not in ("center_plus_edge_neighbors", "center_plus_vertex_attached", "explicit"):
            raise ValidationError(f"unknown selection {self.selection!r}")
        if self.weighting not in ("uniform", "capacitive"):
            raise ValidationError("weighting must be 'uniform' or 'capacitive'")
        if self.distance_basis not in ("euclidean", "hyperbolic", "uniform"):
            raise ValidationError("distance_basis must be euclidean, hyperbolic or uniform")
        positive = ["dos_bin_width", "gap_threshold", "degeneracy_tol", "f0_hz", "impedance_ohm", "z0_ohm",
                    "c_ref_f", "port_coupling_f", "peak_prominence_db", "peak_separation_hz",
                    "cluster_separation_t", "synth_linewidth_hz"]
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ValidationError(f"{name} must be positive, got {v!r}")
        for name in ("cluster_separation_hz", "match_window_hz", "f_start_hz", "f_stop_hz"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValidationError(f"{name} must be positive when set")
        if self.n_points < 2:
            raise ValidationError("n_points must be at least 2")
        if self.n_ports < 1:
            raise ValidationError("n_ports must be at least 1")
        if not 0 <= self.out_port < max(self.n_ports, len(self.port_vertices)):
            raise ValidationError("out_port must index one of the ports")
        if self.shunt_conductance_s < 0 or self.island_ground_f < 0 or self.synth_disorder_hz < 0:
            raise ValidationError("conductance, island and disorder values must be non-negative")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def build(cls, *layers: dict) -> "PipelineConfig":
        """Merge ``layers`` (later wins) on top of defaults and the chosen preset."""
        known = {f.name for f in fields(cls)}
        for layer in layers:
            unknown = set(layer) - known
            if unknown:
                raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        explicit: dict[str, Any] = {}
        for layer in layers:
            explicit.update({k: v for k, v in layer.items() if v is not None})
        preset = explicit.get("preset")
        if preset is not None and preset not in PRESETS:
            raise ValidationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        base = dict(PRESETS.get(preset, {}))
        base.update(explicit)
        cfg = cls(**base)
        cfg.validate()
        return cfg

    # derived quantities

    @property
    def tiling_spec(self) -> TilingSpec:
        return TilingSpec(self.p, self.q, self.depth)

    @property
    def flake_spec(self) -> FlakeSpec:
        return FlakeSpec(self.tiling_spec, self.selection, tuple(self.positions), tuple(self.face_ids))

    @property
    def frequencies(self) -> np.ndarray:
        lo = self.f_start_hz if self.f_start_hz is not None else self.f0_hz * (1 - circuit.SWEEP_SPAN)
        hi = self.f_stop_hz if self.f_stop_hz is not None else self.f0_hz * (1 + circuit.SWEEP_SPAN)
        if not hi > lo:
            raise ValidationError("sweep stop frequency must exceed start frequency")
        return np.linspace(lo, hi, self.n_points)

    @property
    def hz_per_hopping(self) -> float:
        """First-order frequency shift per unit of (normalised) hopping.

        With compensated tanks the modes sit at ``f0 / sqrt(1 - (c_ref/C) * E)``,
        so a unit energy step moves the resonance by about ``f0 * c_ref / (2C)``.
        """
        _, c_res = circuit.resonator_lc(self.f0_hz, self.impedance_ohm)
        return self.f0_hz * self.c_ref_f / (2.0 * c_res)

    @property
    def cluster_separation(self) -> float:
        if self.cluster_separation_hz is not None:
            return self.cluster_separation_hz
        return self.cluster_separation_t * self.hz_per_hopping

    @property
    def match_window(self) -> float:
        return self.match_window_hz if self.match_window_hz is not None else self.peak_separation_hz


def build_parent(cfg: PipelineConfig) -> LatticeGraph:
    return build_flake(generate_tiling(cfg.tiling_spec), cfg.flake_spec)


def boundary_ports(g: LatticeGraph, n_ports: int) -> list[int]:
    """Boundary vertices spread out by farthest-point sampling in the hyperbolic metric.

    Boundary means degree below the graph's maximum.  The first port is the
    outermost such vertex (lowest id on ties).
    """
    deg = g.degrees()
    cand = [k for k in range(g.n_vertices) if deg[k] < deg.max()] or list(range(g.n_vertices))
    if n_ports > len(cand):
        raise ValidationError(f"cannot place {n_ports} ports on {len(cand)} boundary vertices")
    radius = {k: round(float(abs(g.positions[k])), 12) for k in cand}
    ports = [min(cand, key=lambda k: (-radius[k], k))]
    while len(ports) < n_ports:
        def spread(k):
            return round(min(hyperbolic_distance(g.positions[k], g.positions[p]) for p in ports), 9)

        ports.append(min((k for k in cand if k not in ports), key=lambda k: (-spread(k), k)))
    return ports


def port_vertices(cfg: PipelineConfig, g: LatticeGraph) -> list[int]:
    if cfg.port_vertices:
        return list(cfg.port_vertices)
    return boundary_ports(g, cfg.n_ports)


def coupling_plan(cfg: PipelineConfig, g: LatticeGraph) -> circuit.CouplingPlan:
    return circuit.derive_couplings(g, cfg.c_ref_f, cfg.distance_basis)


def design(cfg: PipelineConfig, parent: LatticeGraph, medial: LatticeGraph | None = None) -> circuit.Netlist:
    if cfg.kagome:
        medial = medial if medial is not None else medial_lattice(parent)
        return circuit.synthesize_coupler_netlist(
            parent, medial, coupling_plan(cfg, medial), cfg.f0_hz, cfg.impedance_ohm,
            port_vertices(cfg, medial), cfg.port_coupling_f, cfg.z0_ohm, cfg.island_ground_f,
            cfg.shunt_conductance_s,
        )
    return circuit.synthesize_netlist(
        parent, coupling_plan(cfg, parent), cfg.f0_hz, cfg.impedance_ohm, port_vertices(cfg, parent),
        cfg.port_coupling_f, cfg.z0_ohm, True, cfg.shunt_conductance_s,
    )
