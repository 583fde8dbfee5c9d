"""Acceptance suite: one group of checks per numbered criterion.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary ends
with one ``criterion N: PASS/FAIL`` line per criterion.
"""

import json
import math

import numpy as np
import pytest

from hypercircuit.analysis import (
    Peak,
    PeakSet,
    cluster_peaks,
    compare,
    distinct_levels,
    find_peaks,
    lorentzian_trace,
    map_eigenvalues,
    unclustered_peaks,
)
from hypercircuit.circuit import (
    Netlist,
    ac_sweep,
    derive_couplings,
    netlist_modes,
    resonator_lc,
    synthesize_netlist,
)
from hypercircuit.cli import main
from hypercircuit.hypgeo import hyperbolic_distance, reflect
from hypercircuit.lattice import is_bipartite, medial_lattice
from hypercircuit.pipeline import PipelineConfig, build_parent, design
from hypercircuit.spectrum import (
    Spectrum,
    adjacency_energies,
    construct_cls,
    detect_gaps,
    dos,
    eigenspace_projector,
    group_degeneracies,
    hopping_matrix,
    ipr,
    is_symmetric_spectrum,
    span_projector,
)

F0, Z = 6.5e9, 50.0
GRID = np.linspace(6.2e9, 6.8e9, 60001)
STEP = GRID[1] - GRID[0]


def criterion(n):
    return pytest.mark.criterion(n)


# -- 1: flake counts ----------------------------------------------------------------


@criterion(1)
def test_c1_paper_83_counts(flake83):
    assert (flake83.n_vertices, flake83.n_edges, flake83.n_faces) == (48, 56, 9)


@criterion(1)
def test_c1_paper_124_counts(flake124):
    assert (flake124.n_vertices, flake124.n_edges, flake124.n_faces) == (56, 60, 5)


@criterion(1)
def test_c1_medial_83_counts(kagome83):
    assert (kagome83.n_vertices, kagome83.n_edges) == (56, 80)


# -- 2: {8,3} spectrum -----------------------------------------------------------------


@criterion(2)
def test_c2_symmetric(flake83):
    e = adjacency_energies(flake83).energies
    assert np.max(np.abs(e + e[::-1])) < 1e-9


@criterion(2)
def test_c2_max_degeneracy_two(flake83):
    levels = group_degeneracies(adjacency_energies(flake83), 1e-8)
    assert max(m for _, m in levels) == 2


@criterion(2)
def test_c2_six_gaps(flake83):
    gaps = detect_gaps(adjacency_energies(flake83), 0.25)
    assert len(gaps) == 6, f"measured {len(gaps)} gaps, widths {np.round(gaps.widths, 3).tolist()}"


@criterion(2)
def test_c2_widest_gaps_bracket_unit_energy(flake83):
    gaps = detect_gaps(adjacency_energies(flake83), 0.25)
    widest = sorted(gaps.gaps, key=lambda g: g[1] - g[0])[-2:]
    assert all(any(lo < s < hi for lo, hi in widest) for s in (-1.0, 1.0))


# -- 3: {12,4} spectrum ----------------------------------------------------------------


@criterion(3)
def test_c3_degeneracy_table(flake124):
    levels = group_degeneracies(adjacency_energies(flake124), 1e-8)

    def mult(target):
        hits = [m for e, m in levels if abs(e - target) < 1e-9]
        return hits[0] if hits else 0

    assert mult(0.0) == 6
    assert mult(1.0) == mult(-1.0) == 5
    assert mult(math.sqrt(3)) == mult(-math.sqrt(3)) == 4
    assert abs(math.sqrt(3) - 1.732) < 1e-3


@criterion(3)
def test_c3_four_gaps(flake124):
    gaps = detect_gaps(adjacency_energies(flake124), 0.2)
    assert len(gaps) == 4, f"measured {len(gaps)} gaps, widths {np.round(gaps.widths, 3).tolist()}"


# -- 4: kagome-like flat band ------------------------------------------------------------


@criterion(4)
def test_c4_ground_state_and_range(kagome83):
    spec = adjacency_energies(kagome83)
    levels = group_degeneracies(spec, 1e-8)
    assert abs(levels[0][0] + 2) < 1e-9 and levels[0][1] == 9
    assert spec.energies.min() >= -2 - 1e-9 and spec.energies.max() < 4


@criterion(4)
def test_c4_flat_band_fraction(kagome83):
    spec = adjacency_energies(kagome83)
    flat = int(np.sum(np.abs(spec.energies + 2) < 1e-9))
    assert flat / kagome83.n_vertices == pytest.approx(9 / 56)
    assert dos(spec).weight_at(-2.0) == pytest.approx(9 / 56)


@criterion(4)
def test_c4_cls_residual_and_span(flake83, kagome83):
    cls = construct_cls(flake83, kagome83)
    psi = cls.dense()
    a = hopping_matrix(kagome83)
    assert len(cls) == 9
    assert np.max(np.linalg.norm(a @ psi + 2 * psi, axis=0)) < 1e-9
    proj = eigenspace_projector(adjacency_energies(kagome83), -2.0)
    assert np.max(np.abs(span_projector(psi) - proj)) < 1e-8


# -- 5: parent range -------------------------------------------------------------------


@criterion(5)
def test_c5_range_inside_three(flake83):
    e = adjacency_energies(flake83).energies
    assert 3 - np.max(np.abs(e)) > 1e-6


# -- 6: circuit bridge -------------------------------------------------------------------


@criterion(6)
def test_c6_mode_splittings_track_weighted_eigenvalues():
    _, c_res = resonator_lc(F0, Z)
    cfg = PipelineConfig.build({"preset": "paper-83", "c_ref_f": 1e-3 * c_res})
    parent = build_parent(cfg)
    net = Netlist.from_text(design(cfg, parent).to_text())
    modes = netlist_modes(net)
    splitting = np.sort((modes - cfg.f0_hz) / cfg.f0_hz)
    lam = np.sort(adjacency_energies(parent, derive_couplings(parent, cfg.c_ref_f, cfg.distance_basis)).energies)
    slope, intercept = np.polyfit(lam, splitting, 1)
    resid = splitting - (slope * lam + intercept)
    assert len(modes) == 48
    assert np.linalg.norm(resid) / np.linalg.norm(splitting) < 0.01
    assert slope == pytest.approx(0.5e-3, rel=0.01)


# -- 7: MNA correctness ------------------------------------------------------------------


def _single_resonator(cp=5e-15):
    l, c = resonator_lc(F0, Z)
    net = Netlist(capacitors=[(1, 0, c), (1, 2, cp), (1, 3, cp)], inductors=[(1, 0, l)], ports=[(2, 50.0), (3, 50.0)])
    return net, l, c, cp


def _abcd_s21(f, l, c, cp, z0=50.0):
    w = 2 * np.pi * f
    zs = 1 / (1j * w * cp)
    y = 1j * w * c + 1 / (1j * w * l)
    a = 1 + zs * y
    b = 2 * zs + zs * zs * y
    return 2 / (2 * a + b / z0 + y * z0)


@criterion(7)
def test_c7_single_resonator_closed_form():
    net, l, c, cp = _single_resonator()
    f = np.linspace(6.3e9, 6.6e9, 30001)
    s21 = ac_sweep(net, f).s[:, 1, 0]
    ref = np.abs(_abcd_s21(f, l, c, cp))
    assert np.max(np.abs(np.abs(s21) - ref) / ref) < 1e-6


@criterion(7)
def test_c7_reciprocity_and_unitarity(flake83):
    net = synthesize_netlist(flake83, derive_couplings(flake83), port_vertices=[17, 36, 46, 24])
    s = ac_sweep(net, np.linspace(6.45e9, 6.55e9, 2001)).s
    assert np.max(np.abs(s - np.swapaxes(s, 1, 2))) < 1e-9
    eye = np.eye(s.shape[1])
    assert np.max(np.abs(np.conj(np.swapaxes(s, 1, 2)) @ s - eye)) < 1e-6


# -- 8: eigenvalue-to-frequency mapping ---------------------------------------------------


@criterion(8)
def test_c8_anchor_identities():
    f = map_eigenvalues([-2.5, -1.0, 0.3, 2.2], 6.4e9, 6.41e9)
    assert f[0] == 6.4e9 and f[1] == 6.41e9


@criterion(8)
def test_c8_affinity():
    e = np.array([-2.5, -1.0, 0.3, 2.2])
    f = map_eigenvalues(e, 6.4e9, 6.41e9)
    expected = 6.4e9 + (e - e[0]) * (6.41e9 - 6.4e9) / (e[1] - e[0])
    assert np.allclose(f, expected, rtol=4 * np.finfo(float).eps, atol=0)
    mid = map_eigenvalues([-2.5, -1.0, -1.75], 6.4e9, 6.41e9)[2]
    assert mid == pytest.approx(6.405e9, rel=1e-15)


@criterion(8)
def test_c8_round_trip_zero_unmatched(flake83):
    energies = adjacency_energies(flake83).energies
    levels = distinct_levels(energies)
    mapped = map_eigenvalues(energies, 6.3e9, 6.3e9 + 15e6 * (levels[1] - levels[0]), anchors=levels[:2])
    peaks = find_peaks(lorentzian_trace(GRID, mapped, 5e4), min_separation=1e5)
    remapped = map_eigenvalues(energies, peaks[0].frequency, peaks[1].frequency, anchors=levels[:2])
    report = compare(energies, remapped, peaks, window=1e6)
    assert report.unmatched == []


# -- 9: cluster criteria -----------------------------------------------------------------


def _peakset(freqs, heights):
    return PeakSet([Peak(float(f), float(h), 10.0, k) for k, (f, h) in enumerate(zip(freqs, heights))])


@criterion(9)
def test_c9_nine_peak_flat_band():
    freqs = 6.43e9 + 1.5e6 * np.arange(9)
    peaks = find_peaks(lorentzian_trace(GRID, list(freqs) + [6.6e9], 1e5, peak_db=-15.0))
    clusters = cluster_peaks(peaks, -40.0, 10e6)
    assert len(clusters) == 1 and len(clusters[0]) == 9
    assert unclustered_peaks(peaks, clusters) == [9]


@criterion(9)
def test_c9_more_than_one_peak():
    assert cluster_peaks(_peakset([6.4e9], [-5.0]), -40.0, 10e6) == []


@criterion(9)
def test_c9_height_threshold():
    assert cluster_peaks(_peakset([6.4e9, 6.401e9], [-50.0, -45.0]), -40.0, 10e6) == []
    assert len(cluster_peaks(_peakset([6.4e9, 6.401e9], [-50.0, -20.0]), -40.0, 10e6)) == 1


@criterion(9)
def test_c9_separation():
    peaks = _peakset([6.40e9, 6.405e9, 6.43e9, 6.435e9], [-10.0] * 4)
    clusters = cluster_peaks(peaks, -40.0, 10e6)
    assert [c.members for c in clusters] == [[0, 1], [2, 3]]
    assert len(cluster_peaks(peaks, -40.0, 30e6)) == 1


# -- 10: property suites ------------------------------------------------------------------


@criterion(10)
def test_c10_reflection_involution_and_isometry():
    rng = np.random.default_rng(3)
    for _ in range(200):
        r = np.sqrt(rng.uniform(0, 0.9, 4))
        t = rng.uniform(0, 2 * np.pi, 4)
        a, b, z, w = r * np.exp(1j * t)
        if abs(a - b) < 1e-3:
            continue
        zz = reflect(z, (a, b)).z
        assert abs(reflect(zz, (a, b)).z - z) < 1e-9
        ww = reflect(w, (a, b)).z
        assert abs(hyperbolic_distance(zz, ww) - hyperbolic_distance(z, w)) < 1e-9


@criterion(10)
def test_c10_medial_identities(flake83, flake124, random_flakes):
    for g in [flake83, flake124] + [g for g in random_flakes if g.kind == "parent"]:
        m = medial_lattice(g)
        deg = g.degrees()
        assert m.n_vertices == g.n_edges
        assert m.n_edges == int(np.sum(deg * (deg - 1) // 2))


@criterion(10)
def test_c10_bipartite_iff_symmetric(flake83, flake124, kagome83, kagome124, random_flakes):
    graphs = [flake83, flake124, kagome83, kagome124] + list(random_flakes)
    assert len(random_flakes) == 50
    for g in graphs:
        assert is_bipartite(g)[0] == is_symmetric_spectrum(adjacency_energies(g))


@criterion(10)
def test_c10_dos_normalised_and_ipr_bounds(flake83, flake124, kagome83, random_flakes):
    for g in [flake83, flake124, kagome83] + list(random_flakes):
        spec = adjacency_energies(g)
        for width in (0.01, 0.03, 0.2):
            assert dos(spec, width).weights.sum() == pytest.approx(1.0)
        values = ipr(spec)
        assert np.all(values >= 1 / g.n_vertices - 1e-12) and np.all(values <= 1 + 1e-12)
    local = np.zeros((5, 1))
    local[2] = 1.0
    assert ipr(Spectrum(np.zeros(1), local))[0] == 1.0


@criterion(10)
def test_c10_cli_outputs_byte_identical(tmp_path, capsys):
    commands = ["tile", "flake", "medial", "spectrum", "design", "simulate", "analyze", "compare"]

    def run_chain():
        for cmd in commands:
            assert main([cmd, "--preset", "paper-83-kagome", "--n-points", "2001", "--out-dir", str(tmp_path)]) == 0
        capsys.readouterr()
        return {p.name: p.read_bytes() for p in sorted(tmp_path.iterdir()) if p.name != "run_manifest.json"}

    first, second = run_chain(), run_chain()
    assert set(first) == set(second) and len(first) >= 15
    assert [k for k in first if first[k] != second[k]] == []
    assert json.loads((tmp_path / "effective_config.json").read_text())["kagome"] is True


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
