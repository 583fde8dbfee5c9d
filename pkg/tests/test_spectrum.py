import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypercircuit.circuit import derive_couplings
from hypercircuit.errors import GraphError, OddFaceError, ValidationError
from hypercircuit.hypgeo import TilingSpec
from hypercircuit.lattice import LatticeGraph, is_bipartite, medial_lattice, single_face
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
    multiplicities,
    span_projector,
    spectrum_csv,
    spectrum_report,
)


def _single_vertex():
    return LatticeGraph.from_dict({"kind": "parent", "vertices": [[0, 0.0, 0.0]], "edges": [], "faces": []})


def test_single_vertex_energy_zero():
    spec = adjacency_energies(_single_vertex())
    assert spec.energies.tolist() == [0.0]
    h = dos(spec)
    assert h.weights.tolist() == [1.0]


def test_eigenpairs_residual_and_orthonormality(flake83):
    a = hopping_matrix(flake83)
    spec = adjacency_energies(flake83)
    assert np.all(np.diff(spec.energies) >= 0)
    assert np.max(spec.residuals(a)) < 1e-9
    assert np.max(np.abs(spec.vectors.T @ spec.vectors - np.eye(48))) < 1e-9


def test_83_range_and_symmetry(flake83):
    spec = adjacency_energies(flake83)
    assert -3 < spec.energies.min() and spec.energies.max() < 3
    assert is_symmetric_spectrum(spec)


def test_83_dos_mirror_symmetric(flake83):
    e = adjacency_energies(flake83).energies
    h = dos(Spectrum(e, np.eye(len(e))))
    assert np.allclose(h.centers, -h.centers[::-1])
    assert np.allclose(h.weights, h.weights[::-1])


def test_83_max_degeneracy(flake83):
    levels = group_degeneracies(adjacency_energies(flake83))
    assert max(m for _, m in levels) == 2
    assert sum(m for _, m in levels) == 48


def test_124_degeneracy_table(flake124):
    levels = dict((round(e, 6), m) for e, m in group_degeneracies(adjacency_energies(flake124)))
    r3 = round(math.sqrt(3), 6)
    assert levels[0.0] == 6
    assert levels[1.0] == levels[-1.0] == 5
    assert levels[r3] == levels[-r3] == 4


def test_kagome_ground_state_and_range(kagome83):
    spec = adjacency_energies(kagome83)
    assert abs(spec.energies[0] + 2) < 1e-9
    assert spec.energies[-1] < 4
    levels = group_degeneracies(spec)
    assert levels[0][1] == 9


def test_kagome_flat_band_dos(kagome83):
    h = dos(adjacency_energies(kagome83), 0.03)
    assert h.weight_at(-2.0) == pytest.approx(9 / 56)
    assert h.weights.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("parent,medial", [("flake83", "kagome83"), ("flake124", "kagome124")])
def test_flat_band_count_equals_plaquettes(parent, medial, request):
    g, m = request.getfixturevalue(parent), request.getfixturevalue(medial)
    levels = group_degeneracies(adjacency_energies(m))
    flat = [k for e, k in levels if abs(e + 2) < 1e-8]
    assert flat == [g.n_faces]


# -- gaps -----------------------------------------------------------------------


def test_gaps_are_consecutive_differences(flake83):
    spec = adjacency_energies(flake83)
    gaps = detect_gaps(spec, 0.25)
    e = np.sort(spec.energies)
    d = np.diff(e)
    assert len(gaps) == int(np.sum(d > 0.25))
    assert all(w > 0.25 for w in gaps.widths)
    assert all(a[1] <= b[0] for a, b in zip(gaps.gaps, gaps.gaps[1:]))


def test_gap_threshold_above_span(flake83):
    spec = adjacency_energies(flake83)
    assert len(detect_gaps(spec, 10.0)) == 0
    with pytest.raises(ValidationError):
        detect_gaps(spec, 0.0)


def test_83_widest_gaps_bracket_unit_energy(flake83):
    gaps = detect_gaps(adjacency_energies(flake83), 0.25)
    widest = sorted(gaps.gaps, key=lambda g: g[1] - g[0])[-2:]
    assert sorted(any(lo < s < hi for lo, hi in widest) for s in (-1.0, 1.0)) == [True, True]


# -- degeneracy, IPR, DOS properties ----------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=40), st.floats(0.005, 0.5))
def test_dos_normalised(energies, width):
    e = np.sort(np.array(energies))
    h = dos(Spectrum(e, np.eye(len(e))), width)
    assert h.weights.sum() == pytest.approx(1.0)
    assert np.all(h.weights >= 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=40))
def test_multiplicities_sum_to_count(energies):
    e = np.sort(np.array(energies))
    spec = Spectrum(e, np.eye(len(e)))
    assert sum(m for _, m in group_degeneracies(spec)) == len(e)
    assert len(multiplicities(spec)) == len(e)


def test_ipr_extremes():
    n = 10
    uniform = np.full((n, 1), 1 / math.sqrt(n))
    local = np.zeros((n, 1))
    local[3] = 1.0
    assert ipr(Spectrum(np.zeros(1), uniform))[0] == pytest.approx(1 / n)
    assert ipr(Spectrum(np.zeros(1), local))[0] == pytest.approx(1.0)


@pytest.mark.parametrize("name", ["flake83", "flake124", "kagome83"])
def test_ipr_bounds(name, request):
    g = request.getfixturevalue(name)
    values = ipr(adjacency_energies(g))
    assert np.all(values >= 1 / g.n_vertices - 1e-12)
    assert np.all(values <= 1 + 1e-12)


# -- compact localized states ---------------------------------------------------------


def test_cls_count_and_residual(flake83, kagome83):
    cls = construct_cls(flake83, kagome83)
    assert len(cls) == 9
    a = hopping_matrix(kagome83)
    psi = cls.dense()
    assert np.max(np.linalg.norm(a @ psi + 2 * psi, axis=0)) < 1e-9
    assert np.linalg.matrix_rank(psi) == 9
    assert cls.support_sizes == [8] * 9


def test_cls_span_matches_flat_eigenspace(flake83, kagome83):
    cls = construct_cls(flake83, kagome83)
    spec = adjacency_energies(kagome83)
    assert np.max(np.abs(span_projector(cls.dense()) - eigenspace_projector(spec, -2.0))) < 1e-8


def test_cls_ipr(flake83, kagome83):
    cls = construct_cls(flake83, kagome83)
    values = ipr(Spectrum(np.full(len(cls), -2.0), cls.dense()))
    assert np.all(values >= 1 / 16)
    assert values == pytest.approx(np.full(9, 1 / 8))


def test_single_octagon_cls():
    parent = single_face(TilingSpec(8, 3))
    m = medial_lattice(parent)
    cls = construct_cls(parent, m)
    psi = cls.dense()
    assert len(cls) == 1 and cls.support_sizes == [8]
    assert np.linalg.norm(hopping_matrix(m) @ psi + 2 * psi) < 1e-12
    assert ipr(Spectrum(np.array([-2.0]), psi))[0] == pytest.approx(1 / 8)


def test_odd_face_rejected():
    parent = single_face(TilingSpec(7, 3))
    with pytest.raises(OddFaceError):
        construct_cls(parent, medial_lattice(parent))


def test_cls_requires_matching_lattices(flake83, flake124, kagome83):
    with pytest.raises(GraphError):
        construct_cls(flake124, kagome83)
    with pytest.raises(GraphError):
        construct_cls(kagome83, flake83)


def test_cls_json(flake83, kagome83):
    data = json.loads(construct_cls(flake83, kagome83).to_json())
    assert data["n_sites"] == 56 and len(data["states"]) == 9


# -- bipartite <-> symmetric --------------------------------------------------------


@pytest.mark.parametrize("name", ["flake83", "flake124", "kagome83", "kagome124"])
def test_bipartite_iff_symmetric_presets(name, request):
    g = request.getfixturevalue(name)
    assert is_bipartite(g)[0] == is_symmetric_spectrum(adjacency_energies(g))


def test_bipartite_iff_symmetric_random(random_flakes):
    kinds = set()
    for g in random_flakes:
        bip = is_bipartite(g)[0]
        kinds.add(bip)
        assert bip == is_symmetric_spectrum(adjacency_energies(g))
    assert kinds == {True, False}


# -- weighting -------------------------------------------------------------------


def test_uniform_weights_match_uniform_spectrum(flake83):
    a = adjacency_energies(flake83).energies
    b = adjacency_energies(flake83, np.ones(flake83.n_edges)).energies
    c = adjacency_energies(flake83, derive_couplings(flake83, 1e-15, "uniform")).energies
    assert np.allclose(a, b, atol=1e-12) and np.allclose(a, c, atol=1e-12)


def test_weighted_spectrum_uses_capacitance_ratios(flake83):
    plan = derive_couplings(flake83, 1e-15, "euclidean")
    spec = adjacency_energies(flake83, plan)
    assert spec.weighted
    expected = np.linalg.eigvalsh(flake83.adjacency_matrix(plan.capacitances / 1e-15))
    assert np.allclose(spec.energies, expected, atol=1e-12)


def test_bad_weighting():
    g = single_face(TilingSpec(8, 3))
    with pytest.raises(ValidationError):
        hopping_matrix(g, "capacitive")
    with pytest.raises(ValidationError):
        hopping_matrix(g, [1.0, 2.0])


# -- export ------------------------------------------------------------------------


def test_exports(flake124):
    spec = adjacency_energies(flake124)
    lines = spectrum_csv(spec).splitlines()
    assert lines[0] == "index,energy,multiplicity,ipr" and len(lines) == 57
    report = spectrum_report(spec, gap_threshold=0.2)
    assert len(report["energies"]) == 56
    assert report["gaps"]["threshold"] == 0.2
    json.dumps(report)
