"""Tight-binding spectra of lattice graphs.

Energies are eigenvalues of ``+A`` (or of the capacitance-weighted
adjacency) in units of the hopping ``|t|``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import GraphError, NumericalError, OddFaceError, ValidationError
from .lattice import LatticeGraph

RESIDUAL_TOL = 1e-9
DEGENERACY_TOL = 1e-8
DOS_BIN_WIDTH = 0.03
GAP_THRESHOLD = 0.25
GAP_THRESHOLD_124 = 0.2
FLAT_BAND_ENERGY = -2.0


@dataclass
class Spectrum:
    energies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors
    weighted: bool = False

    def __len__(self) -> int:
        return len(self.energies)

    def residuals(self, matrix: np.ndarray) -> np.ndarray:
        return np.linalg.norm(matrix @ self.vectors - self.vectors * self.energies, axis=0)


@dataclass
class DosHistogram:
    bin_width: float
    centers: np.ndarray
    weights: np.ndarray  # fraction of states per bin, sums to 1

    @property
    def bins(self) -> list[tuple[float, float]]:
        return list(zip(self.centers.tolist(), self.weights.tolist()))

    def weight_at(self, energy: float) -> float:
        k = int(np.argmin(np.abs(self.centers - energy)))
        return float(self.weights[k])


@dataclass
class GapList:
    threshold: float
    gaps: list[tuple[float, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.gaps)

    @property
    def widths(self) -> list[float]:
        return [hi - lo for lo, hi in self.gaps]


@dataclass
class ClsSet:
    """Compact localized states as sparse ``{vertex: amplitude}`` maps."""

    vectors: list[dict[int, float]]
    n_sites: int
    plaquettes: list[tuple[int, ...]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def support_sizes(self) -> list[int]:
        return [len(v) for v in self.vectors]

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n_sites, len(self.vectors)))
        for k, vec in enumerate(self.vectors):
            for site, amp in vec.items():
                out[site, k] = amp
        return out

    def to_json(self) -> str:
        data = {
            "n_sites": self.n_sites,
            "states": [
                {"plaquette": list(pl), "amplitudes": [[s, a] for s, a in sorted(v.items())]}
                for v, pl in zip(self.vectors, self.plaquettes)
            ],
        }
        return json.dumps(data, indent=1)


def hopping_matrix(g: LatticeGraph, weighting="uniform") -> np.ndarray:
    """Adjacency matrix for ``weighting``.

    ``weighting`` is ``"uniform"``, a per-edge weight sequence, or any object
    with ``capacitances`` and ``reference_capacitance`` attributes (a
    coupling plan), whose normalised capacitances become the weights.
    """
    if isinstance(weighting, str):
        if weighting != "uniform":
            raise ValidationError(f"unknown weighting {weighting!r}")
        return g.adjacency_matrix()
    if hasattr(weighting, "capacitances"):
        weights = np.asarray(weighting.capacitances) / weighting.reference_capacitance
    else:
        weights = np.asarray(weighting, dtype=float)
    if len(weights) != g.n_edges:
        raise ValidationError(f"expected {g.n_edges} edge weights, got {len(weights)}")
    return g.adjacency_matrix(weights)


def adjacency_energies(g: LatticeGraph, weighting="uniform") -> Spectrum:
    if not g.is_connected():
        raise GraphError("spectrum requires a connected graph")
    a = hopping_matrix(g, weighting)
    energies, vectors = np.linalg.eigh(a)
    res = np.linalg.norm(a @ vectors - vectors * energies, axis=0)
    scale = max(1.0, float(np.max(np.abs(energies))))
    if np.max(res) > RESIDUAL_TOL * scale:
        raise NumericalError(f"eigendecomposition residual {np.max(res):.3e} exceeds tolerance")
    ortho = np.max(np.abs(vectors.T @ vectors - np.eye(len(energies))))
    if ortho > RESIDUAL_TOL:
        raise NumericalError(f"eigenvectors not orthonormal (deviation {ortho:.3e})")
    return Spectrum(energies, vectors, weighted=not isinstance(weighting, str))


def dos(spec: Spectrum, bin_width: float = DOS_BIN_WIDTH) -> DosHistogram:
    """Normalised histogram covering [min, max] with bins of ``bin_width``.

    The bin grid is centred on the middle of the spectrum, so a spectrum
    symmetric about zero gives a mirror-symmetric histogram.
    """
    if bin_width <= 0:
        raise ValidationError("bin width must be positive")
    e = np.asarray(spec.energies)
    lo, hi = float(e.min()), float(e.max())
    n_bins = max(1, int(np.ceil((hi - lo) / bin_width)))
    start = 0.5 * (lo + hi) - 0.5 * n_bins * bin_width
    idx = np.clip(np.floor((e - start) / bin_width).astype(int), 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    centers = start + (np.arange(n_bins) + 0.5) * bin_width
    return DosHistogram(bin_width, centers, counts / counts.sum())


def detect_gaps(spec: Spectrum, threshold: float = GAP_THRESHOLD) -> GapList:
    if threshold <= 0:
        raise ValidationError("gap threshold must be positive")
    e = np.sort(spec.energies)
    d = np.diff(e)
    return GapList(threshold, [(float(e[k]), float(e[k + 1])) for k in np.flatnonzero(d > threshold)])


def group_degeneracies(spec: Spectrum, tol: float = DEGENERACY_TOL) -> list[tuple[float, int]]:
    """Merge consecutive energies closer than ``tol``; returns (mean energy, multiplicity)."""
    if tol <= 0:
        raise ValidationError("degeneracy tolerance must be positive")
    groups: list[list[float]] = []
    for x in np.sort(spec.energies):
        if groups and x - groups[-1][-1] < tol:
            groups[-1].append(float(x))
        else:
            groups.append([float(x)])
    return [(float(np.mean(g)), len(g)) for g in groups]


def multiplicities(spec: Spectrum, tol: float = DEGENERACY_TOL) -> np.ndarray:
    """Per-state multiplicity of the level it belongs to, in sorted order."""
    m = [k for _, k in group_degeneracies(spec, tol)]
    return np.repeat(m, m)


def ipr(spec: Spectrum) -> np.ndarray:
    v = np.asarray(spec.vectors)
    return np.sum(np.abs(v) ** 4, axis=0) / np.sum(np.abs(v) ** 2, axis=0) ** 2


def is_symmetric_spectrum(spec: Spectrum, tol: float = RESIDUAL_TOL) -> bool:
    e = np.sort(spec.energies)
    return bool(np.max(np.abs(e + e[::-1])) <= tol)


def construct_cls(parent: LatticeGraph, medial: LatticeGraph) -> ClsSet:
    """One alternating-sign state per parent plaquette, on its medial vertices.

    The medial adjacency equals ``B.T @ B - 2`` for the unsigned incidence
    ``B`` of the parent, so any alternating edge cycle (which ``B`` maps to
    zero) is an eigenvector with energy -2.
    """
    if parent.kind != "parent" or medial.kind != "medial":
        raise GraphError("construct_cls needs a parent lattice and its medial lattice")
    if medial.n_vertices != parent.n_edges:
        raise GraphError("medial lattice is not derived from this parent")
    eidx = parent.edge_index()
    vectors, plaquettes = [], []
    for face in parent.faces:
        if len(face) % 2:
            raise OddFaceError(f"plaquette of length {len(face)} admits no alternating state")
        sites = [eidx[(min(a, b), max(a, b))] for a, b in zip(face, face[1:] + face[:1])]
        amp = 1.0 / np.sqrt(len(sites))
        vectors.append({s: amp * (-1) ** k for k, s in enumerate(sites)})
        plaquettes.append(tuple(face))
    return ClsSet(vectors, medial.n_vertices, plaquettes)


def eigenspace_projector(spec: Spectrum, energy: float, tol: float = 1e-8) -> np.ndarray:
    mask = np.abs(spec.energies - energy) < tol
    v = spec.vectors[:, mask]
    return v @ v.T


def span_projector(vectors: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the column span (columns need not be orthogonal)."""
    u, s, _ = np.linalg.svd(vectors, full_matrices=False)
    u = u[:, s > 1e-10 * s.max()]
    return u @ u.T


# -- export -----------------------------------------------------------------


def spectrum_csv(spec: Spectrum, tol: float = DEGENERACY_TOL) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "energy", "multiplicity", "ipr"])
    mult = multiplicities(spec, tol)
    for k, (e, m, p) in enumerate(zip(spec.energies, mult, ipr(spec))):
        w.writerow([k, repr(float(e)), int(m), repr(float(p))])
    return buf.getvalue()


def spectrum_report(
    spec: Spectrum,
    bin_width: float = DOS_BIN_WIDTH,
    gap_threshold: float = GAP_THRESHOLD,
    tol: float = DEGENERACY_TOL,
) -> dict:
    h = dos(spec, bin_width)
    gaps = detect_gaps(spec, gap_threshold)
    return {
        "weighted": spec.weighted,
        "energies": [float(e) for e in spec.energies],
        "ipr": [float(x) for x in ipr(spec)],
        "degeneracies": [[e, m] for e, m in group_degeneracies(spec, tol)],
        "dos": {"bin_width": bin_width, "bins": [[c, w] for c, w in h.bins]},
        "gaps": {"threshold": gap_threshold, "intervals": [[lo, hi] for lo, hi in gaps.gaps]},
    }
