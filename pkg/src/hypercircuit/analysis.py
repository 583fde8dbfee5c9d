"""Transmission-trace processing: aggregation, peaks, clusters and eigenvalue mapping."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import find_peaks as _scipy_find_peaks

from .errors import ValidationError

PEAK_PROMINENCE_DB = 3.0
PEAK_SEPARATION_HZ = 1e6
CLUSTER_HEIGHT_DB = -40.0
CLUSTER_SEPARATION_HZ = 10e6


@dataclass
class Trace:
    frequencies: np.ndarray
    transmission: np.ndarray  # dB

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.transmission = np.asarray(self.transmission, dtype=float)
        if self.frequencies.shape != self.transmission.shape or self.frequencies.ndim != 1:
            raise ValidationError("trace frequencies and transmission must be 1-D and equal length")
        if len(self.frequencies) and np.any(np.diff(self.frequencies) <= 0):
            raise ValidationError("trace frequencies must be strictly increasing")
        if not np.all(np.isfinite(self.frequencies)) or not np.all(np.isfinite(self.transmission)):
            raise ValidationError("trace contains non-finite values")

    def __len__(self) -> int:
        return len(self.frequencies)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frequency_hz", "db"])
        for f, t in zip(self.frequencies, self.transmission):
            w.writerow([repr(float(f)), repr(float(t))])
        return buf.getvalue()


def read_trace_csv(text: str, column: str | int | None = None) -> Trace:
    """Read ``frequency_hz, dB`` CSV or one column of a multi-column CSV.

    For S-parameter sweep CSVs (``re_Sab``/``im_Sab`` columns) pass
    ``column="S21"`` and the magnitude in dB is computed.
    """
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    header = rows[0]
    has_header = not _is_number(header[0])
    data = np.array(rows[1:] if has_header else rows, dtype=float)
    if column is None:
        return Trace(data[:, 0], data[:, 1])
    if isinstance(column, int):
        return Trace(data[:, 0], data[:, column])
    if not has_header:
        raise ValidationError("named column requested from a CSV without header")
    if column in header:
        return Trace(data[:, 0], data[:, header.index(column)])
    re_name, im_name = f"re_{column}", f"im_{column}"
    if re_name in header and im_name in header:
        z = data[:, header.index(re_name)] + 1j * data[:, header.index(im_name)]
        with np.errstate(divide="ignore"):
            return Trace(data[:, 0], 20.0 * np.log10(np.abs(z)))
    raise ValidationError(f"column {column!r} not found in CSV header")


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def aggregate_max(traces: Sequence[Trace]) -> Trace:
    if not traces:
        raise ValidationError("no traces to aggregate")
    grid = traces[0].frequencies
    for t in traces[1:]:
        if t.frequencies.shape != grid.shape or not np.array_equal(t.frequencies, grid):
            raise ValidationError("traces are on different frequency grids; resample explicitly first")
    return Trace(grid.copy(), np.max([t.transmission for t in traces], axis=0))


def resample(trace: Trace, frequencies: Sequence[float]) -> Trace:
    """Linear interpolation onto ``frequencies`` (must lie inside the trace's range)."""
    f = np.asarray(frequencies, dtype=float)
    if f.min() < trace.frequencies[0] or f.max() > trace.frequencies[-1]:
        raise ValidationError("resampling grid extends beyond the trace")
    return Trace(f, np.interp(f, trace.frequencies, trace.transmission))


# -- peaks ------------------------------------------------------------------------


@dataclass
class Peak:
    frequency: float
    height: float
    prominence: float
    index: int


@dataclass
class PeakSet:
    peaks: list[Peak] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.peaks)

    def __iter__(self):
        return iter(self.peaks)

    def __getitem__(self, k):
        return self.peaks[k]

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([p.frequency for p in self.peaks])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frequency_hz", "height_db", "prominence_db"])
        for p in self.peaks:
            w.writerow([repr(p.frequency), repr(p.height), repr(p.prominence)])
        return buf.getvalue()


def find_peaks(
    trace: Trace,
    min_prominence: float = PEAK_PROMINENCE_DB,
    min_separation: float = PEAK_SEPARATION_HZ,
) -> PeakSet:
    """Local maxima with at least ``min_prominence`` dB, thinned to ``min_separation`` Hz.

    When two peaks are closer than ``min_separation`` the higher one is kept.
    """
    if min_prominence <= 0 or min_separation <= 0:
        raise ValidationError("peak prominence and separation must be positive")
    idx, props = _scipy_find_peaks(trace.transmission, prominence=min_prominence)
    order = sorted(range(len(idx)), key=lambda k: (-trace.transmission[idx[k]], idx[k]))
    kept: list[int] = []
    for k in order:
        f = trace.frequencies[idx[k]]
        if all(abs(f - trace.frequencies[idx[j]]) >= min_separation for j in kept):
            kept.append(k)
    kept.sort(key=lambda k: idx[k])
    return PeakSet(
        [
            Peak(float(trace.frequencies[idx[k]]), float(trace.transmission[idx[k]]), float(props["prominences"][k]), int(idx[k]))
            for k in kept
        ]
    )


# -- clusters --------------------------------------------------------------------


@dataclass
class Cluster:
    members: list[int]
    f_lo: float
    f_hi: float
    max_height: float

    @property
    def center(self) -> float:
        return 0.5 * (self.f_lo + self.f_hi)

    def __len__(self) -> int:
        return len(self.members)


def _linkage_groups(freqs: np.ndarray, separation: float) -> list[list[int]]:
    groups: list[list[int]] = []
    for k, f in enumerate(freqs):
        if groups and f - freqs[groups[-1][-1]] <= separation:
            groups[-1].append(k)
        else:
            groups.append([k])
    return groups


def cluster_peaks(
    peaks: PeakSet,
    height_threshold: float = CLUSTER_HEIGHT_DB,
    separation: float = CLUSTER_SEPARATION_HZ,
) -> list[Cluster]:
    """Group peaks and keep the groups meeting all three cluster criteria.

    Peaks are linked when neighbouring frequencies are within
    ``separation``, so distinct groups are always more than ``separation``
    apart (criterion 3: well separated).  A group becomes a cluster when it
    holds more than one peak (criterion 1) and at least one peak rises above
    ``height_threshold`` dB (criterion 2).  Rejected groups' peaks stay
    unclustered; see :func:`unclustered_peaks`.
    """
    if separation <= 0:
        raise ValidationError("cluster separation must be positive")
    freqs = peaks.frequencies
    clusters = []
    for group in _linkage_groups(freqs, separation):
        heights = [peaks[k].height for k in group]
        if len(group) > 1 and max(heights) > height_threshold:
            clusters.append(Cluster(group, float(freqs[group[0]]), float(freqs[group[-1]]), float(max(heights))))
    return clusters


def unclustered_peaks(peaks: PeakSet, clusters: Sequence[Cluster]) -> list[int]:
    taken = {k for c in clusters for k in c.members}
    return [k for k in range(len(peaks)) if k not in taken]


# -- eigenvalue mapping --------------------------------------------------------------


def map_eigenvalues(
    energies: Sequence[float],
    f1: float,
    f2: float,
    anchors: tuple[float, float] | None = None,
    tol: float = 1e-9,
) -> np.ndarray:
    """Affine map of energies onto frequencies fixed by two anchor pairs.

    ``anchors`` defaults to the first two energies; it must hold two
    distinct values, which map to ``f1`` and ``f2`` respectively.
    """
    e = np.asarray(energies, dtype=float)
    lam1, lam2 = anchors if anchors is not None else (e[0], e[1])
    if abs(lam2 - lam1) <= tol:
        raise ValidationError("anchor energies coincide; pick two distinct levels")
    if not f2 > f1:
        raise ValidationError("anchor frequencies must satisfy f2 > f1")
    return f1 + (e - lam1) * (f2 - f1) / (lam2 - lam1)


def distinct_levels(energies: Sequence[float], tol: float = 1e-8) -> list[float]:
    out: list[float] = []
    for x in np.sort(energies):
        if not out or x - out[-1] >= tol:
            out.append(float(x))
    return out


@dataclass
class EigenMatch:
    energy: float
    frequency: float
    nearest_peak: float | None
    residual: float | None
    cluster: int | None
    matched: bool


@dataclass
class GapAlignment:
    energy_lo: float
    energy_hi: float
    f_lo: float
    f_hi: float
    trace_gap: tuple[float, float] | None


@dataclass
class MappingReport:
    weighting: str
    anchors: tuple[float, float, float, float]
    matches: list[EigenMatch]
    gaps: list[GapAlignment]
    window: float

    @property
    def unmatched(self) -> list[int]:
        return [k for k, m in enumerate(self.matches) if not m.matched]

    @property
    def residuals(self) -> np.ndarray:
        return np.array([m.residual for m in self.matches if m.residual is not None])

    def to_dict(self) -> dict:
        return {
            "weighting": self.weighting,
            "anchors": {"lambda1": self.anchors[0], "lambda2": self.anchors[1], "f1": self.anchors[2], "f2": self.anchors[3]},
            "window_hz": self.window,
            "eigenvalues": [asdict(m) for m in self.matches],
            "unmatched": self.unmatched,
            "gaps": [asdict(g) for g in self.gaps],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def table(self) -> str:
        lines = [f"weighting: {self.weighting}", f"{'n':>4} {'energy':>10} {'f_mapped_GHz':>14} {'f_peak_GHz':>12} {'resid_MHz':>10}  cluster"]
        for k, m in enumerate(self.matches):
            peak = f"{m.nearest_peak / 1e9:12.6f}" if m.nearest_peak is not None else f"{'-':>12}"
            res = f"{m.residual / 1e6:10.4f}" if m.residual is not None else f"{'-':>10}"
            cl = "-" if m.cluster is None else str(m.cluster)
            flag = "" if m.matched else "  MISSING"
            lines.append(f"{k + 1:4d} {m.energy:10.5f} {m.frequency / 1e9:14.6f} {peak} {res}  {cl}{flag}")
        lines.append(f"unmatched: {len(self.unmatched)} of {len(self.matches)}")
        for g in self.gaps:
            tg = "none" if g.trace_gap is None else f"{g.trace_gap[0] / 1e9:.6f}-{g.trace_gap[1] / 1e9:.6f} GHz"
            lines.append(f"gap E=[{g.energy_lo:.4f}, {g.energy_hi:.4f}] -> {g.f_lo / 1e9:.6f}-{g.f_hi / 1e9:.6f} GHz; trace gap {tg}")
        return "\n".join(lines) + "\n"


def compare(
    energies: Sequence[float],
    mapped: Sequence[float],
    peaks: PeakSet,
    clusters: Sequence[Cluster] = (),
    gaps: Sequence[tuple[float, float]] = (),
    window: float = PEAK_SEPARATION_HZ,
    weighting: str = "uniform",
    anchors: tuple[float, float, float, float] = (np.nan, np.nan, np.nan, np.nan),
) -> MappingReport:
    """Match mapped eigenfrequencies to peaks and theory gaps to trace gaps.

    An eigenvalue is unmatched when no peak lies within ``window`` Hz.  A
    theory gap aligns with the interval between consecutive clusters (or
    peaks, when no clusters are given) that contains its mapped midpoint.
    """
    if len(energies) != len(mapped) or not len(mapped):
        raise ValidationError("energies and mapped frequencies must be non-empty and equal length")
    pf = peaks.frequencies
    matches = []
    for e, f in zip(energies, mapped):
        if len(pf):
            k = int(np.argmin(np.abs(pf - f)))
            near, res = float(pf[k]), float(pf[k] - f)
        else:
            near, res = None, None
        cl = next((ci for ci, c in enumerate(clusters) if c.f_lo - window <= f <= c.f_hi + window), None)
        matches.append(EigenMatch(float(e), float(f), near, res, cl, res is not None and abs(res) <= window))

    e_arr, f_arr = np.asarray(energies, dtype=float), np.asarray(mapped, dtype=float)
    scale = np.polyfit(e_arr, f_arr, 1) if len(set(e_arr.tolist())) > 1 else (0.0, f_arr[0])
    if clusters:
        spans = [(c.f_lo, c.f_hi) for c in clusters]
    else:
        spans = [(f, f) for f in pf]
    trace_gaps = [(spans[k][1], spans[k + 1][0]) for k in range(len(spans) - 1)]
    alignments = []
    for lo, hi in gaps:
        flo, fhi = float(np.polyval(scale, lo)), float(np.polyval(scale, hi))
        mid = 0.5 * (flo + fhi)
        tg = next((g for g in trace_gaps if g[0] <= mid <= g[1]), None)
        alignments.append(GapAlignment(float(lo), float(hi), flo, fhi, tg))
    return MappingReport(weighting, tuple(float(a) for a in anchors), matches, alignments, float(window))


# -- synthetic traces ------------------------------------------------------------------


def lorentzian_trace(
    frequencies: Sequence[float],
    centers: Sequence[float],
    linewidth: float,
    peak_db: float | Sequence[float] = 0.0,
    floor_db: float = -120.0,
) -> Trace:
    """Sum of Lorentzian power lines in linear units, returned in dB."""
    f = np.asarray(frequencies, dtype=float)
    heights = np.broadcast_to(np.asarray(peak_db, dtype=float), (len(centers),))
    power = np.full_like(f, 10.0 ** (floor_db / 10.0))
    half = linewidth / 2.0
    for c, h in zip(centers, heights):
        power += 10.0 ** (h / 10.0) * half**2 / ((f - c) ** 2 + half**2)
    return Trace(f, 10.0 * np.log10(power))
