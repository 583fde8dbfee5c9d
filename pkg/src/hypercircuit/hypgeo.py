"""Poincaré disk geometry and regular {p,q} tilings generated by reflection.

Points are handled internally as Python/numpy complex numbers; the
:class:`DiskPoint` dataclass is the public value type and converts freely.
"""

from __future__ import annotations

import cmath
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import CapacityError, DegenerateGeometryError, DomainError, ValidationError

# vertex identity is decided in the hyperbolic metric; Euclidean spacing
# collapses exponentially toward the boundary
DEDUP_TOL = 1e-6
DEGENERATE_TOL = 1e-12
MAX_DEPTH = 4
MAX_VERTICES = 20_000


@dataclass(frozen=True)
class DiskPoint:
    re: float
    im: float

    def __post_init__(self):
        if not (self.re * self.re + self.im * self.im < 1.0):
            raise DomainError(f"point ({self.re}, {self.im}) is not inside the unit disk")

    @classmethod
    def from_complex(cls, z: complex) -> "DiskPoint":
        return cls(float(z.real), float(z.imag))

    def __complex__(self) -> complex:
        return complex(self.re, self.im)

    @property
    def z(self) -> complex:
        return complex(self.re, self.im)


PointLike = Union[DiskPoint, complex, float, Sequence[float]]


def as_complex(point: PointLike) -> complex:
    """Coerce a point-like value to ``complex`` and check it lies in the disk."""
    if isinstance(point, DiskPoint):
        return point.z
    if isinstance(point, (complex, float, int, np.number)):
        z = complex(point)
    else:
        re, im = point
        z = complex(re, im)
    if not abs(z) < 1.0:
        raise DomainError(f"point {z} is not inside the unit disk")
    return z


def hyperbolic_distance(a: PointLike, b: PointLike) -> float:
    """Poincaré-disk distance (curvature -1)."""
    za, zb = as_complex(a), as_complex(b)
    num = 2.0 * abs(za - zb) ** 2
    den = (1.0 - abs(za) ** 2) * (1.0 - abs(zb) ** 2)
    return math.acosh(1.0 + num / den)


@dataclass(frozen=True)
class TilingSpec:
    """Parameters of a regular hyperbolic tiling truncated at ``depth`` layers.

    ``depth`` counts vertex layers: layer k+1 holds every face touching a
    vertex of layer k.
    """

    p: int
    q: int
    depth: int = 1
    max_depth: int = MAX_DEPTH

    def __post_init__(self):
        if self.p < 3 or self.q < 3:
            raise ValidationError(f"p and q must be >= 3, got p={self.p}, q={self.q}")
        if (self.p - 2) * (self.q - 2) <= 4:
            raise ValidationError(f"{{{self.p},{self.q}}} is not hyperbolic: (p-2)(q-2) must exceed 4")
        if not 0 <= self.depth <= self.max_depth:
            raise ValidationError(f"depth must lie in [0, {self.max_depth}], got {self.depth}")


def central_polygon_vertices(spec: TilingSpec) -> list[DiskPoint]:
    """Vertices of the regular p-gon centred at the origin, first vertex on +x.

    The circumradius ``sqrt(cos(pi/p + pi/q) / cos(pi/p - pi/q))`` makes each
    interior angle equal to ``2*pi/q``.
    """
    p, q = spec.p, spec.q
    r0 = math.sqrt(math.cos(math.pi / p + math.pi / q) / math.cos(math.pi / p - math.pi / q))
    return [DiskPoint.from_complex(cmath.rect(r0, 2.0 * math.pi * k / p)) for k in range(p)]


@dataclass(frozen=True)
class _Geodesic:
    # the geodesic through ``base`` with unit tangent direction ``direction``
    # after ``base`` is moved to the origin; reflecting there is a mirror
    # across a diameter, which avoids the huge near-diameter circles of
    # direct circle inversion
    base: complex
    direction: complex

    def reflect(self, z):
        a, d = self.base, self.direction
        w = (z - a) / (1.0 - np.conj(a) * z)
        w = d * d * np.conj(w)
        return (w + a) / (1.0 + np.conj(a) * w)


def _geodesic_through(a: complex, b: complex) -> _Geodesic:
    """Geodesic through ``a`` and ``b``; equal to inversion in the circle
    orthogonal to the unit circle through both (a mirror for diameters)."""
    if abs(a - b) < DEGENERATE_TOL:
        raise DegenerateGeometryError("geodesic anchors coincide")
    if abs(b) < abs(a):
        a, b = b, a
    w = (b - a) / (1.0 - a.conjugate() * b)
    return _Geodesic(a, w / abs(w))


def reflect(point: PointLike, geodesic: tuple[PointLike, PointLike]) -> DiskPoint:
    """Reflect ``point`` in the geodesic through the two anchor points."""
    g = _geodesic_through(as_complex(geodesic[0]), as_complex(geodesic[1]))
    return DiskPoint.from_complex(complex(g.reflect(as_complex(point))))


def hyperbolic_midpoint(a: PointLike, b: PointLike) -> DiskPoint:
    za, zb = as_complex(a), as_complex(b)
    if abs(za - zb) < DEGENERATE_TOL:
        raise DegenerateGeometryError("midpoint of coincident points is undefined")
    # move a to the origin, halve the radial distance, move back
    w = (zb - za) / (1.0 - za.conjugate() * zb)
    u = math.tanh(math.atanh(abs(w)) / 2.0) * (w / abs(w))
    return DiskPoint.from_complex((u + za) / (1.0 + za.conjugate() * u))


def canonical_cycle(cycle: Sequence[int]) -> tuple[int, ...]:
    """Rotate to the smallest index and pick the lexicographically smaller direction."""
    n = len(cycle)
    k = min(range(n), key=cycle.__getitem__)
    fwd = tuple(cycle[(k + i) % n] for i in range(n))
    bwd = tuple(cycle[(k - i) % n] for i in range(n))
    return min(fwd, bwd)


@dataclass
class Tiling:
    spec: TilingSpec
    vertices: np.ndarray  # complex coordinates
    faces: list[tuple[int, ...]]
    generation: list[int]

    @property
    def points(self) -> list[DiskPoint]:
        return [DiskPoint.from_complex(z) for z in self.vertices]

    def faces_at_vertex(self) -> dict[int, list[int]]:
        incident: dict[int, list[int]] = {}
        for fid, face in enumerate(self.faces):
            for v in face:
                incident.setdefault(v, []).append(fid)
        return incident

    def interior_vertices(self) -> list[int]:
        """Vertices on faces below the last layer; all q faces there are present."""
        inner = {v for face, g in zip(self.faces, self.generation) if g < self.spec.depth for v in face}
        return sorted(inner)

    def edge_lengths(self) -> np.ndarray:
        out = []
        for face in self.faces:
            for i in range(len(face)):
                a, b = self.vertices[face[i]], self.vertices[face[(i + 1) % len(face)]]
                out.append(hyperbolic_distance(a, b))
        return np.array(out)

    def to_dict(self) -> dict:
        return {
            "spec": {"p": self.spec.p, "q": self.spec.q, "depth": self.spec.depth},
            "vertices": [[float(z.real), float(z.imag)] for z in self.vertices],
            "faces": [list(f) for f in self.faces],
            "generation": list(self.generation),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "Tiling":
        s = data["spec"]
        spec = TilingSpec(s["p"], s["q"], s["depth"], max_depth=max(MAX_DEPTH, s["depth"]))
        verts = np.array([complex(re, im) for re, im in data["vertices"]], dtype=complex)
        return cls(spec, verts, [tuple(f) for f in data["faces"]], list(data["generation"]))


class _VertexStore:
    # Euclidean distance never exceeds half the hyperbolic distance in the
    # disk, so a coarse Euclidean grid safely pre-filters candidates.
    CELL = 1e-4

    def __init__(self, budget: int):
        self.budget = budget
        self._pts: list[complex] = []
        self._grid: dict[tuple[int, int], list[int]] = {}

    def _cell(self, z: complex) -> tuple[int, int]:
        return (math.floor(z.real / self.CELL), math.floor(z.imag / self.CELL))

    def find(self, z: complex) -> int | None:
        cx, cy = self._cell(z)
        best, best_d = None, DEDUP_TOL
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for k in self._grid.get((cx + dx, cy + dy), ()):
                    d = hyperbolic_distance(z, self._pts[k])
                    if d < best_d:
                        best, best_d = k, d
        return best

    def add(self, z: complex) -> int:
        if len(self._pts) >= self.budget:
            raise CapacityError(f"vertex budget of {self.budget} exceeded")
        self._pts.append(z)
        self._grid.setdefault(self._cell(z), []).append(len(self._pts) - 1)
        return len(self._pts) - 1

    def __getitem__(self, k: int) -> complex:
        return self._pts[k]

    @property
    def points(self) -> np.ndarray:
        return np.array(self._pts, dtype=complex)


def generate_tiling(spec: TilingSpec, max_vertices: int = MAX_VERTICES) -> Tiling:
    """Grow a {p,q} tiling outward from the central polygon by edge reflections.

    Faces of layer k+1 are all faces sharing at least one vertex with
    layer k.  They are found by repeatedly reflecting faces across their
    edges, keeping only reflections that touch a layer-k vertex; every such
    face is reachable by walking around the shared vertex.
    """
    store = _VertexStore(max_vertices)
    central = [store.add(v.z) for v in central_polygon_vertices(spec)]
    faces: list[tuple[int, ...]] = [tuple(central)]
    cycles: list[list[int]] = [central]  # oriented, for reflection
    generation = [0]
    seen = {canonical_cycle(central)}

    for layer in range(1, spec.depth + 1):
        target = {v for fid, g in enumerate(generation) if g == layer - 1 for v in cycles[fid]}
        queue = deque(fid for fid, cyc in enumerate(cycles) if target.intersection(cyc))
        while queue:
            fid = queue.popleft()
            cyc = cycles[fid]
            pts = np.array([store[k] for k in cyc])
            p = len(cyc)
            for i in range(p):
                a, b = cyc[i], cyc[(i + 1) % p]
                g = _geodesic_through(store[a], store[b])
                image = g.reflect(pts)
                ids = [store.find(complex(z)) for z in image]
                if not target.intersection(k for k in ids if k is not None):
                    continue
                if all(k is not None for k in ids) and canonical_cycle(ids) in seen:
                    continue
                ids = [k if k is not None else store.add(complex(z)) for k, z in zip(ids, image)]
                key = canonical_cycle(ids)
                if key in seen:
                    continue
                seen.add(key)
                faces.append(key)
                cycles.append(ids)
                generation.append(layer)
                queue.append(len(cycles) - 1)

    return Tiling(spec, store.points, faces, generation)
