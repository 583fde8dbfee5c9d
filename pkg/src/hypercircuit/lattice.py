"""Finite lattice flakes, medial (kagome-like) lattices and cycle-space tools."""

from __future__ import annotations

import cmath
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import GraphError, SelectionError
from .hypgeo import Tiling, TilingSpec, canonical_cycle, hyperbolic_distance, hyperbolic_midpoint

Kind = Literal["parent", "medial"]


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    euclidean: float
    hyperbolic: float

    def length(self, basis: str = "euclidean") -> float:
        if basis == "euclidean":
            return self.euclidean
        if basis == "hyperbolic":
            return self.hyperbolic
        raise ValueError(f"unknown distance basis {basis!r}")


@dataclass
class LatticeGraph:
    """Undirected simple graph with disk positions and recorded plaquettes.

    Vertex ids are ``0..V-1``; ``positions[k]`` is the complex disk
    coordinate of vertex ``k``.  Edges are stored with ``i < j``.
    """

    positions: np.ndarray
    edges: list[Edge]
    faces: list[tuple[int, ...]] = field(default_factory=list)
    kind: Kind = "parent"

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=complex)
        n = len(self.positions)
        seen = set()
        for e in self.edges:
            if e.i == e.j:
                raise GraphError(f"self-loop at vertex {e.i}")
            if not e.i < e.j:
                raise GraphError(f"edge ({e.i}, {e.j}) is not in canonical i < j order")
            if e.j >= n:
                raise GraphError(f"edge ({e.i}, {e.j}) references a missing vertex")
            if (e.i, e.j) in seen:
                raise GraphError(f"duplicate edge ({e.i}, {e.j})")
            seen.add((e.i, e.j))
        if n and not self.is_connected():
            raise GraphError("lattice graph is not connected")

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def summary(self) -> str:
        if self.kind == "medial":
            return f"V={self.n_vertices} E={self.n_edges}"
        return f"V={self.n_vertices} E={self.n_edges} F={self.n_faces}"

    def adjacency_list(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for e in self.edges:
            adj[e.i].append(e.j)
            adj[e.j].append(e.i)
        return adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=int)
        for e in self.edges:
            deg[e.i] += 1
            deg[e.j] += 1
        return deg

    def adjacency_matrix(self, weights: Sequence[float] | None = None) -> np.ndarray:
        a = np.zeros((self.n_vertices, self.n_vertices))
        for k, e in enumerate(self.edges):
            w = 1.0 if weights is None else weights[k]
            a[e.i, e.j] = a[e.j, e.i] = w
        return a

    def incidence_matrix(self) -> np.ndarray:
        """Unsigned vertex-edge incidence, shape (V, E)."""
        b = np.zeros((self.n_vertices, self.n_edges))
        for k, e in enumerate(self.edges):
            b[e.i, k] = b[e.j, k] = 1.0
        return b

    def edge_index(self) -> dict[tuple[int, int], int]:
        return {(e.i, e.j): k for k, e in enumerate(self.edges)}

    def is_connected(self) -> bool:
        if self.n_vertices == 0:
            return False
        return len(_bfs_order(self.adjacency_list(), 0)) == self.n_vertices

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "vertices": [[k, float(z.real), float(z.imag)] for k, z in enumerate(self.positions)],
            "edges": [[e.i, e.j, e.euclidean, e.hyperbolic] for e in self.edges],
            "faces": [list(f) for f in self.faces],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "LatticeGraph":
        verts = sorted(data["vertices"], key=lambda v: v[0])
        if [v[0] for v in verts] != list(range(len(verts))):
            raise GraphError("vertex ids must be 0..V-1")
        pos = np.array([complex(re, im) for _, re, im in verts], dtype=complex)
        edges = [Edge(int(i), int(j), float(d_eu), float(d_h)) for i, j, d_eu, d_h in data["edges"]]
        kind = data.get("kind", "parent")
        if kind not in ("parent", "medial"):
            raise GraphError(f"unknown lattice kind {kind!r}")
        return cls(pos, edges, [tuple(f) for f in data.get("faces", [])], kind)

    @classmethod
    def from_json(cls, text: str) -> "LatticeGraph":
        return cls.from_dict(json.loads(text))


def _bfs_order(adj: list[list[int]], start: int) -> list[int]:
    order, seen, queue = [], {start}, deque([start])
    while queue:
        v = queue.popleft()
        order.append(v)
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return order


def _make_edge(i: int, j: int, zi: complex, zj: complex) -> Edge:
    i, j, zi, zj = (i, j, zi, zj) if i < j else (j, i, zj, zi)
    return Edge(i, j, abs(zi - zj), hyperbolic_distance(zi, zj))


def graph_from_faces(positions: np.ndarray, faces: Sequence[Sequence[int]], kind: Kind = "parent") -> LatticeGraph:
    """Build the graph whose edges are the sides of ``faces``."""
    pairs = set()
    for face in faces:
        for a, b in zip(face, list(face[1:]) + [face[0]]):
            pairs.add((min(a, b), max(a, b)))
    edges = [_make_edge(i, j, positions[i], positions[j]) for i, j in sorted(pairs)]
    return LatticeGraph(positions, edges, [canonical_cycle(list(f)) for f in faces], kind)


# -- flake selection -------------------------------------------------------


@dataclass(frozen=True)
class FlakeSpec:
    """How to cut a finite flake out of a tiling.

    ``selection`` is one of ``"center_plus_edge_neighbors"``,
    ``"center_plus_vertex_attached"`` (uses ``positions``: indices of the
    central polygon's vertices at which a corner-sharing face is attached)
    or ``"explicit"`` (uses ``face_ids``).
    """

    base: TilingSpec
    selection: str = "center_plus_edge_neighbors"
    positions: tuple[int, ...] = ()
    face_ids: tuple[int, ...] = ()


def _face_edges(face: Sequence[int]) -> set[tuple[int, int]]:
    return {(min(a, b), max(a, b)) for a, b in zip(face, list(face[1:]) + [face[0]])}


def _corner_face(tiling: Tiling, vertex: int, incident: list[int]) -> int:
    """Face at ``vertex`` sharing no edge with the central face, opposite in the fan."""
    central = tiling.faces[0]
    central_edges = _face_edges(central)
    others = [f for f in incident if f != 0 and not (_face_edges(tiling.faces[f]) & central_edges)]
    if not others:
        raise SelectionError(f"no corner-sharing face at central vertex {vertex}")
    if len(others) == 1:
        return others[0]
    # q > 4: take the face whose centroid direction is closest to the outward radial
    z = tiling.vertices[vertex]

    def deviation(f: int) -> float:
        c = np.mean(tiling.vertices[list(tiling.faces[f])])
        return abs(cmath.phase((c - z) / z))

    return min(others, key=deviation)


def select_faces(tiling: Tiling, spec: FlakeSpec) -> list[int]:
    faces = tiling.faces
    if spec.selection == "center_plus_edge_neighbors":
        central_edges = _face_edges(faces[0])
        return [0] + [f for f in range(1, len(faces)) if _face_edges(faces[f]) & central_edges]
    if spec.selection == "center_plus_vertex_attached":
        p = len(faces[0])
        incident = tiling.faces_at_vertex()
        chosen = [0]
        for pos in spec.positions:
            if not 0 <= pos < p:
                raise SelectionError(f"vertex position {pos} outside central {p}-gon")
            # central polygon vertices carry tiling ids 0..p-1 in angular order
            f = _corner_face(tiling, pos, incident[pos])
            if f not in chosen:
                chosen.append(f)
        return chosen
    if spec.selection == "explicit":
        if not spec.face_ids:
            raise SelectionError("explicit selection with no faces")
        missing = [f for f in spec.face_ids if not 0 <= f < len(faces)]
        if missing:
            raise SelectionError(f"faces {missing} not present in tiling")
        return list(dict.fromkeys(spec.face_ids))
    raise SelectionError(f"unknown selection {spec.selection!r}")


def _faces_connected(faces: list[tuple[int, ...]]) -> bool:
    if not faces:
        return False
    sets = [set(f) for f in faces]
    seen, queue = {0}, deque([0])
    while queue:
        a = queue.popleft()
        for b in range(len(faces)):
            if b not in seen and sets[a] & sets[b]:
                seen.add(b)
                queue.append(b)
    return len(seen) == len(faces)


def build_flake(tiling: Tiling, spec: FlakeSpec) -> LatticeGraph:
    """Induced graph of the selected faces, vertices renumbered in tiling order."""
    face_ids = select_faces(tiling, spec)
    chosen = [tiling.faces[f] for f in face_ids]
    if not _faces_connected(chosen):
        raise SelectionError("selected faces are not edge- or vertex-connected")
    old_ids = sorted({v for f in chosen for v in f})
    relabel = {v: k for k, v in enumerate(old_ids)}
    positions = tiling.vertices[old_ids]
    faces = [[relabel[v] for v in f] for f in chosen]
    return graph_from_faces(positions, faces, "parent")


def single_face(spec: TilingSpec) -> LatticeGraph:
    from .hypgeo import central_polygon_vertices

    pos = np.array([v.z for v in central_polygon_vertices(spec)])
    return graph_from_faces(pos, [list(range(spec.p))], "parent")


# -- medial lattice ---------------------------------------------------------


def medial_lattice(parent: LatticeGraph) -> LatticeGraph:
    """Line graph of ``parent`` with vertices at hyperbolic edge midpoints.

    Medial vertex ``k`` sits on parent edge ``k``.  Faces are the parent
    plaquettes (as cycles of their edges) plus, for every parent vertex of
    degree >= 3, the cycle of its incident edges in angular order.
    """
    if parent.kind != "parent":
        raise GraphError("medial_lattice expects a parent lattice")
    pos = np.array(
        [hyperbolic_midpoint(parent.positions[e.i], parent.positions[e.j]).z for e in parent.edges],
        dtype=complex,
    )
    incident: list[list[int]] = [[] for _ in range(parent.n_vertices)]
    for k, e in enumerate(parent.edges):
        incident[e.i].append(k)
        incident[e.j].append(k)

    pairs = set()
    for star in incident:
        for a in range(len(star)):
            for b in range(a + 1, len(star)):
                pairs.add((min(star[a], star[b]), max(star[a], star[b])))
    edges = [_make_edge(i, j, pos[i], pos[j]) for i, j in sorted(pairs)]

    eidx = parent.edge_index()
    faces = []
    for face in parent.faces:
        faces.append(canonical_cycle([eidx[(min(a, b), max(a, b))] for a, b in zip(face, face[1:] + face[:1])]))
    for v, star in enumerate(incident):
        if len(star) >= 3:
            z = parent.positions[v]
            ordered = sorted(star, key=lambda k: cmath.phase(pos[k] - z))
            faces.append(canonical_cycle(ordered))
    return LatticeGraph(pos, edges, faces, "medial")


# -- cycle space ------------------------------------------------------------


def cycle_rank(g: LatticeGraph) -> int:
    if not g.is_connected():
        raise GraphError("cycle rank requires a connected graph")
    return g.n_edges - g.n_vertices + 1


def plaquette_cycles(g: LatticeGraph) -> list[tuple[int, ...]]:
    return list(g.faces)


def cycle_edge_vector(g: LatticeGraph, cycle: Sequence[int]) -> np.ndarray:
    """GF(2) indicator vector of the edges traversed by ``cycle``."""
    eidx = g.edge_index()
    vec = np.zeros(g.n_edges, dtype=np.uint8)
    for a, b in zip(cycle, list(cycle[1:]) + [cycle[0]]):
        key = (min(a, b), max(a, b))
        if key not in eidx:
            raise GraphError(f"cycle step {key} is not an edge")
        vec[eidx[key]] ^= 1
    return vec


def gf2_rank(rows: np.ndarray) -> int:
    m = np.array(rows, dtype=np.uint8) % 2
    rank = 0
    n_rows, n_cols = m.shape if m.ndim == 2 else (0, 0)
    for col in range(n_cols):
        pivot = next((r for r in range(rank, n_rows) if m[r, col]), None)
        if pivot is None:
            continue
        m[[rank, pivot]] = m[[pivot, rank]]
        for r in range(n_rows):
            if r != rank and m[r, col]:
                m[r] ^= m[rank]
        rank += 1
    return rank


def is_bipartite(g: LatticeGraph) -> tuple[bool, list[int] | None]:
    """BFS 2-colouring; returns ``(True, colours)`` or ``(False, None)``."""
    adj = g.adjacency_list()
    colour = [-1] * g.n_vertices
    for s in range(g.n_vertices):
        if colour[s] >= 0:
            continue
        colour[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if colour[w] < 0:
                    colour[w] = 1 - colour[v]
                    queue.append(w)
                elif colour[w] == colour[v]:
                    return False, None
    return True, colour
