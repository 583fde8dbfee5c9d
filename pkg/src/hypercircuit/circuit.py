"""Capacitively coupled LC resonator networks and their S-parameters.

Node 0 is ground.  A lattice vertex ``k`` becomes node ``k + 1``; port and
coupler-island nodes follow after the resonator nodes.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import CircuitError, NumericalError, ValidationError
from .lattice import LatticeGraph

F0_DEFAULT = 6.5e9
Z_RES_DEFAULT = 50.0
Z0_DEFAULT = 50.0
C_REF_DEFAULT = 1e-15
C_PORT_DEFAULT = 2e-15
SWEEP_POINTS = 20_001
SWEEP_SPAN = 0.05  # fractional half-width around f0
_CHUNK = 512


def resonator_lc(f0: float, impedance: float) -> tuple[float, float]:
    """(L, C) with resonance ``f0`` and characteristic impedance ``sqrt(L/C)``."""
    if not (f0 > 0 and impedance > 0):
        raise CircuitError("resonator frequency and impedance must be positive")
    w0 = 2.0 * math.pi * f0
    return impedance / w0, 1.0 / (w0 * impedance)


def default_frequencies(f0: float = F0_DEFAULT, n: int = SWEEP_POINTS, span: float = SWEEP_SPAN) -> np.ndarray:
    return np.linspace(f0 * (1.0 - span), f0 * (1.0 + span), n)


# -- coupling plan ------------------------------------------------------------


@dataclass
class CouplingPlan:
    """Per-edge coupling capacitances, ``C_ij = C_ref * d_max / d_ij``."""

    reference_capacitance: float
    capacitances: np.ndarray
    distance_basis: str = "euclidean"

    @property
    def weights(self) -> np.ndarray:
        return self.capacitances / self.reference_capacitance


def derive_couplings(g: LatticeGraph, c_ref: float = C_REF_DEFAULT, basis: str = "euclidean") -> CouplingPlan:
    if basis == "uniform":
        return CouplingPlan(c_ref, np.full(g.n_edges, float(c_ref)), "uniform")
    if not c_ref > 0:
        raise CircuitError("reference capacitance must be positive")
    d = np.array([e.length(basis) for e in g.edges])
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise CircuitError("edge distances must be positive and finite")
    return CouplingPlan(float(c_ref), c_ref * d.max() / d, basis)


# -- netlist ------------------------------------------------------------------


@dataclass
class Netlist:
    capacitors: list[tuple[int, int, float]] = field(default_factory=list)
    inductors: list[tuple[int, int, float]] = field(default_factory=list)
    resistors: list[tuple[int, int, float]] = field(default_factory=list)
    ports: list[tuple[int, float]] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        """Highest node index (ground excluded)."""
        nodes = [0]
        for a, b, _ in self.capacitors + self.inductors + self.resistors:
            nodes += [a, b]
        nodes += [n for n, _ in self.ports]
        return max(nodes)

    def validate(self) -> None:
        for kind, elems in (("C", self.capacitors), ("L", self.inductors), ("R", self.resistors)):
            for a, b, v in elems:
                if a == b:
                    raise CircuitError(f"{kind} element shorted on node {a}")
                if min(a, b) < 0:
                    raise CircuitError(f"negative node index in {kind} element")
                if not (v > 0 and math.isfinite(v)):
                    raise CircuitError(f"{kind} element between {a} and {b} has invalid value {v}")
        port_nodes = [n for n, _ in self.ports]
        if len(set(port_nodes)) != len(port_nodes):
            raise CircuitError("two ports share a node")
        for n, z in self.ports:
            if n <= 0:
                raise CircuitError("port on ground node")
            if not z > 0:
                raise CircuitError(f"port on node {n} has non-positive impedance")
        # every node needs a path to ground; ports count as a load to ground
        n = self.n_nodes
        parent = list(range(n + 1))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b, _ in self.capacitors + self.inductors + self.resistors:
            parent[find(a)] = find(b)
        for node, _ in self.ports:
            parent[find(node)] = find(0)
        used = {0} | {x for a, b, _ in self.capacitors + self.inductors + self.resistors for x in (a, b)}
        used |= set(port_nodes)
        floating = sorted(k for k in used if find(k) != find(0))
        if floating:
            raise CircuitError(f"nodes without a path to ground: {floating[:10]}")
        missing = [k for k in range(1, n + 1) if k not in used]
        if missing:
            raise CircuitError(f"node numbering has holes: {missing[:10]}")

    def to_text(self) -> str:
        lines = [f"# {c}" for c in self.comments]
        lines += [f"C {a} {b} {float(v)!r}" for a, b, v in self.capacitors]
        lines += [f"L {a} {b} {float(v)!r}" for a, b, v in self.inductors]
        lines += [f"R {a} {b} {float(v)!r}" for a, b, v in self.resistors]
        lines += [f"P {n} {float(z)!r}" for n, z in self.ports]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Netlist":
        net = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                net.comments.append(line[1:].strip())
                continue
            tok = line.split("#", 1)[0].split()
            try:
                if tok[0] in ("C", "L", "R") and len(tok) == 4:
                    elem = (int(tok[1]), int(tok[2]), float(tok[3]))
                    {"C": net.capacitors, "L": net.inductors, "R": net.resistors}[tok[0]].append(elem)
                elif tok[0] == "P" and len(tok) == 3:
                    net.ports.append((int(tok[1]), float(tok[2])))
                else:
                    raise CircuitError(f"line {lineno}: cannot parse {raw!r}")
            except ValueError as exc:
                raise CircuitError(f"line {lineno}: {exc}") from None
        net.validate()
        return net


def _compensated_shunts(
    n_res: int,
    c_res: float,
    maxwell_diag: np.ndarray,
) -> list[tuple[int, int, float]]:
    shunts = []
    for k in range(n_res):
        c = c_res - maxwell_diag[k]
        if not c > 0:
            raise CircuitError(
                f"coupling capacitance at resonator {k} ({maxwell_diag[k]:.3e} F) exceeds the "
                f"resonator capacitance; lower c_ref or the port coupling"
            )
        shunts.append((k + 1, 0, float(c)))
    return shunts


def synthesize_netlist(
    g: LatticeGraph,
    plan: CouplingPlan,
    f0: float = F0_DEFAULT,
    impedance: float = Z_RES_DEFAULT,
    port_vertices: Sequence[int] = (),
    port_coupling: float = C_PORT_DEFAULT,
    z0: float = Z0_DEFAULT,
    compensate: bool = True,
    shunt_conductance: float = 0.0,
) -> Netlist:
    """One LC tank per vertex, one coupling capacitor per edge, series-capacitor ports.

    With ``compensate`` the shunt capacitor of every tank is reduced by the
    coupling and port capacitance attached to it, so each node's total
    capacitance equals ``C`` of the bare resonator.  The capacitance matrix
    is then ``C*I - C_ref*W`` and the mode splittings follow the weighted
    adjacency ``W`` directly.
    """
    l_res, c_res = resonator_lc(f0, impedance)
    if len(plan.capacitances) != g.n_edges:
        raise CircuitError("coupling plan does not match the lattice")
    _check_ports(g.n_vertices, port_vertices)
    n = g.n_vertices
    diag = np.zeros(n)
    couplings = []
    for e, c in zip(g.edges, plan.capacitances):
        couplings.append((e.i + 1, e.j + 1, float(c)))
        diag[e.i] += c
        diag[e.j] += c
    for v in port_vertices:
        diag[v] += port_coupling
    shunts = _compensated_shunts(n, c_res, diag if compensate else np.zeros(n))
    net = Netlist(comments=[f"{n} resonators f0={f0!r} Hz Z={impedance!r} ohm basis={plan.distance_basis}"])
    net.inductors = [(k + 1, 0, l_res) for k in range(n)]
    net.capacitors = shunts + couplings
    _add_ports(net, n + 1, port_vertices, port_coupling, z0)
    if shunt_conductance > 0:
        net.resistors = [(k + 1, 0, 1.0 / shunt_conductance) for k in range(n)]
    net.validate()
    return net


def _check_ports(n_vertices: int, port_vertices: Sequence[int]) -> None:
    if len(set(port_vertices)) != len(port_vertices):
        raise CircuitError("duplicate port vertex")
    for v in port_vertices:
        if not 0 <= v < n_vertices:
            raise CircuitError(f"port vertex {v} is not a lattice vertex")


def _add_ports(net: Netlist, first_node: int, port_vertices, port_coupling, z0) -> None:
    if port_vertices and not port_coupling > 0:
        raise CircuitError("port coupling must be positive")
    for k, v in enumerate(port_vertices):
        node = first_node + k
        net.capacitors.append((v + 1, node, float(port_coupling)))
        net.ports.append((node, float(z0)))


# -- couplers -------------------------------------------------------------------


@dataclass
class CouplerReduction:
    """Result of eliminating a floating coupler island.

    ``coupling[a, b]`` is the effective capacitor between branches ``a`` and
    ``b``; ``self_capacitance[a]`` is what the island adds to branch ``a``'s
    total (diagonal) capacitance.
    """

    coupling: np.ndarray
    self_capacitance: np.ndarray
    resonators: list = field(default_factory=list)


def reduce_coupler(island_caps: Sequence[tuple[object, float]], ground_cap: float = 0.0) -> CouplerReduction:
    ids = [r for r, _ in island_caps]
    c = np.array([float(v) for _, v in island_caps])
    if len(c) < 2:
        raise CircuitError("a coupler needs at least two branches")
    if np.any(c < 0) or ground_cap < 0:
        raise CircuitError("coupler capacitances must be non-negative")
    total = ground_cap + c.sum()
    if not total > 0:
        raise CircuitError("degenerate coupler: all capacitances are zero")
    k = np.outer(c, c) / total
    np.fill_diagonal(k, 0.0)
    return CouplerReduction(k, c * (total - c) / total, ids)


def coupler_branch_caps(targets: dict[tuple[int, int], float], branches: Sequence[int], ground_cap: float = 0.0) -> np.ndarray:
    """Branch capacitances whose reduced pairwise couplings best match ``targets``.

    Pairwise couplings factor as ``x_a * x_b`` with ``x = C / sqrt(S)``; the
    log of that system is linear and solved in least squares (exact for 2-
    and 3-way couplers).  ``S`` then follows from ``S = sqrt(S)*sum(x) + C_g``.
    """
    idx = {b: k for k, b in enumerate(branches)}
    rows, rhs = [], []
    for (a, b), val in targets.items():
        r = np.zeros(len(branches))
        r[idx[a]] = r[idx[b]] = 1.0
        rows.append(r)
        rhs.append(math.log(val))
    x = np.exp(np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0])
    s = x.sum()
    root = (s + math.sqrt(s * s + 4.0 * ground_cap)) / 2.0
    return x * root


def synthesize_coupler_netlist(
    parent: LatticeGraph,
    medial: LatticeGraph,
    plan: CouplingPlan,
    f0: float = F0_DEFAULT,
    impedance: float = Z_RES_DEFAULT,
    port_vertices: Sequence[int] = (),
    port_coupling: float = C_PORT_DEFAULT,
    z0: float = Z0_DEFAULT,
    island_ground_cap: float = 0.0,
    shunt_conductance: float = 0.0,
) -> Netlist:
    """Kagome-like device: a resonator per medial vertex, a coupler island per parent vertex.

    Each island joins the resonators on the parent edges meeting at that
    vertex.  Branch capacitors are chosen so the island's reduced pairwise
    couplings equal the plan's medial-edge capacitances; tank shunts are
    compensated for the reduced self-capacitance.
    """
    if medial.n_vertices != parent.n_edges:
        raise CircuitError("medial lattice is not derived from this parent")
    l_res, c_res = resonator_lc(f0, impedance)
    _check_ports(medial.n_vertices, port_vertices)
    target = {(e.i, e.j): float(c) for e, c in zip(medial.edges, plan.capacitances)}
    stars: list[list[int]] = [[] for _ in range(parent.n_vertices)]
    for k, e in enumerate(parent.edges):
        stars[e.i].append(k)
        stars[e.j].append(k)

    n = medial.n_vertices
    diag = np.zeros(n)
    branch_elems, island_elems = [], []
    next_node = n + 1
    for star in stars:
        if len(star) < 2:
            continue
        pairs = {(a, b): target[(a, b)] for a in star for b in star if a < b}
        caps = coupler_branch_caps(pairs, star, island_ground_cap)
        red = reduce_coupler(list(zip(star, caps)), island_ground_cap)
        for r, c, extra in zip(star, caps, red.self_capacitance):
            branch_elems.append((r + 1, next_node, float(c)))
            diag[r] += extra
        if island_ground_cap > 0:
            island_elems.append((next_node, 0, float(island_ground_cap)))
        next_node += 1
    for v in port_vertices:
        diag[v] += port_coupling

    net = Netlist(comments=[f"{n} resonators via {next_node - n - 1} couplers f0={f0!r} Hz basis={plan.distance_basis}"])
    net.inductors = [(k + 1, 0, l_res) for k in range(n)]
    net.capacitors = _compensated_shunts(n, c_res, diag) + branch_elems + island_elems
    _add_ports(net, next_node, port_vertices, port_coupling, z0)
    if shunt_conductance > 0:
        net.resistors = [(k + 1, 0, 1.0 / shunt_conductance) for k in range(n)]
    net.validate()
    return net


# -- nodal analysis -------------------------------------------------------------


def nodal_matrices(net: Netlist) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Capacitance, inverse-inductance and conductance matrices (ground removed)."""
    n = net.n_nodes
    mats = [np.zeros((n + 1, n + 1)) for _ in range(3)]
    for mat, elems, f in (
        (mats[0], net.capacitors, lambda v: v),
        (mats[1], net.inductors, lambda v: 1.0 / v),
        (mats[2], net.resistors, lambda v: 1.0 / v),
    ):
        for a, b, v in elems:
            y = f(v)
            mat[a, a] += y
            mat[b, b] += y
            mat[a, b] -= y
            mat[b, a] -= y
    return tuple(m[1:, 1:] for m in mats)


@dataclass
class SweepResult:
    frequencies: np.ndarray
    s: np.ndarray  # shape (n_freq, n_ports, n_ports)
    failed: list[int] = field(default_factory=list)

    @property
    def n_ports(self) -> int:
        return self.s.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.n_ports
        header = ["frequency_hz"]
        for a in range(n):
            for b in range(n):
                header += [f"re_S{a + 1}{b + 1}", f"im_S{a + 1}{b + 1}"]
        w.writerow(header)
        for f, s in zip(self.frequencies, self.s):
            row = [repr(float(f))]
            for a in range(n):
                for b in range(n):
                    row += [repr(float(s[a, b].real)), repr(float(s[a, b].imag))]
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SweepResult":
        rows = list(csv.reader(io.StringIO(text)))
        header, data = rows[0], np.array(rows[1:], dtype=float)
        n = int(round(math.sqrt((len(header) - 1) / 2)))
        if 2 * n * n + 1 != len(header):
            raise ValidationError("sweep CSV header does not describe a square S-matrix")
        s = (data[:, 1::2] + 1j * data[:, 2::2]).reshape(len(data), n, n)
        return cls(data[:, 0], s)


def ac_sweep(net: Netlist, frequencies: Sequence[float]) -> SweepResult:
    """S-matrix at each frequency by nodal analysis and port-block Schur reduction.

    ``Y(w) = jwC + G + Gamma/(jw)``; internal nodes are eliminated to give
    the port admittance ``Y_p`` and ``S = (I - z Y_p z)(I + z Y_p z)^-1`` with
    ``z = diag(sqrt(Z0))``.  A singular point yields a NaN matrix and is
    listed in ``failed`` instead of aborting the sweep.
    """
    f = np.asarray(frequencies, dtype=float)
    if np.any(f <= 0):
        raise CircuitError("frequencies must be positive")
    net.validate()
    if not net.ports:
        raise CircuitError("netlist has no ports")
    cmat, gamma, gmat = nodal_matrices(net)
    ports = np.array([n - 1 for n, _ in net.ports])
    internal = np.setdiff1d(np.arange(cmat.shape[0]), ports)
    zsq = np.sqrt(np.array([z for _, z in net.ports]))
    n_p = len(ports)
    eye = np.eye(n_p)
    out = np.full((len(f), n_p, n_p), np.nan + 0j)
    failed = []

    def block(m, r, c):
        return m[np.ix_(r, c)]

    parts = {
        key: (block(cmat, *rc), block(gamma, *rc), block(gmat, *rc))
        for key, rc in {"pp": (ports, ports), "pi": (ports, internal), "ii": (internal, internal)}.items()
    }

    def admittance(key, w):
        c, gm, g = parts[key]
        return 1j * w[:, None, None] * c + g + gm / (1j * w[:, None, None])

    for start in range(0, len(f), _CHUNK):
        w = 2.0 * math.pi * f[start : start + _CHUNK]
        y_pp, y_pi, y_ii = admittance("pp", w), admittance("pi", w), admittance("ii", w)
        try:
            x = np.linalg.solve(y_ii, np.swapaxes(y_pi, 1, 2)) if len(internal) else None
            y_p = y_pp - y_pi @ x if x is not None else y_pp
            yn = zsq[:, None] * y_p * zsq[None, :]
            out[start : start + len(w)] = np.swapaxes(np.linalg.solve(np.swapaxes(eye + yn, 1, 2), np.swapaxes(eye - yn, 1, 2)), 1, 2)
        except np.linalg.LinAlgError:
            for k in range(len(w)):
                try:
                    ww = w[k : k + 1]
                    a_pp, a_pi, a_ii = admittance("pp", ww)[0], admittance("pi", ww)[0], admittance("ii", ww)[0]
                    y_p = a_pp - a_pi @ np.linalg.solve(a_ii, a_pi.T) if len(internal) else a_pp
                    yn = zsq[:, None] * y_p * zsq[None, :]
                    out[start + k] = (eye - yn) @ np.linalg.inv(eye + yn)
                except np.linalg.LinAlgError:
                    failed.append(start + k)
    return SweepResult(f, out, failed)


def netlist_modes(net: Netlist, ports: str = "short") -> np.ndarray:
    """Lossless normal-mode frequencies (Hz), ascending.

    Port nodes are either shorted to ground (``"short"``, the weak-coupling
    limit ``Z0 << 1/(wC_port)``) or left open (``"open"``).  Nodes without an
    inductive path (coupler islands, open ports) are eliminated statically.
    """
    cmat, gamma, _ = nodal_matrices(net)
    port_idx = [n - 1 for n, _ in net.ports]
    keep = np.setdiff1d(np.arange(cmat.shape[0]), port_idx) if ports == "short" else np.arange(cmat.shape[0])
    if ports not in ("short", "open"):
        raise ValidationError(f"ports must be 'short' or 'open', got {ports!r}")
    cmat, gamma = cmat[np.ix_(keep, keep)], gamma[np.ix_(keep, keep)]
    inductive = np.flatnonzero(np.abs(np.diag(gamma)) > 0)
    static = np.setdiff1d(np.arange(len(keep)), inductive)
    c_eff = cmat[np.ix_(inductive, inductive)]
    if len(static):
        c_is = cmat[np.ix_(inductive, static)]
        c_eff = c_eff - c_is @ np.linalg.solve(cmat[np.ix_(static, static)], c_is.T)
    g_eff = gamma[np.ix_(inductive, inductive)]
    try:
        w2 = scipy.linalg.eigh(g_eff, c_eff, eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"mode analysis failed: {exc}") from None
    if np.any(w2 <= 0):
        raise NumericalError("non-positive mode frequency squared")
    return np.sort(np.sqrt(w2) / (2.0 * math.pi))


def transmission_db(sweep: SweepResult, out_port: int, in_port: int) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(np.abs(sweep.s[:, out_port, in_port]))


def simulated_trace(sweep: SweepResult, out_port: int, in_ports: Iterable[int]):
    """Per-frequency maximum of ``|S(out, in)|`` in dB over ``in_ports`` (0-based)."""
    from .analysis import Trace

    in_ports = list(in_ports)
    if not in_ports:
        raise ValidationError("at least one input port is required")
    for p in [out_port] + in_ports:
        if not 0 <= p < sweep.n_ports:
            raise ValidationError(f"port {p} does not exist (sweep has {sweep.n_ports})")
    db = np.max([transmission_db(sweep, out_port, p) for p in in_ports], axis=0)
    return Trace(sweep.frequencies.copy(), db)


# -- touchstone ----------------------------------------------------------------


def touchstone_text(sweep: SweepResult, z0: float = Z0_DEFAULT) -> str:
    """Touchstone v1 export in magnitude/angle (degrees) format."""
    n = sweep.n_ports
    lines = [f"! {n}-port S-parameters", f"# HZ S MA R {z0!r}"]
    for f, s in zip(sweep.frequencies, sweep.s):
        if n == 2:
            entries = [s[0, 0], s[1, 0], s[0, 1], s[1, 1]]
        else:
            entries = [s[a, b] for a in range(n) for b in range(n)]
        vals = []
        for x in entries:
            vals += [repr(float(abs(x))), repr(float(np.degrees(np.angle(x))))]
        # at most four complex entries per line, as in the format's convention
        chunks = [vals[k : k + 8] for k in range(0, len(vals), 8)]
        lines.append(" ".join([repr(float(f))] + chunks[0]))
        lines += [" ".join(c) for c in chunks[1:]]
    return "\n".join(lines) + "\n"


_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}


def read_touchstone(text: str, n_ports: int | None = None) -> SweepResult:
    """Parse Touchstone v1 S-parameter data (RI, MA or DB; any frequency unit)."""
    unit, fmt = 1e9, "MA"  # format defaults
    numbers: list[float] = []
    for raw in text.splitlines():
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            opts = line[1:].upper().split()
            for k, tok in enumerate(opts):
                if tok in _UNITS:
                    unit = _UNITS[tok]
                elif tok in ("RI", "MA", "DB"):
                    fmt = tok
                elif tok in ("Y", "Z", "H", "G"):
                    raise ValidationError(f"only S-parameter files are supported, got {tok}")
            continue
        numbers += [float(t) for t in line.split()]
    if n_ports is None:
        raise ValidationError("n_ports must be given (usually from the .sNp extension)")
    width = 1 + 2 * n_ports * n_ports
    if not numbers or len(numbers) % width:
        raise ValidationError(f"touchstone data length {len(numbers)} is not a multiple of {width}")
    data = np.array(numbers).reshape(-1, width)
    a, b = data[:, 1::2], data[:, 2::2]
    if fmt == "RI":
        vals = a + 1j * b
    elif fmt == "MA":
        vals = a * np.exp(1j * np.radians(b))
    else:
        vals = 10.0 ** (a / 20.0) * np.exp(1j * np.radians(b))
    s = vals.reshape(len(data), n_ports, n_ports)
    if n_ports == 2:
        s = np.swapaxes(s, 1, 2)  # two-port order is S11 S21 S12 S22
    return SweepResult(data[:, 0] * unit, s)
