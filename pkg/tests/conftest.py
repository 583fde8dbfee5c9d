"""Shared fixtures and the per-criterion acceptance summary."""

from __future__ import annotations

from collections import defaultdict

import numpy as np
import pytest

from hypercircuit.hypgeo import TilingSpec, generate_tiling
from hypercircuit.lattice import FlakeSpec, build_flake, medial_lattice

_criteria: dict[int, list[tuple[str, str]]] = defaultdict(list)


@pytest.fixture(scope="session")
def tiling83():
    return generate_tiling(TilingSpec(8, 3, 1))


@pytest.fixture(scope="session")
def tiling124():
    return generate_tiling(TilingSpec(12, 4, 1))


@pytest.fixture(scope="session")
def flake83(tiling83):
    return build_flake(tiling83, FlakeSpec(TilingSpec(8, 3, 1), "center_plus_edge_neighbors"))


@pytest.fixture(scope="session")
def flake124(tiling124):
    return build_flake(tiling124, FlakeSpec(TilingSpec(12, 4, 1), "center_plus_vertex_attached", (0, 3, 6, 9)))


@pytest.fixture(scope="session")
def kagome83(flake83):
    return medial_lattice(flake83)


@pytest.fixture(scope="session")
def kagome124(flake124):
    return medial_lattice(flake124)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    num = getattr(report, "criterion", None)
    if num is None:
        return
    _criteria[num].append((report.nodeid.split("::")[-1], report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        rep.criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        results = _criteria[num]
        failed = [name for name, outcome in results if outcome != "passed"]
        status = "FAIL" if failed else "PASS"
        detail = f"failed: {', '.join(failed)}" if failed else f"{len(results)} check" + ("s" if len(results) != 1 else "")
        terminalreporter.write_line(f"criterion {num:2d}: {status}  ({detail})")


def _edge_neighbours(tiling):
    owners: dict[tuple[int, int], list[int]] = {}
    for fid, face in enumerate(tiling.faces):
        for a, b in zip(face, face[1:] + face[:1]):
            owners.setdefault((min(a, b), max(a, b)), []).append(fid)
    nbrs = [set() for _ in tiling.faces]
    for fs in owners.values():
        for f in fs:
            nbrs[f].update(x for x in fs if x != f)
    return nbrs


@pytest.fixture(scope="session")
def random_flakes():
    """50 random edge-connected flakes from four tilings; every third one medial."""
    rng = np.random.default_rng(20240611)
    tilings = {pq: generate_tiling(TilingSpec(*pq, 2)) for pq in [(8, 3), (12, 4), (7, 3), (5, 4)]}
    nbrs = {pq: _edge_neighbours(t) for pq, t in tilings.items()}
    keys = list(tilings)
    out = []
    for k in range(50):
        pq = keys[int(rng.integers(len(keys)))]
        chosen = [int(rng.integers(len(tilings[pq].faces) // 3))]
        for _ in range(int(rng.integers(0, 6))):
            frontier = sorted({f for c in chosen for f in nbrs[pq][c]} - set(chosen))
            if not frontier:
                break
            chosen.append(frontier[int(rng.integers(len(frontier)))])
        g = build_flake(tilings[pq], FlakeSpec(TilingSpec(*pq, 2), "explicit", face_ids=tuple(chosen)))
        out.append(medial_lattice(g) if k % 3 == 2 else g)
    return out
