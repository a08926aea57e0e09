from __future__ import annotations

import numpy as np
import pytest

from viewshed.grid import Grid, TerrainSpec, Viewpoint, generate


def random_case(rng: np.random.Generator, max_side: int, *, nodata: bool = True,
                offsets=(0.0, 0.5, 3.0)) -> tuple[Grid, Viewpoint]:
    """A random grid (iid, integer-valued or smooth) and a valid viewpoint on it."""
    while True:
        nr, nc = (int(x) for x in rng.integers(1, max_side + 1, 2))
        kind = int(rng.integers(3))
        if kind == 0:
            z = rng.uniform(0, 10, (nr, nc))
        elif kind == 1:
            z = rng.integers(0, 3, (nr, nc)).astype(float)
        else:
            z = generate(TerrainSpec("random_smooth", nr, nc, seed=int(rng.integers(1 << 30)),
                                     smoothness=2)).values
        g = Grid(z)
        if nodata and rng.random() < 0.25:
            g = g.with_nodata(rng.random((nr, nc)) < 0.15)
        vr, vc = int(rng.integers(nr)), int(rng.integers(nc))
        if not g.is_nodata(vr, vc):
            return g, Viewpoint(vr, vc, float(rng.choice(offsets)))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def record_criterion():
    """Record a one-line pass/fail verdict for the terminal summary."""

    def record(name: str, ok: bool, detail: str) -> None:
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
