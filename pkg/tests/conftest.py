from __future__ import annotations

import numpy as np
import pytest

from spherepack.geometry import SampleSet
from spherepack.testkit import icosphere_shape, unit_cube


def obj_text(mesh) -> str:
    lines = ["v %r %r %r" % tuple(v) for v in mesh.vertices.tolist()]
    lines += ["f %d %d %d" % (a + 1, b + 1, c + 1) for a, b, c in mesh.faces.tolist()]
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def cube():
    return unit_cube().mesh


@pytest.fixture(scope="session")
def sphere_mesh():
    return icosphere_shape(3, 1.0).mesh


@pytest.fixture(scope="session")
def cube_samples(cube):
    return SampleSet.draw(cube, 4000, 4000, seed=5)


@pytest.fixture(scope="session")
def cube_obj(tmp_path_factory, cube):
    path = tmp_path_factory.mktemp("meshes") / "cube.obj"
    path.write_text(obj_text(cube))
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, echoed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
