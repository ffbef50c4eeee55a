import os

import numpy as np
import pytest
from hypothesis import settings

from entdim import DensityMatrix, HubbardParams, build_hamiltonian, ground_state, make_basis

settings.register_profile("entdim", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("entdim")

ACCEPTANCE_LINES = []


def record(number: int, ok: bool, text: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {text}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES, key=lambda x: x[0]):
        terminalreporter.write_line(line)


def pytest_collection_modifyitems(config, items):
    if os.environ.get("ENTDIM_RUN_OPTIONAL") == "1":
        return
    skip = pytest.mark.skip(reason="optional long run; set ENTDIM_RUN_OPTIONAL=1")
    for item in items:
        if "optional" in item.keywords:
            item.add_marker(skip)


def ground(L, N=1, species=2, statistics="distinguishable", U=-12.0):
    b = make_basis(L, N, species, statistics)
    return b, DensityMatrix.pure(b, ground_state(build_hamiltonian(b, HubbardParams(U))))


def random_pure(basis, rng, real=False):
    v = rng.normal(size=basis.dim)
    if not real:
        v = v + 1j * rng.normal(size=basis.dim)
    return DensityMatrix.pure(basis, v)


def random_mixed(basis, rng, rank=3):
    V = rng.normal(size=(basis.dim, rank)) + 1j * rng.normal(size=(basis.dim, rank))
    V /= np.linalg.norm(V, axis=0)
    w = rng.dirichlet(np.ones(rank))
    return DensityMatrix(basis, vectors=V, weights=w)
