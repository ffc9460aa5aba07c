import functools
import math

import numpy as np
import pytest

from dualcoop.chain import load_bundled
from dualcoop.sim import SimConfig, run_alignment

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_REPORT: list[str] = []


def elementary_dh(a, alpha, d, theta):
    """Independent oracle: product of four elementary transforms."""

    def rz(t):
        T = np.eye(4)
        T[:2, :2] = [[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]]
        return T

    def rx(t):
        T = np.eye(4)
        T[1:3, 1:3] = [[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]]
        return T

    def trans(x, y, z):
        T = np.eye(4)
        T[:3, 3] = [x, y, z]
        return T

    return rz(theta) @ trans(0, 0, d) @ trans(a, 0, 0) @ rx(alpha)


def oracle_fk(chain, q):
    T = chain.base_pose.matrix()
    for row, qj in zip(chain.rows, q):
        if row.kind.value == "revolute":
            T = T @ elementary_dh(row.a, row.alpha, row.d, row.theta_offset + qj)
        else:
            T = T @ elementary_dh(row.a, row.alpha, row.d + qj, row.theta_offset)
    return T @ chain.tool_offset.matrix()


@pytest.fixture(scope="session")
def system():
    return load_bundled()


@functools.lru_cache(maxsize=None)
def cached_run(method: str, alpha: float, task: str, dt: float = 0.005, duration: float = 10.0):
    """Full alignment runs are a few seconds each; share them across test modules."""
    return run_alignment(load_bundled(), SimConfig(method=method, alpha=alpha, task=task, dt=dt, duration=duration))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_REPORT:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_REPORT:
            terminalreporter.write_line(line)
