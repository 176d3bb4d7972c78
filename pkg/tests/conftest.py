"""Shared fixtures: the worked 3-state example chain and random corpora."""

import pathlib

import numpy as np
import pytest

from robust_ldp import BallSet, ChainSpec, Dist, Kernel, MetricSpace

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent
EXAMPLE_CHAIN_PATH = REPO_ROOT / "examples" / "eckstein_example.json"

EXAMPLE_KERNEL = np.array(
    [
        [0.6, 0.2, 0.2],
        [0.3, 0.4, 0.3],
        [0.0, 0.3, 0.7],
    ]
)
EXAMPLE_STATIONARY = np.array([3 / 13, 4 / 13, 6 / 13])


@pytest.fixture(scope="session")
def example_space():
    return MetricSpace.discrete(["1", "2", "3"])


@pytest.fixture(scope="session")
def example_spec(example_space):
    """The worked 3-state chain at robustness radius 0.05."""
    return ChainSpec.build(example_space, [0.0, 0.0, 1.0], EXAMPLE_KERNEL, 0.05)


@pytest.fixture(scope="session")
def example_ball(example_space):
    return BallSet(Dist.dirac(2, 3), 0.2)


@pytest.fixture(scope="session")
def example_chain_path():
    assert EXAMPLE_CHAIN_PATH.exists()
    return str(EXAMPLE_CHAIN_PATH)


def random_metric(rng, n, discrete=False):
    """A random metric space: either 0/1 or Euclidean on random plane points."""
    labels = [f"s{i}" for i in range(n)]
    if discrete:
        return MetricSpace.discrete(labels)
    pts = rng.normal(size=(n, 2))
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    d = d / d.max()
    d = np.where(np.eye(n, dtype=bool), 0.0, np.maximum(d, 0.05))
    d = 0.5 * (d + d.T)
    return MetricSpace.from_matrix(labels, d)


def random_simplex(rng, n, floor=0.0):
    p = rng.dirichlet(np.ones(n))
    if floor > 0.0:
        p = (1.0 - n * floor) * p + floor
    return Dist.from_values(p)


def random_kernel(rng, n, floor=0.02):
    rows = np.stack([random_simplex(rng, n, floor=floor).p for _ in range(n)])
    return Kernel.from_matrix(rows)


def two_state_corpus(count=25, seed=20240):
    """Fixed random two-state instances used by the oracle-equivalence suite."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        d12 = float(rng.uniform(0.5, 2.0))
        space = MetricSpace.from_matrix(["a", "b"], [[0.0, d12], [d12, 0.0]])
        kernel = random_kernel(rng, 2, floor=0.05)
        pi0 = random_simplex(rng, 2)
        r = float(rng.uniform(0.0, 0.25))
        spec = ChainSpec.build(space, pi0, kernel, r)
        nu = random_simplex(rng, 2, floor=0.01)
        mu = random_simplex(rng, 2, floor=0.05)
        center = random_simplex(rng, 2)
        kappa = float(rng.uniform(0.05, 0.5)) * d12
        out.append((spec, nu, mu, BallSet(center, kappa)))
    return out


def three_state_corpus(count=8, seed=777):
    """Small 3-state chains (positive kernels, mixed metrics) for the
    invariant suites."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        space = random_metric(rng, 3, discrete=(k % 2 == 0))
        kernel = random_kernel(rng, 3, floor=0.03)
        pi0 = random_simplex(rng, 3)
        r = float(rng.uniform(0.0, 0.15))
        out.append(ChainSpec.build(space, pi0, kernel, r))
    return out
