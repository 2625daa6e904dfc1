import numpy as np
import pytest

from discrete_sampler.graph_model import (
    TargetDistribution,
    antipodal_target,
    build_problem,
    gaussian_mixture_target,
    make_cycle,
    make_hypercube,
    make_lattice,
    make_two_loop,
    uniform_target,
)

C3_WEIGHTS = [0.9913, 0.0044, 0.0043]
TWO_LOOP_WEIGHTS = [8, 8, 8, 3, 3, 8, 8, 8]


@pytest.fixture(scope='session')
def triangle_uniform():
    g = make_cycle(3)
    return build_problem(g, uniform_target(g))


@pytest.fixture(scope='session')
def c3_problem():
    return build_problem(make_cycle(3), TargetDistribution.from_weights(C3_WEIGHTS))


@pytest.fixture(scope='session')
def two_loop_problem():
    return build_problem(make_two_loop((3, 3), 2), TargetDistribution.from_weights(TWO_LOOP_WEIGHTS))


@pytest.fixture(scope='session')
def hypercube_problem():
    g = make_hypercube(6)
    return build_problem(g, antipodal_target(g, 16.0))


@pytest.fixture(scope='session')
def lattice_problem():
    g = make_lattice(25, 25)
    return build_problem(g, gaussian_mixture_target(g, ((0.25, 0.25), (0.75, 0.75)), (10.0, 40.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
