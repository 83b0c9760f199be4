import dataclasses

import numpy as np
import pytest

from entropy_obstacle.pipeline import builtin_configs, load_config
from entropy_obstacle.solver import solve_vi

ONE_D = ["poisson_1d", "obstacle_1d", "zero_data_1d", "degenerate_1d", "plaplace_1d", "negative_control_1d"]


@pytest.fixture(scope="session")
def solved():
    """Memoised (problem, solution) per builtin config name at its default resolution."""
    cache = {}

    def get(name):
        if name not in cache:
            cfg = load_config(name)
            problem = cfg.build_problem()
            cache[name] = (cfg, problem, solve_vi(problem, cfg.solver))
        return cache[name]

    return get


def with_theta(cfg, theta):
    out = dataclasses.replace(cfg)
    out.params = dataclasses.replace(cfg.params, theta=theta)
    return out


def random_field(mesh, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return scale * rng.normal(size=mesh.n_nodes)


def all_configs():
    return sorted(builtin_configs())
