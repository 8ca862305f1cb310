import math
import random

import numpy as np
import pytest

from padshield.distributions import Distribution, DistributionError, Family, sample


def test_point_mass_is_constant():
    assert sample(Distribution.point(5), random.Random(0)) == 5.0


def test_degenerate_uniform_returns_bound():
    assert sample(Distribution.uniform(512, 512), random.Random(0)) == 512.0


def test_clamped_normal_mean():
    rng = random.Random(1)
    d = Distribution.normal(10, 2, clamp_min=0, clamp_max=20)
    xs = np.array([d.sample(rng) for _ in range(200_000)])
    assert abs(xs.mean() - 10) < 0.05
    assert xs.min() >= 0 and xs.max() <= 20


def test_uniform_discrete_is_inclusive_integers():
    rng = random.Random(2)
    xs = {Distribution.discrete(1, 4).sample(rng) for _ in range(2000)}
    assert xs == {1.0, 2.0, 3.0, 4.0}


def test_rayleigh_mode_near_scale():
    rng = random.Random(3)
    xs = np.array([Distribution.rayleigh(2.0).sample(rng) for _ in range(200_000)])
    hist, edges = np.histogram(xs, bins=80, range=(0, 8))
    mode = (edges[hist.argmax()] + edges[hist.argmax() + 1]) / 2
    assert abs(mode - 2.0) < 0.25
    assert abs(xs.mean() - 2.0 * math.sqrt(math.pi / 2)) < 0.02


@pytest.mark.parametrize("build", [
    lambda: Distribution.uniform(3, 1),
    lambda: Distribution.normal(0, -1),
    lambda: Distribution.rayleigh(0),
    lambda: Distribution.discrete(0.5, 2),
])
def test_invalid_parameters_rejected(build):
    with pytest.raises(DistributionError):
        build()


def test_family_round_trips_by_value():
    assert Family("Normal") is Family.NORMAL
