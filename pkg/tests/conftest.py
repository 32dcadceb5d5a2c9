import numpy as np
import pytest

from minmax_hj.family import MinMaxFamily, Piece
from minmax_hj.media import MediumSpec, sample_realization
from minmax_hj.profiles import AbsShift, NegatedAbs


@pytest.fixture
def sin_sq_medium():
    spec = MediumSpec("periodic", period=1.0, dim=1,
                      channels=[{"formula": "sin_sq"}])
    return sample_realization(spec, 0)


@pytest.fixture
def two_channel_medium():
    spec = MediumSpec("periodic", period=1.0, dim=1, channels=[
        {"formula": "sin_sq"},
        {"formula": "cos_sq", "amplitude": 0.5},
        {"formula": "sin_sq", "amplitude": 1.0, "offset": 0.5},
    ])
    return sample_realization(spec, 0)


@pytest.fixture
def base_family():
    """One level: check |p| - 1 + V(x), hat 1 - |p| + V(x), V = sin^2(pi x)."""
    check = Piece(AbsShift(0.0, 1.0, -1.0), "additive", 0)
    hat = Piece(NegatedAbs(0.0, 1.0, 1.0), "additive", 0)
    return MinMaxFamily([check], [hat], normalized=True)


@pytest.fixture
def two_level_family():
    """Two levels over channels V0 = sin^2, V1 = cos^2 / 2.

    check_1 = |p| - 1 + V0   hat_1 = 1 - |p| + V0
    check_2 = |p| - 3 + V1   hat_2 = 3 - |p| + V1
    Ordered, all pairs stable, contact chains strictly monotone.
    """
    checks = [Piece(AbsShift(0.0, 1.0, -1.0), "additive", 0),
              Piece(AbsShift(0.0, 1.0, -3.0), "additive", 1)]
    hats = [Piece(NegatedAbs(0.0, 1.0, 1.0), "additive", 0),
            Piece(NegatedAbs(0.0, 1.0, 3.0), "additive", 1)]
    return MinMaxFamily(checks, hats, normalized=True)


def random_piece(rng, medium, tag, dim=1):
    center = rng.uniform(-1.5, 1.5, size=dim)
    slope = rng.uniform(0.3, 2.0)
    offset = rng.uniform(-2.0, 2.0)
    cls = AbsShift if tag == "quasiconvex" else NegatedAbs
    profile = cls(center if dim > 1 else center[0], slope, offset)
    mode = rng.integers(0, 4)
    if mode == 0:
        return Piece(profile)
    if mode == 1:
        return Piece(profile, "additive", 0)
    if mode == 2:
        return Piece(profile, "additive", 1, scale=float(rng.uniform(0.2, 1.5)))
    return Piece(profile, "amplitude", 2, scale=float(rng.uniform(0.5, 1.5)))


def random_family(rng, ell, medium, dim=1, normalized_flag=True):
    checks = [random_piece(rng, medium, "quasiconvex", dim) for _ in range(ell)]
    hats = [random_piece(rng, medium, "quasiconcave", dim) for _ in range(ell)]
    return MinMaxFamily(checks, hats, normalized=normalized_flag)
