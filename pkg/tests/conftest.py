"""Shared generators and strategies for the test suite."""

import math

import numpy as np
from hypothesis import strategies as st

from boxbelief import BoxParams, CornerBelief, corners_from_box


def random_box(rng: np.random.Generator, center_scale: float = 40.0) -> BoxParams:
    """A random well-conditioned box (positive dims, bounded center)."""
    return BoxParams(
        x=rng.uniform(-center_scale, center_scale),
        y=rng.uniform(-3.0, 3.0),
        z=rng.uniform(2.0, 2 * center_scale),
        h=rng.uniform(0.5, 4.0),
        w=rng.uniform(0.5, 4.0),
        l=rng.uniform(0.5, 8.0),
        psi=rng.uniform(-math.pi, math.pi),
    )


def random_belief(
    rng: np.random.Generator,
    box: BoxParams | None = None,
    b_low: float = 0.01,
    b_high: float = 0.5,
) -> CornerBelief:
    """Belief whose means are a box's corners and whose diversities are
    uniform random in [b_low, b_high]."""
    if box is None:
        box = random_box(rng)
    return CornerBelief(
        mu=corners_from_box(box).corners,
        b=rng.uniform(b_low, b_high, size=(8, 3)),
    )


def angle_difference(a: float, b: float) -> float:
    """Magnitude of the wrapped difference between two angles."""
    return abs(math.remainder(a - b, math.tau))


box_strategy = st.builds(
    BoxParams,
    x=st.floats(-50.0, 50.0),
    y=st.floats(-5.0, 5.0),
    z=st.floats(-50.0, 50.0),
    h=st.floats(0.1, 10.0),
    w=st.floats(0.1, 10.0),
    l=st.floats(0.1, 10.0),
    psi=st.floats(-math.pi, math.pi),
)
