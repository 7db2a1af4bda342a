"""Hypothesis strategies shared by the test modules."""

import numpy as np
from hypothesis import strategies as st

from lintransfer.space import FiniteSpace, Measure


@st.composite
def measures(draw, n, space=None, full_support=False):
    lo = 1 if full_support else 0
    raw = draw(st.lists(st.integers(lo, 20), min_size=n, max_size=n).filter(lambda w: sum(w) > 0))
    w = np.array(raw, dtype=float)
    return Measure(space or FiniteSpace(n), w / w.sum())


def potentials(n, lo=-10.0, hi=10.0):
    return st.lists(st.floats(lo, hi, allow_nan=False), min_size=n, max_size=n).map(np.array)


def int_costs(n, hi=10, allow_inf=False):
    entry = st.integers(0, hi).map(float)
    if allow_inf:
        entry = st.one_of(entry, st.just(np.inf))
    return st.lists(st.lists(entry, min_size=n, max_size=n), min_size=n, max_size=n).map(np.array)
