import random

import pytest
from gmpy2 import mpq
from hypothesis import settings, strategies as st

from carnot_tangent.jets import Jet

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

rationals = st.builds(mpq, st.integers(-6, 6), st.integers(1, 5))


@st.composite
def jets(draw, nvars=2, weights=(1, 1), order=4, max_terms=5, constant=True):
    terms = {}
    for _ in range(draw(st.integers(0, max_terms))):
        e = tuple(draw(st.integers(0, order)) for _ in range(nvars))
        if not constant and not any(e):
            continue
        terms[e] = draw(rationals)
    return Jet(nvars, weights, order, terms)


def random_jet(rng: random.Random, nvars, weights, order, nterms=4, low=0):
    terms = {}
    for _ in range(nterms):
        e = [0] * nvars
        for _ in range(rng.randint(low, order)):
            e[rng.randrange(nvars)] += 1
        terms[tuple(e)] = mpq(rng.randint(-4, 4), rng.randint(1, 3))
    return Jet(nvars, weights, order, terms)


@pytest.fixture
def rng():
    return random.Random(12345)


# -- acceptance reporting ----------------------------------------------------------

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, note = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}  {note}")
