import random

import pytest
from gmpy2 import mpq
from hypothesis import given, strategies as st

from carnot_tangent.ccfields import (
    CCStructure,
    PolyVectorField,
    anorm,
    dilate_point,
    evaluate_word,
    frame_fields,
    lie_bracket,
    polynomial_bracket,
    pushforward_dilation,
    pushforward_dilation_powers,
    select_adapted_frame,
)
from carnot_tangent.errors import HormanderError, JetOrderError, ShapeError
from carnot_tangent.fixtures import abelian, engel, heisenberg
from carnot_tangent.nilpotent import approximate

from conftest import random_jet

positive = st.builds(mpq, st.integers(1, 9), st.integers(1, 9))


def d(k, n, order=4, weights=None):
    return PolyVectorField.coordinate(k, n, weights, order)


def random_field(rng, n=3, order=6, max_degree=2):
    return PolyVectorField([random_jet(rng, n, (1,) * n, order, nterms=3).truncated(max_degree).with_order(order)
                            for _ in range(n)])


# -- brackets ---------------------------------------------------------------------

def test_heisenberg_bracket_is_d3():
    Y1, Y2 = heisenberg().fields
    assert lie_bracket(Y1, Y2) == d(2, 3)


def test_self_bracket_vanishes():
    Y1 = heisenberg().fields[0]
    assert not lie_bracket(Y1, Y1)


def test_textbook_bracket():
    x1_d2 = PolyVectorField.from_terms(2, {1: {(1, 0): 1}}, order=3)
    assert lie_bracket(d(0, 2, 3), x1_d2) == d(1, 2, 3)


def test_bracket_above_order_is_reported():
    V = PolyVectorField.from_terms(2, {1: {(2, 0): 1}}, order=2)
    W = PolyVectorField.from_terms(2, {0: {(0, 2): 1}}, order=2)
    with pytest.raises(JetOrderError) as err:
        lie_bracket(V, W)
    assert err.value.required == 3
    assert lie_bracket(V, W, truncate=True) == PolyVectorField.zero(2, order=2)
    exact = polynomial_bracket(V, W)
    assert exact.components[0].coefficient((2, 1)) == 2
    assert exact.components[1].coefficient((1, 2)) == -2


def test_bracket_shape_mismatch():
    with pytest.raises(ShapeError):
        lie_bracket(d(0, 2), d(0, 3))


@given(st.integers(0, 10 ** 6))
def test_antisymmetry_and_jacobi(seed):
    rng = random.Random(seed)
    U, V, W = (random_field(rng) for _ in range(3))
    assert lie_bracket(U, V) == -lie_bracket(V, U)
    jacobi = (lie_bracket(U, lie_bracket(V, W)) + lie_bracket(V, lie_bracket(W, U))
              + lie_bracket(W, lie_bracket(U, V)))
    assert not jacobi


# -- words and frames -------------------------------------------------------------

def test_evaluate_word_examples():
    X = heisenberg()
    assert evaluate_word(X, (2,)) == X.fields[1]
    assert evaluate_word(X, (1, 2)) == d(2, 3)
    assert not evaluate_word(X, (1, 1, 2))
    with pytest.raises(ValueError):
        evaluate_word(X, (3,))
    with pytest.raises(ValueError):
        evaluate_word(X, (0, 1))


def test_frame_heisenberg():
    F = select_adapted_frame(heisenberg(), 3)
    assert F.words == ((1,), (2,), (1, 2))
    assert F.weights == (1, 1, 2)
    assert F.layer_dims == (2, 3)


def test_frame_engel():
    F = select_adapted_frame(engel(), 4)
    assert F.words == ((1,), (2,), (1, 2), (1, 1, 2))
    assert F.weights == (1, 1, 2, 3)
    assert F.step == 3


def test_frame_abelian():
    F = select_adapted_frame(abelian(), 1)
    assert F.words == ((1,), (2,))
    assert F.weights == (1, 1)


@pytest.mark.parametrize("X", [heisenberg(), engel(), abelian(3)])
def test_frame_invariants(X):
    F = select_adapted_frame(X, X.n)
    assert F.layer_dims[0] == X.r
    assert list(F.weights) == sorted(F.weights)
    Y = frame_fields(X, F)
    assert [tuple(y.at_zero()) for y in Y] == [tuple(row) for row in F.basis_at_zero]
    assert select_adapted_frame(X, X.n) == F


def test_hormander_failure_reports_dimension():
    # d1, d2 in R^3 never reach the third direction
    X = CCStructure([d(0, 3), d(1, 3)])
    with pytest.raises(HormanderError) as err:
        select_adapted_frame(X, 4)
    assert err.value.achieved_dim == 2
    with pytest.raises(HormanderError):
        select_adapted_frame(engel(), 2)


def test_structure_json_round_trip():
    X = engel()
    assert CCStructure.from_json(X.to_json()) == X


def test_structure_rejects_dependent_fields():
    with pytest.raises(ValueError):
        CCStructure([d(0, 2), d(0, 2)])


# -- dilations -------------------------------------------------------------------

def test_dilate_point_examples():
    w = (1, 1, 2)
    assert dilate_point((3, 4, 5), 1, w) == (3, 4, 5)
    assert dilate_point((1, 1, 1), 2, w) == (2, 2, 4)
    assert dilate_point((1, 1, 1), -2, w) == (-2, -2, 4)
    with pytest.raises(ValueError):
        dilate_point((1, 1, 1), 0, w)


@given(st.tuples(positive, positive, positive), positive, positive)
def test_dilation_group_law(x, lam, mu):
    w = (1, 1, 2)
    assert dilate_point(dilate_point(x, mu, w), lam, w) == dilate_point(x, lam * mu, w)


def test_pushforward_examples():
    Yinf = approximate(heisenberg()).nilpotent.fields_inf
    for Y in Yinf:
        assert pushforward_dilation(Y, 5) == Y * 5
        assert pushforward_dilation_powers(Y) == {1: Y}
        assert pushforward_dilation(Y, 1) == Y
    w = (1, 1, 2)
    assert pushforward_dilation(d(2, 3, weights=w), mpq(3, 2)) == d(2, 3, weights=w) * mpq(9, 4)
    with pytest.raises(ValueError):
        pushforward_dilation(d(0, 3, weights=w), 0)


@given(positive, positive, st.integers(0, 10 ** 6))
def test_pushforward_is_group_action(lam, mu, seed):
    rng = random.Random(seed)
    w = (1, 1, 2)
    V = PolyVectorField([random_jet(rng, 3, w, 4, nterms=3) for _ in range(3)])
    twice = pushforward_dilation(pushforward_dilation(V, mu), lam)
    assert twice == pushforward_dilation(V, lam * mu)


def test_anorm_examples():
    w = (1, 1, 2)
    assert anorm((0, 0, 0), w) == 0
    assert anorm((1, 1, 1), w) == 3


@given(st.tuples(*[st.floats(-10, 10)] * 3), st.floats(0.01, 100))
def test_anorm_is_homogeneous(x, lam):
    w = (1, 1, 2)
    assert anorm(dilate_point(x, lam, w), w) == pytest.approx(lam * anorm(x, w), rel=1e-9, abs=1e-12)


def test_polynomial_bracket_aligns_orders():
    Y1, Y2 = heisenberg().fields
    assert polynomial_bracket(Y1.with_order(6), Y2) == d(2, 3, order=6)
