import pytest
from gmpy2 import mpq
from hypothesis import given, strategies as st

from carnot_tangent.ccfields import CCStructure, PolyVectorField, pushforward_dilation_powers, words_up_to
from carnot_tangent.errors import DecompositionError, JetOrderError
from carnot_tangent.fixtures import abelian, corpus, engel, heisenberg, heisenberg_polarized
from carnot_tangent.jets import Jet, JetMap, jet_compose
from carnot_tangent.nilpotent import (
    approximate,
    build_exponential_chart,
    decompose_principal_parts,
    rescale_powers,
    rescale_structure,
    to_exponential_coordinates,
)

CORPUS = corpus()


def field(n, weights, order, terms):
    return PolyVectorField.from_terms(n, terms, weights, order)


def symmetric_heisenberg(weights=(1, 1, 2), order=4):
    z = (0, 0, 0)
    return [field(3, weights, order, {0: {z: 1}, 2: {(0, 1, 0): "-1/2"}}),
            field(3, weights, order, {1: {z: 1}, 2: {(1, 0, 0): "1/2"}})]


# -- chart ----------------------------------------------------------------------

def test_polarized_chart_and_inverse():
    chart = build_exponential_chart(heisenberg_polarized())
    w = (1, 1, 2)
    x1, x2, x3 = (Jet.var(k, 3, w, 4) for k in range(3))
    assert chart.phi == JetMap([x1, x2, x3 + x1 * x2 / 2])
    ones = (1, 1, 1)
    y1, y2, y3 = (Jet.var(k, 3, ones, 4) for k in range(3))
    assert chart.phi_inv == JetMap([y1, y2, y3 - y1 * y2 / 2])


@pytest.mark.parametrize("X", [heisenberg(), abelian()])
def test_chart_is_identity_for_exponential_input(X):
    assert build_exponential_chart(X).is_identity()


def test_polarized_becomes_symmetric():
    Xexp = to_exponential_coordinates(heisenberg_polarized())
    assert list(Xexp.fields) == symmetric_heisenberg()


@pytest.mark.parametrize("X", [heisenberg(), abelian()])
def test_exponential_input_is_fixed(X):
    Xexp = to_exponential_coordinates(X)
    w = Xexp.frame.weights
    assert list(Xexp.fields) == [f.regrade(w, Xexp.order) for f in X.fields]


def test_engel_exponential_fields():
    Xexp = to_exponential_coordinates(engel())
    w = (1, 1, 2, 3)
    z = (0, 0, 0, 0)
    Y1 = field(4, w, 6, {0: {z: 1}, 2: {(0, 1, 0, 0): "-1/2"},
                         3: {(0, 0, 1, 0): "-1/2", (1, 1, 0, 0): "-1/12"}})
    Y2 = field(4, w, 6, {1: {z: 1}, 2: {(1, 0, 0, 0): "1/2"}, 3: {(2, 0, 0, 0): "1/12"}})
    assert list(Xexp.fields) == [Y1, Y2]


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_pushforward_solves_the_chart_equation(name):
    # independent of how the pushforward is computed: D(phi) Z = X o phi.
    # Differentiating phi costs one order, so phi is taken one order higher;
    # the inputs are polynomials, hence exact at any order.
    X = CORPUS[name]
    A = approximate(X)
    n, w, N = X.n, A.frame.weights, A.chart.order
    exact = CCStructure([f.with_order(N + 1) for f in X.fields])
    phi = build_exponential_chart(exact, A.frame, N + 1).phi
    Z = [f.with_order(N + 1) for f in A.exponential.fields]
    for i in range(X.r):
        for j in range(n):
            lhs = sum((phi[j].deriv(k) * Z[i].components[k] for k in range(n)), Jet.zero(n, w, N + 1))
            rhs = jet_compose(exact.fields[i].components[j], phi)
            assert lhs.truncated(N) == rhs.truncated(N)


def test_chart_needs_enough_input_order():
    with pytest.raises(JetOrderError) as err:
        build_exponential_chart(heisenberg(order=2))
    assert err.value.required == 4


def test_order_below_step_rejected():
    with pytest.raises(ValueError):
        build_exponential_chart(engel(), order=2)


# -- decomposition ------------------------------------------------------------------

def test_decompose_symmetric_heisenberg():
    D = approximate(heisenberg()).decomposition
    w = (1, 1, 2)
    assert D.p[0][2] == Jet(3, w, 4, {(0, 1, 0): mpq(-1, 2)})
    assert D.p[1][2] == Jet(3, w, 4, {(1, 0, 0): mpq(1, 2)})
    assert D.p[0][0] == 1 + Jet.zero(3, w, 4)
    assert not any(r for row in D.rjet for r in row)


def test_decompose_abelian():
    D = approximate(abelian(3)).decomposition
    for i, row in enumerate(D.p):
        assert [p.constant_term() for p in row] == [int(i == j) for j in range(3)]
        assert all(p.degree() in (None, 0) for p in row)
    assert not any(r for row in D.rjet for r in row)


def test_decompose_engel_has_no_remainder():
    D = approximate(engel()).decomposition
    assert not any(r for row in D.rjet for r in row)
    assert D.p[0][3] == Jet(4, (1, 1, 2, 3), 6, {(0, 0, 1, 0): mpq(-1, 2), (1, 1, 0, 0): mpq(-1, 12)})


def test_decompose_rejects_low_degree_remainder():
    A = approximate(engel())
    Y1, Y2 = A.exponential.fields
    bad = Y1 + field(4, Y1.weights, Y1.order, {3: {(1, 0, 0, 0): 1}})
    with pytest.raises(DecompositionError) as err:
        decompose_principal_parts(CCStructure([bad, Y2]), A.frame)
    assert err.value.clause == "iv"
    assert str(err.value).startswith("clause (iv)")


def test_decompose_rejects_non_exponential_values_at_zero():
    A = approximate(heisenberg())
    Y1, Y2 = A.exponential.fields
    bad = Y1 + field(3, Y1.weights, Y1.order, {2: {(0, 0, 0): 1}})
    with pytest.raises(DecompositionError) as err:
        decompose_principal_parts(CCStructure([bad, Y2]), A.frame)
    assert err.value.clause == "pre"


# -- approximation -----------------------------------------------------------------

def test_heisenberg_is_its_own_approximation():
    N = approximate(heisenberg()).nilpotent
    assert list(N.fields_inf) == symmetric_heisenberg()


def test_abelian_approximation_is_coordinate_frame():
    N = approximate(abelian()).nilpotent
    assert list(N.fields_inf) == [PolyVectorField.coordinate(k, 2, (1, 1), 2) for k in range(2)]


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_approximation_properties(name):
    A = approximate(CORPUS[name])
    N = A.nilpotent
    for J in words_up_to(N.r, N.step + 1):
        if len(J) == N.step + 1:
            assert not N.bracket(J)
    det = N.frame_determinant()
    assert det.degree() == 0 and det.constant_term() != 0
    for Y in N.fields_inf:
        assert pushforward_dilation_powers(Y) == {1: Y}
    assert build_exponential_chart(N.structure, N.frame, A.chart.order).is_identity()


@pytest.mark.parametrize("name", ["heisenberg_perturbed_0", "engel_perturbed_1"])
def test_approximation_is_idempotent(name):
    A = approximate(CORPUS[name])
    again = approximate(A.nilpotent.structure, order=A.chart.order)
    assert again.nilpotent == A.nilpotent


# -- rescaling ---------------------------------------------------------------------

def test_rescale_by_hand():
    z = (0, 0, 0)
    w = (1, 1, 2)
    Y1 = field(3, w, 4, {0: {z: 1}, 1: {(2, 0, 0): 1}, 2: {(0, 1, 0): "-1/2"}})
    Y2 = symmetric_heisenberg()[1]
    D = decompose_principal_parts(CCStructure([Y1, Y2]))
    R1, R2 = rescale_structure(D, 2)
    # x1^2 in slot 2 scales by 2^(1 - 1 - 2)
    assert R1 == field(3, w, 4, {0: {z: 1}, 1: {(2, 0, 0): "1/4"}, 2: {(0, 1, 0): "-1/2"}})
    assert R2 == Y2
    assert rescale_structure(D, 1) == [Y1, Y2]


@given(st.builds(mpq, st.integers(1, 20), st.integers(1, 20)))
def test_homogeneous_structure_is_scale_invariant(lam):
    D = approximate(heisenberg()).decomposition
    assert rescale_structure(D, lam) == list(D.base.fields)


@pytest.mark.parametrize("name", ["heisenberg_perturbed_2", "engel_perturbed_3"])
def test_rescaled_fields_split_into_limit_and_decaying_part(name):
    A = approximate(CORPUS[name])
    for powers, Yinf in zip(rescale_powers(A.decomposition), A.nilpotent.fields_inf):
        assert max(powers) <= 0
        assert powers.get(0) == Yinf


def test_rescale_rejects_nonpositive():
    D = approximate(heisenberg()).decomposition
    with pytest.raises(ValueError):
        rescale_structure(D, 0)


def test_json_shape():
    data = approximate(engel()).to_json()
    assert sorted(data) == ["chart", "frame", "nilpotent_fields", "p", "r"]
    assert data["frame"]["words"] == [[1], [2], [1, 2], [1, 1, 2]]
