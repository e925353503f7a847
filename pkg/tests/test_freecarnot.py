import itertools
import random
from fractions import Fraction

import pytest
from gmpy2 import mpq
from hypothesis import given, strategies as st

from carnot_tangent._linalg import rank
from carnot_tangent.ccfields import dilate_point
from carnot_tangent.errors import RankError, ShapeError
from carnot_tangent.fixtures import engel, heisenberg
from carnot_tangent.freecarnot import (
    bch,
    build_hall_basis,
    build_psi,
    exp_product,
    free_bracket,
    generation_word,
    generator_field,
    group_action,
    group_dilate,
    lift_structure,
    project_pi,
    projection_rank_at_zero,
    witt_dimension,
)
from carnot_tangent.jets import Jet, jet_compose
from carnot_tangent.nilpotent import approximate

HEIS = approximate(heisenberg()).nilpotent
ENGEL = approximate(engel()).nilpotent
SIZES = [(2, 2), (2, 3), (2, 4), (3, 2), (3, 3)]
seeds = st.integers(0, 10 ** 6)


def random_element(basis, rng, spread=3):
    return basis.element([mpq(rng.randint(-spread, spread), rng.randint(1, 3)) for _ in range(basis.dim)])


# -- independent oracles -------------------------------------------------------------

def lyndon_count(r, k):
    """Number of Lyndon words of length k over r letters, by brute force."""
    def is_lyndon(w):
        return all(w < w[i:] + w[:i] for i in range(1, len(w)))
    return sum(1 for w in itertools.product(range(r), repeat=k) if is_lyndon(w))


def expand(basis, k):
    """Hall element k as a noncommutative polynomial {letters: coefficient}."""
    if basis.left[k] is None:
        return {(k,): Fraction(1)}
    return commutator(expand(basis, basis.left[k]), expand(basis, basis.right[k]), basis.s)


def nc_mul(p, q, s):
    out = {}
    for a, x in p.items():
        for b, y in q.items():
            if len(a) + len(b) <= s:
                out[a + b] = out.get(a + b, 0) + x * y
    return {w: c for w, c in out.items() if c}


def nc_add(p, q, scale=1):
    out = dict(p)
    for w, c in q.items():
        out[w] = out.get(w, 0) + scale * c
    return {w: c for w, c in out.items() if c}


def commutator(p, q, s):
    return nc_add(nc_mul(p, q, s), nc_mul(q, p, s), -1)


def element_polynomial(A):
    out = {}
    for k, c in enumerate(A.coef):
        if c:
            out = nc_add(out, expand(A.basis, k), Fraction(int(c.numerator), int(c.denominator)))
    return out


def nc_exp(p, s):
    out, term = {(): Fraction(1)}, {(): Fraction(1)}
    for k in range(1, s + 1):
        term = {w: c / k for w, c in nc_mul(term, p, s).items()}
        out = nc_add(out, term)
    return out


def nc_log(p, s):
    # log(1 + q) with q = p - 1
    q = nc_add(p, {(): Fraction(1)}, -1)
    out, power = {}, {(): Fraction(1)}
    for k in range(1, s + 1):
        power = nc_mul(power, q, s)
        out = nc_add(out, power, Fraction((-1) ** (k + 1), k))
    return out


# -- Hall basis ----------------------------------------------------------------------

@pytest.mark.parametrize("r,s", SIZES)
def test_layers_match_necklace_count(r, s):
    basis = build_hall_basis(r, s)
    assert basis.layer_dims == tuple(lyndon_count(r, k) for k in range(1, s + 1))
    assert basis.layer_dims == tuple(witt_dimension(r, k) for k in range(1, s + 1))


def test_dimension_examples():
    assert (build_hall_basis(2, 2).dim, build_hall_basis(2, 2).layer_dims) == (3, (2, 1))
    assert (build_hall_basis(2, 3).dim, build_hall_basis(2, 3).layer_dims) == (5, (2, 1, 2))
    assert (build_hall_basis(3, 2).dim, build_hall_basis(3, 2).layer_dims) == (6, (3, 3))


def test_rank_below_two_rejected():
    with pytest.raises(RankError):
        build_hall_basis(1, 3)


@pytest.mark.parametrize("r,s", SIZES)
def test_hall_elements_are_independent(r, s):
    basis = build_hall_basis(r, s)
    polys = [expand(basis, k) for k in range(basis.dim)]
    words = sorted({w for p in polys for w in p})
    assert rank([[p.get(w, 0) for w in words] for p in polys]) == basis.dim


@pytest.mark.parametrize("r,s", SIZES)
def test_structure_constants_match_commutators(r, s):
    basis = build_hall_basis(r, s)
    for i in range(basis.dim):
        for j in range(basis.dim):
            want = commutator(expand(basis, i), expand(basis, j), s)
            got = {}
            for k, c in basis.bracket_basis(i, j).items():
                got = nc_add(got, expand(basis, k), Fraction(int(c.numerator), int(c.denominator)))
            assert got == want


def test_word_names():
    basis = build_hall_basis(2, 3)
    assert [basis.word(k) for k in range(basis.dim)] == ["1", "2", "[1,2]", "[1,[1,2]]", "[2,[1,2]]"]
    assert basis.index("[1, [1,2]]") == 3


# -- bracket -------------------------------------------------------------------------

def test_bracket_examples():
    basis = build_hall_basis(2, 2)
    W1, W2 = basis.generator(0), basis.generator(1)
    assert not free_bracket(W1 + W2, W1 + W2)
    assert free_bracket(W1, W2) == basis.generator(2)
    with pytest.raises(ShapeError):
        free_bracket(W1, build_hall_basis(2, 3).generator(0))


@given(seeds)
def test_bracket_jacobi(seed):
    rng = random.Random(seed)
    basis = build_hall_basis(3, 3)
    A, B, C = (random_element(basis, rng) for _ in range(3))
    total = (free_bracket(A, free_bracket(B, C)) + free_bracket(B, free_bracket(C, A))
             + free_bracket(C, free_bracket(A, B)))
    assert not total


# -- BCH -----------------------------------------------------------------------------

def test_bch_examples():
    basis = build_hall_basis(2, 2)
    W1, W2 = basis.generator(0), basis.generator(1)
    assert bch(W1, W2) == basis.element([1, 1, mpq(1, 2)])
    b3 = build_hall_basis(2, 3)
    P = bch(b3.generator(0), b3.generator(1))
    assert P.coef[b3.index("[1,[1,2]]")] == mpq(1, 12)
    assert P.coef[b3.index("[2,[1,2]]")] == mpq(-1, 12)


@given(seeds, st.sampled_from(SIZES))
def test_bch_identities(seed, size):
    rng = random.Random(seed)
    basis = build_hall_basis(*size)
    A = random_element(basis, rng)
    assert bch(A, basis.zero()) == A
    assert bch(basis.zero(), A) == A
    assert not bch(A, -A)
    assert not bch(-A, A)


@given(seeds, st.sampled_from([(2, 2), (2, 3), (2, 4), (3, 2), (3, 3)]))
def test_bch_matches_truncated_log_of_exponentials(seed, size):
    rng = random.Random(seed)
    basis = build_hall_basis(*size)
    A, B = random_element(basis, rng), random_element(basis, rng)
    s = basis.s
    want = nc_log(nc_mul(nc_exp(element_polynomial(A), s), nc_exp(element_polynomial(B), s), s), s)
    assert element_polynomial(bch(A, B)) == want


@given(seeds, st.sampled_from([(2, 3), (2, 4), (3, 3)]))
def test_bch_is_associative(seed, size):
    rng = random.Random(seed)
    basis = build_hall_basis(*size)
    A, B, C = (random_element(basis, rng) for _ in range(3))
    assert bch(bch(A, B), C) == bch(A, bch(B, C))


# -- dilations and generator fields ----------------------------------------------------

def test_dilate_examples():
    basis = build_hall_basis(2, 2)
    f = basis.element([1, 0, 1])
    assert group_dilate(f, 1) == f
    assert group_dilate(f, 2) == basis.element([2, 0, 4])
    with pytest.raises(ValueError):
        group_dilate(f, 0)


@given(seeds, st.builds(mpq, st.integers(1, 9), st.integers(1, 9)))
def test_dilation_is_automorphism(seed, lam):
    rng = random.Random(seed)
    basis = build_hall_basis(2, 4)
    A, B = random_element(basis, rng), random_element(basis, rng)
    assert group_dilate(bch(A, B), lam) == bch(group_dilate(A, lam), group_dilate(B, lam))


def test_generator_field_examples():
    basis = build_hall_basis(2, 2)
    assert generator_field(0, basis.zero()) == basis.generator(0)
    a, b = mpq(3, 5), mpq(-7, 2)
    v = generator_field(0, basis.element([a, b, 11]))
    assert v == basis.element([1, 0, -b / 2])
    w = generator_field(1, basis.element([a, b, 11]))
    assert w == basis.element([0, 1, a / 2])


def test_generator_field_is_derivative_of_bch():
    # oracle: difference quotient of bch(A, t W_i) is exact once the t^2 terms are removed
    rng = random.Random(3)
    basis = build_hall_basis(2, 3)
    A = random_element(basis, rng)
    for i in range(2):
        t = Jet.var(0, 1, None, 1)
        at = basis.element([t * 0 + c for c in A.coef])
        moved = bch(at, basis.generator(i, t))
        slope = basis.element([c.coefficient((1,)) for c in moved.coef])
        assert slope == generator_field(i, A)


# -- lifting, action and projection ---------------------------------------------------

def test_psi_examples():
    L2 = lift_structure(HEIS)
    assert L2.psi_images[:2] == HEIS.fields_inf
    d3 = L2.psi_images[2]
    assert d3.at_zero() == (0, 0, 1) and d3.degree() == 0
    L3 = build_psi(build_hall_basis(2, 3), HEIS)
    assert not L3.psi_images[3] and not L3.psi_images[4]


def test_psi_rejects_mismatched_rank():
    with pytest.raises(ShapeError):
        build_psi(build_hall_basis(3, 2), HEIS)
    with pytest.raises(ShapeError):
        build_psi(build_hall_basis(2, 2), ENGEL)


def test_action_examples():
    L = lift_structure(HEIS)
    basis = L.basis
    x = (mpq(1, 3), 2, -1)
    assert group_action(x, basis.zero(), L) == x
    assert project_pi(basis.zero(), L) == (0, 0, 0)
    assert project_pi(basis.generator(0), L) == (1, 0, 0)
    W1, W2 = basis.generator(0), basis.generator(1)
    assert project_pi(bch(W1, W2), L) == (1, 1, mpq(1, 2))
    assert group_action(project_pi(W1, L), W2, L) == (1, 1, mpq(1, 2))


def test_heisenberg_projection_is_exponential_coordinates():
    L = lift_structure(HEIS)
    a, b, c = mpq(2, 3), mpq(-5, 4), mpq(7, 2)
    assert project_pi(L.basis.element([a, b, c]), L) == (a, b, c)


def test_engel_projection_rank():
    L = lift_structure(ENGEL)
    assert L.basis.dim == 5
    assert projection_rank_at_zero(L) == 4


@given(seeds)
def test_action_property(seed):
    rng = random.Random(seed)
    L = lift_structure(ENGEL)
    f, g = random_element(L.basis, rng), random_element(L.basis, rng)
    x = tuple(mpq(rng.randint(-3, 3), rng.randint(1, 3)) for _ in range(4))
    assert group_action(group_action(x, f, L), g, L) == group_action(x, bch(f, g), L)


@given(seeds, st.builds(mpq, st.integers(1, 9), st.integers(1, 9)))
def test_projection_commutes_with_dilations(seed, lam):
    rng = random.Random(seed)
    for target in (HEIS, ENGEL):
        L = lift_structure(target)
        f = random_element(L.basis, rng)
        assert project_pi(group_dilate(f, lam), L) == dilate_point(project_pi(f, L), lam, target.weights)


@given(seeds, st.builds(mpq, st.integers(1, 9), st.integers(1, 9)))
def test_generator_action_commutes_with_dilations(seed, lam):
    rng = random.Random(seed)
    L = lift_structure(ENGEL)
    w = ENGEL.weights
    x = tuple(mpq(rng.randint(-3, 3), rng.randint(1, 3)) for _ in range(4))
    for i in range(2):
        t = mpq(rng.randint(-3, 3), rng.randint(1, 3))
        moved = group_action(dilate_point(x, lam, w), L.basis.generator(i, lam * t), L)
        assert moved == dilate_point(group_action(x, L.basis.generator(i, t), L), lam, w)


@pytest.mark.parametrize("target", [HEIS, ENGEL], ids=["heisenberg", "engel"])
def test_projection_pushes_generators(target):
    L = lift_structure(target)
    pi = L.projection
    a = L.coordinate_jets()
    b = L.basis
    for i in range(b.r):
        G = generator_field(i, a)
        for j in range(L.n):
            pushed = sum((pi[j].deriv(k) * G.coef[k] for k in range(b.dim)), Jet.zero(b.dim, b.weights, b.s))
            target_comp = target.fields_inf[i].components[j]
            along = jet_compose(target_comp.regrade((1,) * L.n, b.s), list(pi))
            assert pushed == along


def test_projection_map_agrees_with_flow():
    rng = random.Random(11)
    L = lift_structure(ENGEL)
    for _ in range(5):
        f = random_element(L.basis, rng)
        assert tuple(c.evaluate(f.coef) for c in L.projection) == project_pi(f, L)


# -- generation ----------------------------------------------------------------------

@given(seeds, st.sampled_from([(2, 2), (2, 3), (3, 3)]))
def test_generation_word_reproduces_element(seed, size):
    rng = random.Random(seed)
    basis = build_hall_basis(*size)
    f = random_element(basis, rng)
    factors = generation_word(f)
    assert all(i < basis.r for i, _ in factors)
    assert exp_product(factors, basis) == f
