"""Free nilpotent Lie algebras, the truncated BCH group law and the lifting."""

from __future__ import annotations

import math
from collections.abc import Sequence
from functools import cache, cached_property

from gmpy2 import mpq

from . import _linalg
from .ccfields import PolyVectorField, polynomial_bracket
from .errors import ConsistencyError, RankError, ShapeError, StructureError
from .jets import Jet, JetMap, Weights, as_rational, operator_exponential, rational_str

ZERO = mpq(0)


def witt_dimension(r: int, k: int) -> int:
    """Dimension of the degree-``k`` component of the free Lie algebra on ``r`` letters."""
    def mobius(d):
        result, m, p = 1, d, 2
        while p * p <= m:
            if m % p == 0:
                m //= p
                if m % p == 0:
                    return 0
                result = -result
            p += 1
        return -result if m > 1 else result

    return sum(mobius(d) * r ** (k // d) for d in range(1, k + 1) if k % d == 0) // k


class HallBasis:
    """Hall basis of the free nilpotent Lie algebra of rank ``r`` and step ``s``.

    Element ``k`` is either a generator (``k < r``) or the bracket
    ``[left[k], right[k]]`` with ``left[k] < right[k]`` where ``right[k]`` is a
    generator or has ``left[right[k]] <= left[k]``.  Elements are ordered by
    degree and then by creation.
    """

    def __init__(self, r: int, s: int):
        if r < 2:
            raise RankError(f"rank must be at least 2, got {r}")
        if s < 1:
            raise RankError(f"step must be at least 1, got {s}")
        self.r, self.s = r, s
        left: list[int | None] = [None] * r
        right: list[int | None] = [None] * r
        degree = [1] * r
        for d in range(2, s + 1):
            count = len(degree)
            for i in range(count):
                for j in range(i + 1, count):
                    if degree[i] + degree[j] != d:
                        continue
                    if right[j] is not None and left[j] > i:
                        continue
                    left.append(i)
                    right.append(j)
                    degree.append(d)
        self.left = tuple(left)
        self.right = tuple(right)
        self.degree = tuple(degree)
        self.dim = len(degree)
        self._pair = {(l, rr): k for k, (l, rr) in enumerate(zip(left, right)) if l is not None}
        self._bracket_cache: dict = {}

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return tuple(self.degree.count(d) for d in range(1, self.s + 1))

    @property
    def weights(self) -> Weights:
        return Weights(self.degree)

    def word(self, k: int) -> str:
        """Bracket notation of element ``k`` with 1-based generator labels."""
        if self.left[k] is None:
            return str(k + 1)
        return f"[{self.word(self.left[k])},{self.word(self.right[k])}]"

    def letters(self, k: int) -> tuple[int, ...]:
        if self.left[k] is None:
            return (k + 1,)
        return self.letters(self.left[k]) + self.letters(self.right[k])

    def index(self, word: str) -> int:
        for k in range(self.dim):
            if self.word(k) == word.replace(" ", ""):
                return k
        raise KeyError(word)

    def bracket_basis(self, i: int, j: int) -> dict[int, mpq]:
        """``[W_i, W_j]`` expanded in the basis, via Jacobi rewriting."""
        key = (i, j)
        hit = self._bracket_cache.get(key)
        if hit is not None:
            return hit
        if i == j or self.degree[i] + self.degree[j] > self.s:
            out: dict = {}
        elif i > j:
            out = {k: -c for k, c in self.bracket_basis(j, i).items()}
        elif (i, j) in self._pair:
            out = {self._pair[(i, j)]: mpq(1)}
        else:
            # [i, [a, b]] = [[i, a], b] + [a, [i, b]] with a = left[j] > i
            a, b = self.left[j], self.right[j]
            out = {}
            for k, c in self.bracket_basis(i, a).items():
                for m, e in self.bracket_basis(k, b).items():
                    out[m] = out.get(m, ZERO) + c * e
            for k, c in self.bracket_basis(i, b).items():
                for m, e in self.bracket_basis(a, k).items():
                    out[m] = out.get(m, ZERO) + c * e
            out = {k: c for k, c in out.items() if c}
        self._bracket_cache[key] = out
        return out

    @cached_property
    def structure_constants(self) -> dict[tuple[int, int], dict[int, mpq]]:
        return {(i, j): self.bracket_basis(i, j)
                for i in range(self.dim) for j in range(self.dim)
                if self.bracket_basis(i, j)}

    def element(self, coef) -> "FreeLieElement":
        return FreeLieElement(self, coef)

    def zero(self) -> "FreeLieElement":
        return FreeLieElement(self, [0] * self.dim)

    def generator(self, i: int, scale=1) -> "FreeLieElement":
        """``scale * W_i`` for a 0-based index ``i``."""
        coef = [0] * self.dim
        coef[i] = scale
        return FreeLieElement(self, coef)

    def __eq__(self, other):
        return isinstance(other, HallBasis) and (self.r, self.s) == (other.r, other.s)

    def __hash__(self):
        return hash((self.r, self.s))

    def __repr__(self):
        return f"HallBasis(r={self.r}, s={self.s}, dim={self.dim})"


@cache
def build_hall_basis(r: int, s: int) -> HallBasis:
    """Cached :class:`HallBasis` constructor."""
    return HallBasis(r, s)


def _coerce(x):
    if isinstance(x, Jet):
        return x
    return as_rational(x)


class FreeLieElement:
    """Coefficient vector over a Hall basis.

    Coefficients are rationals, or jets when an element depends on symbolic
    parameters.
    """

    __slots__ = ("basis", "coef")

    def __init__(self, basis: HallBasis, coef: Sequence):
        coef = tuple(_coerce(c) for c in coef)
        if len(coef) != basis.dim:
            raise ShapeError(f"{len(coef)} coefficients for a basis of dimension {basis.dim}")
        self.basis = basis
        self.coef = coef

    def _check(self, other):
        if not isinstance(other, FreeLieElement):
            raise TypeError("expected a FreeLieElement")
        if other.basis != self.basis:
            raise ShapeError(f"basis mismatch: {self.basis} vs {other.basis}")

    def __add__(self, other):
        self._check(other)
        return FreeLieElement(self.basis, [a + b for a, b in zip(self.coef, other.coef)])

    def __sub__(self, other):
        self._check(other)
        return FreeLieElement(self.basis, [a - b for a, b in zip(self.coef, other.coef)])

    def __neg__(self):
        return FreeLieElement(self.basis, [-a for a in self.coef])

    def __mul__(self, scalar):
        return FreeLieElement(self.basis, [a * scalar for a in self.coef])

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, FreeLieElement):
            return NotImplemented
        return self.basis == other.basis and self.coef == other.coef

    def __hash__(self):
        return hash((self.basis, self.coef))

    def __bool__(self):
        return any(bool(c) for c in self.coef)

    def layer(self, d: int) -> "FreeLieElement":
        return FreeLieElement(self.basis, [c if self.basis.degree[k] == d else 0 * c
                                           for k, c in enumerate(self.coef)])

    def low_layer(self) -> int | None:
        degs = [self.basis.degree[k] for k, c in enumerate(self.coef) if c]
        return min(degs) if degs else None

    def __repr__(self):
        parts = [f"{rational_str(c) if not isinstance(c, Jet) else '(' + str(c) + ')'}*{self.basis.word(k)}"
                 for k, c in enumerate(self.coef) if c]
        return "FreeLieElement(" + (" + ".join(parts) or "0") + ")"

    def to_strings(self) -> list[str]:
        return [rational_str(c) for c in self.coef]


def free_bracket(A: FreeLieElement, B: FreeLieElement) -> FreeLieElement:
    """Bilinear extension of the Hall structure constants."""
    A._check(B)
    basis = A.basis
    out: list = [None] * basis.dim
    for i, a in enumerate(A.coef):
        if not a:
            continue
        for j, b in enumerate(B.coef):
            if not b:
                continue
            ab = None
            for k, c in basis.bracket_basis(i, j).items():
                ab = a * b if ab is None else ab
                term = ab * c
                out[k] = term if out[k] is None else out[k] + term
    zero = _zero_like(A, B)
    return FreeLieElement(basis, [zero if x is None else x for x in out])


def _zero_like(*elements):
    for e in elements:
        for c in e.coef:
            if isinstance(c, Jet):
                return c.like()
    return ZERO


@cache
def _bch_word_coefficients(s: int) -> dict[tuple[int, ...], mpq]:
    """Coefficient of each right-nested word in letters 0 (=A) and 1 (=B).

    Sums ``(-1)^(p+1)/p / (k_1! l_1! ... k_p! l_p! m)`` over all ways of
    writing the word as ``A^k_1 B^l_1 ... A^k_p B^l_p`` with nonempty blocks.
    """
    out: dict[tuple[int, ...], mpq] = {}

    def run(word, start, letter):
        end = start
        while end < len(word) and word[end] == letter:
            end += 1
        return end - start

    def blocks(word, start):
        # yield (number of blocks, product of 1/(k! l!)) over splittings of word[start:]
        if start == len(word):
            yield 0, mpq(1)
            return
        a_run = run(word, start, 0)
        for k in range(a_run + 1):
            b_max = run(word, start + k, 1) if k == a_run else 0
            for l in range(b_max + 1):
                if k + l == 0:
                    continue
                weight = mpq(1, math.factorial(k) * math.factorial(l))
                for p, w in blocks(word, start + k + l):
                    yield p + 1, w * weight

    for m in range(1, s + 1):
        for bits in range(2 ** m):
            word = tuple((bits >> (m - 1 - t)) & 1 for t in range(m))
            total = ZERO
            for p, w in blocks(word, 0):
                total += mpq((-1) ** (p + 1), p) * w
            total /= m
            if total:
                out[word] = total
    return out


def _word_brackets(A: FreeLieElement, B: FreeLieElement, words) -> FreeLieElement:
    letters = (A, B)
    memo: dict = {}

    def nested(word):
        hit = memo.get(word)
        if hit is not None:
            return hit
        if len(word) == 1:
            val = letters[word[0]]
        else:
            val = free_bracket(letters[word[0]], nested(word[1:]))
        memo[word] = val
        return val

    total = None
    for word, c in words.items():
        term = nested(word) * c
        total = term if total is None else total + term
    return total if total is not None else A * 0


def bch(A: FreeLieElement, B: FreeLieElement) -> FreeLieElement:
    """Truncated Baker-Campbell-Hausdorff product ``log(exp A exp B)``."""
    A._check(B)
    return _word_brackets(A, B, _bch_word_coefficients(A.basis.s))


def group_inverse(A: FreeLieElement) -> FreeLieElement:
    return -A


def group_dilate(f: FreeLieElement, lam) -> FreeLieElement:
    """Scale the layer-``k`` coefficients by ``lam^k``."""
    if lam <= 0:
        raise ValueError("dilation factor must be positive")
    lam = as_rational(lam)
    return FreeLieElement(f.basis, [c * lam ** f.basis.degree[k] for k, c in enumerate(f.coef)])


def generator_field(i: int, at: FreeLieElement) -> FreeLieElement:
    """Velocity of ``t -> at * exp(t W_i)`` at ``t = 0`` (0-based ``i``)."""
    basis = at.basis
    if not 0 <= i < basis.r:
        raise IndexError(f"generator index {i} out of range")
    linear = {w: c for w, c in _bch_word_coefficients(basis.s).items() if sum(w) == 1}
    W = basis.generator(i)
    if any(isinstance(c, Jet) for c in at.coef):
        zero = _zero_like(at)
        W = FreeLieElement(basis, [zero + c for c in W.coef])
    return _word_brackets(at, W, linear)


class LiftedStructure:
    """The homomorphism from the free algebra onto the approximation's fields."""

    def __init__(self, basis: HallBasis, target, psi_images: Sequence[PolyVectorField]):
        self.basis = basis
        self.target = target
        self.psi_images = tuple(psi_images)

    @property
    def n(self) -> int:
        return self.target.n

    def psi(self, A: FreeLieElement) -> PolyVectorField:
        total = None
        for c, V in zip(A.coef, self.psi_images):
            if c:
                term = V * c
                total = term if total is None else total + term
        return total if total is not None else self.psi_images[0] * 0

    @cached_property
    def projection(self) -> JetMap:
        """``pi(a) = exp(sum_k a_k psi(W_k))(0)`` as a polynomial map of the coordinates ``a``."""
        n = self.n
        ones = Weights.ones(n)
        return JetMap(
            operator_exponential(self.psi_images, Jet.var(j, n, ones, 1),
                                 self.basis.weights, self.basis.s)
            for j in range(n))

    def coordinate_jets(self) -> FreeLieElement:
        """The element ``sum_k a_k W_k`` with the coordinates ``a_k`` as jets."""
        b = self.basis
        return FreeLieElement(b, [Jet.var(k, b.dim, b.weights, b.s) for k in range(b.dim)])


def build_psi(basis: HallBasis, target) -> LiftedStructure:
    """Send ``W_i`` to ``Y_i^inf`` and each Hall bracket to the matching field bracket."""
    if target.r != basis.r:
        raise ShapeError(f"target has {target.r} fields, basis has rank {basis.r}")
    if target.step > basis.s:
        raise ShapeError(f"target step {target.step} exceeds the basis step {basis.s}")
    images: list[PolyVectorField] = list(target.fields_inf)
    for k in range(basis.r, basis.dim):
        images.append(polynomial_bracket(images[basis.left[k]], images[basis.right[k]]))
    L = LiftedStructure(basis, target, images)
    for i in range(basis.dim):
        for j in range(i + 1, basis.dim):
            lhs = polynomial_bracket(images[i], images[j])
            rhs = L.psi(FreeLieElement(basis, _unit_combo(basis, basis.bracket_basis(i, j))))
            top = max(lhs.order, rhs.order)
            if lhs.with_order(top) != rhs.with_order(top):
                raise ConsistencyError(
                    f"bracket of {basis.word(i)} and {basis.word(j)} is not preserved")
    return L


def _unit_combo(basis, sparse):
    coef = [0] * basis.dim
    for k, c in sparse.items():
        coef[k] = c
    return coef


def _flow(V: PolyVectorField, x: Sequence, rounds: int):
    """Exact time-1 flow of a polynomial field with triangular structure."""
    deg_bound = max(1, rounds) * (max((V.degree() or 0), 1) + 1)
    tjet = lambda c: Jet.const(c, 1, None, deg_bound)
    start = [tjet(as_rational(xi)) for xi in x]
    X = list(start)
    for _ in range(rounds + 2):
        vel = [comp.evaluate(X) if comp else tjet(0) for comp in V.components]
        vel = [v if isinstance(v, Jet) else tjet(v) for v in vel]
        nxt = [s0 + _integrate(v) for s0, v in zip(start, vel)]
        if nxt == X:
            if any((c.degree() or 0) >= deg_bound for c in X):
                break
            return [sum(c.terms.values(), ZERO) for c in X]
        X = nxt
    raise StructureError("flow did not become polynomial within the expected number of rounds")


def _integrate(p: Jet) -> Jet:
    """Antiderivative in one variable vanishing at 0 (order is kept)."""
    return p.like({(e[0] + 1,): c / (e[0] + 1) for e, c in p.terms.items()})


def group_action(x: Sequence, f: FreeLieElement, L: LiftedStructure) -> tuple:
    """Right action ``x . exp(A) = exp(psi(A))(x)`` by exact Picard iteration."""
    if len(x) != L.n:
        raise ShapeError(f"point has {len(x)} coordinates, expected {L.n}")
    if not f:
        return tuple(as_rational(xi) for xi in x)
    V = L.psi(f)
    return tuple(_flow(V, x, L.basis.s))


def project_pi(f: FreeLieElement, L: LiftedStructure) -> tuple:
    """``pi(f) = 0 . f``."""
    return group_action([0] * L.n, f, L)


def projection_rank_at_zero(L: LiftedStructure) -> int:
    """Rank of the differential of the projection at the identity."""
    pi = L.projection
    dim = L.basis.dim
    rows = [[pi[j].deriv(k).constant_term() for k in range(dim)] for j in range(L.n)]
    return _linalg.rank(rows)


def lift_structure(target, s: int | None = None) -> LiftedStructure:
    """Hall basis of matching rank and step with its homomorphism onto ``target``."""
    basis = build_hall_basis(target.r, s or target.step)
    return build_psi(basis, target)


# -- generation by layer-one exponentials ---------------------------------------

def exp_product(factors: Sequence[tuple[int, object]], basis: HallBasis) -> FreeLieElement:
    """``exp(t_1 W_i1) ... exp(t_m W_im)`` for factors ``(i, t)`` (0-based ``i``)."""
    out = basis.zero()
    for i, t in factors:
        out = bch(out, basis.generator(i, t))
    return out


def _commutator_word(basis: HallBasis, k: int, c) -> list[tuple[int, object]]:
    """Layer-one factors whose product is ``exp(c W_k + higher layers)``."""
    if basis.left[k] is None:
        return [(k, c)]
    g = _commutator_word(basis, basis.left[k], c)
    h = _commutator_word(basis, basis.right[k], 1)
    inv = lambda fs: [(i, -t) for i, t in reversed(fs)]
    return g + h + inv(g) + inv(h)


def generation_word(f: FreeLieElement) -> list[tuple[int, mpq]]:
    """Write ``f`` as a product of exponentials of generators.

    Layer by layer, each Hall element's coefficient is removed by a nested
    group commutator; the returned factors multiply back to ``f`` exactly.
    """
    basis = f.basis
    residual = f
    factors: list[tuple[int, mpq]] = []
    for d in range(1, basis.s + 1):
        for k in range(basis.dim):
            if basis.degree[k] != d:
                continue
            c = residual.coef[k]
            if not c:
                continue
            word = _commutator_word(basis, k, c)
            g = exp_product(word, basis)
            residual = bch(-g, residual)
            factors.extend(word)
        for k in range(basis.dim):
            if basis.degree[k] == d and residual.coef[k]:
                raise ConsistencyError(f"layer {d} was not cleared")
    if residual:
        raise ConsistencyError("generation did not reach the target")
    return [(i, as_rational(t)) for i, t in factors]
