"""Exact truncated multivariate power series with weighted truncation.

A :class:`Jet` is a polynomial in ``nvars`` variables with exact rational
coefficients, where monomials whose weighted degree
``sum(alpha[l] * weights[l])`` exceeds ``order`` are discarded.  Values are
immutable; all operations return new jets.

Coefficients are ``gmpy2.mpq`` rationals.  Anything accepted by ``mpq``
(``int``, ``Fraction``, ``"p/q"`` strings) can be used as input.
"""

from __future__ import annotations

import math
import operator
from collections.abc import Iterable, Mapping, Sequence
from types import MappingProxyType

from gmpy2 import mpq

from .errors import (
    JetDegreeError,
    JetDomainError,
    JetOrderError,
    ShapeError,
    UnsupportedError,
)

Exponent = tuple[int, ...]

ZERO = mpq(0)
ONE = mpq(1)


def as_rational(value) -> mpq:
    """Convert ``value`` to an exact rational; floats are rejected."""
    if isinstance(value, float):
        raise TypeError(f"floats are not accepted in exact arithmetic: {value!r}")
    if isinstance(value, str):
        return mpq(value.strip())
    return mpq(value)


def rational_str(q) -> str:
    """Serialise a rational as ``"p/q"`` (or ``"p"`` for integers)."""
    q = mpq(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


class Weights(tuple):
    """Positive integer weights of the coordinates, nondecreasing, starting at 1."""

    def __new__(cls, weights: Iterable[int]):
        w = tuple(int(x) for x in weights)
        if not w:
            raise ValueError("weights must be nonempty")
        if w[0] != 1:
            raise ValueError(f"first weight must be 1, got {w}")
        if any(b < a for a, b in zip(w, w[1:])):
            raise ValueError(f"weights must be nondecreasing, got {w}")
        return super().__new__(cls, w)

    @classmethod
    def ones(cls, n: int) -> "Weights":
        return cls((1,) * n)

    def degree(self, alpha: Exponent) -> int:
        return sum(map(operator.mul, alpha, self))

    def __repr__(self):
        return f"Weights({tuple(self)})"


# -- raw polynomial helpers (dict exponent -> coefficient) -------------------

def _wdeg(alpha: Exponent, weights: Sequence[int]) -> int:
    return sum(map(operator.mul, alpha, weights))


def _add_into(acc: dict, terms: Mapping, scale=ONE) -> None:
    for e, c in terms.items():
        v = acc.get(e, ZERO) + c * scale
        if v:
            acc[e] = v
        else:
            acc.pop(e, None)


def _mul_sorted(a_sorted, b_sorted, order) -> dict:
    """Multiply term lists sorted by weighted degree, dropping degree > order."""
    out: dict = {}
    if not a_sorted or not b_sorted:
        return out
    bmin = b_sorted[0][0]
    add = operator.add
    for da, ea, ca in a_sorted:
        if order is not None and da + bmin > order:
            break
        for db, eb, cb in b_sorted:
            if order is not None and da + db > order:
                break
            e = tuple(map(add, ea, eb))
            v = out.get(e, ZERO) + ca * cb
            if v:
                out[e] = v
            else:
                del out[e]
    return out


class Jet:
    """Truncated power series with rational coefficients.

    Parameters
    ----------
    nvars : int
        Number of variables.
    weights : sequence of int
        Weight of each variable (see :class:`Weights`).
    order : int
        Truncation order; monomials of weighted degree above it are dropped.
    terms : mapping, optional
        Exponent tuple -> coefficient.
    """

    __slots__ = ("nvars", "weights", "order", "_terms", "_sorted", "_hash")

    def __init__(self, nvars: int, weights, order: int, terms: Mapping | None = None):
        weights = weights if isinstance(weights, Weights) else Weights(weights)
        if len(weights) != nvars:
            raise ShapeError(f"{len(weights)} weights for {nvars} variables")
        if order < 0:
            raise ValueError("order must be nonnegative")
        clean = {}
        for e, c in (terms or {}).items():
            e = tuple(int(x) for x in e)
            if len(e) != nvars or any(x < 0 for x in e):
                raise ShapeError(f"bad exponent {e} for {nvars} variables")
            c = as_rational(c)
            if c and _wdeg(e, weights) <= order:
                clean[e] = clean.get(e, ZERO) + c
        self._init(nvars, weights, order, {e: c for e, c in clean.items() if c})

    def _init(self, nvars, weights, order, terms):
        self.nvars = nvars
        self.weights = weights
        self.order = order
        self._terms = terms
        self._sorted = None
        self._hash = None

    @classmethod
    def _raw(cls, nvars, weights, order, terms) -> "Jet":
        # terms must already be canonical
        obj = cls.__new__(cls)
        obj._init(nvars, weights, order, terms)
        return obj

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int, weights=None, order: int = 1) -> "Jet":
        weights = Weights.ones(nvars) if weights is None else Weights(weights)
        return cls._raw(nvars, weights, order, {})

    @classmethod
    def const(cls, value, nvars: int, weights=None, order: int = 1) -> "Jet":
        weights = Weights.ones(nvars) if weights is None else Weights(weights)
        return cls(nvars, weights, order, {(0,) * nvars: value})

    @classmethod
    def var(cls, k: int, nvars: int, weights=None, order: int = 1) -> "Jet":
        """The coordinate function ``x_k`` (0-based ``k``)."""
        weights = Weights.ones(nvars) if weights is None else Weights(weights)
        e = [0] * nvars
        e[k] = 1
        return cls(nvars, weights, order, {tuple(e): 1})

    def like(self, terms: Mapping | None = None) -> "Jet":
        """A jet with the same shape and the given terms."""
        return Jet(self.nvars, self.weights, self.order, terms)

    # -- inspection --------------------------------------------------------

    @property
    def terms(self) -> Mapping[Exponent, mpq]:
        return MappingProxyType(self._terms)

    @property
    def shape(self):
        return (self.nvars, tuple(self.weights), self.order)

    def sorted_terms(self):
        """List of ``(weighted degree, exponent, coefficient)`` in canonical order."""
        if self._sorted is None:
            w = self.weights
            self._sorted = sorted((_wdeg(e, w), e, c) for e, c in self._terms.items())
        return self._sorted

    def items(self):
        """``(exponent, coefficient)`` pairs in graded lexicographic order."""
        return [(e, c) for _, e, c in self.sorted_terms()]

    def coefficient(self, alpha: Exponent) -> mpq:
        return self._terms.get(tuple(alpha), ZERO)

    def constant_term(self) -> mpq:
        return self._terms.get((0,) * self.nvars, ZERO)

    def degree(self) -> int | None:
        """Largest weighted degree present (``None`` for the zero jet)."""
        s = self.sorted_terms()
        return s[-1][0] if s else None

    def low_degree(self) -> int | None:
        """Smallest weighted degree present (``None`` for the zero jet)."""
        s = self.sorted_terms()
        return s[0][0] if s else None

    def total_degree(self) -> int | None:
        if not self._terms:
            return None
        return max(sum(e) for e in self._terms)

    def is_homogeneous(self, d: int) -> bool:
        return all(deg == d for deg, _, _ in self.sorted_terms())

    def homogeneous_part(self, d: int) -> "Jet":
        w = self.weights
        return Jet._raw(self.nvars, w, self.order,
                        {e: c for e, c in self._terms.items() if _wdeg(e, w) == d})

    def part(self, predicate) -> "Jet":
        """Terms whose weighted degree satisfies ``predicate``."""
        w = self.weights
        return Jet._raw(self.nvars, w, self.order,
                        {e: c for e, c in self._terms.items() if predicate(_wdeg(e, w))})

    # -- reshaping -----------------------------------------------------------

    def truncated(self, order: int) -> "Jet":
        order = min(order, self.order)
        w = self.weights
        return Jet._raw(self.nvars, w, order,
                        {e: c for e, c in self._terms.items() if _wdeg(e, w) <= order})

    def with_order(self, order: int) -> "Jet":
        """Change the truncation order.

        Raising the order reinterprets the jet as an exact polynomial; this is
        how polynomial input data is promoted before exact computations.
        """
        if order >= self.order:
            return Jet._raw(self.nvars, self.weights, order, self._terms)
        return self.truncated(order)

    def regrade(self, weights, order: int) -> "Jet":
        """Same terms under new weights, truncated at ``order``."""
        return Jet(self.nvars, weights, order, self._terms)

    # -- arithmetic ------------------------------------------------------------

    def _check(self, other: "Jet"):
        if (self.nvars != other.nvars or self.weights != other.weights
                or self.order != other.order):
            raise ShapeError(f"jet shapes differ: {self.shape} vs {other.shape}")

    def _coerce(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return other
        try:
            c = as_rational(other)
        except (TypeError, ValueError):
            return NotImplemented
        return Jet._raw(self.nvars, self.weights, self.order,
                        {(0,) * self.nvars: c} if c else {})

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        _add_into(out, other._terms)
        return Jet._raw(self.nvars, self.weights, self.order, out)

    __radd__ = __add__

    def __neg__(self):
        return Jet._raw(self.nvars, self.weights, self.order,
                        {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        _add_into(out, other._terms, -ONE)
        return Jet._raw(self.nvars, self.weights, self.order, out)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            terms = _mul_sorted(self.sorted_terms(), other.sorted_terms(), self.order)
            return Jet._raw(self.nvars, self.weights, self.order, terms)
        try:
            c = as_rational(other)
        except (TypeError, ValueError):
            return NotImplemented
        if not c:
            return Jet._raw(self.nvars, self.weights, self.order, {})
        return Jet._raw(self.nvars, self.weights, self.order,
                        {e: v * c for e, v in self._terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, other):
        c = as_rational(other)
        return self * (ONE / c)

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not supported")
        result = self._coerce(1)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def __bool__(self):
        return bool(self._terms)

    def __eq__(self, other):
        if isinstance(other, Jet):
            return self.shape == other.shape and self._terms == other._terms
        try:
            c = as_rational(other)
        except (TypeError, ValueError):
            return NotImplemented
        return self._terms == ({(0,) * self.nvars: c} if c else {})

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.shape, frozenset(self._terms.items())))
        return self._hash

    # -- calculus --------------------------------------------------------------

    def deriv(self, k: int) -> "Jet":
        """Partial derivative with respect to variable ``k`` (0-based)."""
        out = {}
        for e, c in self._terms.items():
            a = e[k]
            if a:
                e2 = e[:k] + (a - 1,) + e[k + 1:]
                out[e2] = c * a
        return Jet._raw(self.nvars, self.weights, self.order, out)

    def evaluate(self, point: Sequence):
        """Value at ``point``; exact for rational input, float for float input."""
        if len(point) != self.nvars:
            raise ShapeError(f"point has {len(point)} coordinates, expected {self.nvars}")
        total = 0
        for e, c in self._terms.items():
            term = c
            for x, a in zip(point, e):
                if a:
                    term = term * x ** a
            total = total + term
        return total

    def scale_vars(self, factors: Sequence) -> "Jet":
        """Substitute ``x_l -> factors[l] * x_l`` (exact rational factors)."""
        f = [as_rational(x) for x in factors]
        out = {}
        for e, c in self._terms.items():
            v = c
            for x, a in zip(f, e):
                if a:
                    v *= x ** a
            if v:
                out[e] = v
        return Jet._raw(self.nvars, self.weights, self.order, out)

    # -- serialisation -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "nvars": self.nvars,
            "weights": list(self.weights),
            "order": self.order,
            "terms": [{"exp": list(e), "coef": rational_str(c)} for e, c in self.items()],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Jet":
        terms: dict = {}
        for t in data.get("terms", []):
            e = tuple(t["exp"])
            terms[e] = terms.get(e, ZERO) + as_rational(t["coef"])
        return cls(int(data["nvars"]), data["weights"], int(data["order"]), terms)

    def __repr__(self):
        return f"Jet({self})"

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for e, c in self.items():
            mono = "*".join(f"x{l + 1}" + (f"^{a}" if a > 1 else "")
                            for l, a in enumerate(e) if a)
            cs = rational_str(c)
            if not mono:
                parts.append(cs)
            elif c == 1:
                parts.append(mono)
            elif c == -1:
                parts.append("-" + mono)
            else:
                parts.append(f"{cs}*{mono}")
        return " + ".join(parts).replace("+ -", "- ")


class JetMap(tuple):
    """A tuple of jets sharing variables, weights and order."""

    def __new__(cls, components: Iterable[Jet]):
        comps = tuple(components)
        if not comps:
            raise ShapeError("a JetMap needs at least one component")
        shape = comps[0].shape
        for c in comps[1:]:
            if c.shape != shape:
                raise ShapeError(f"JetMap components differ in shape: {shape} vs {c.shape}")
        return super().__new__(cls, comps)

    @classmethod
    def identity(cls, nvars: int, weights=None, order: int = 1) -> "JetMap":
        return cls(Jet.var(k, nvars, weights, order) for k in range(nvars))

    @property
    def nvars(self):
        return self[0].nvars

    @property
    def weights(self):
        return self[0].weights

    @property
    def order(self):
        return self[0].order

    def truncated(self, order: int) -> "JetMap":
        return JetMap(c.truncated(order) for c in self)

    def evaluate(self, point):
        return tuple(c.evaluate(point) for c in self)

    def to_json(self) -> list:
        return [c.to_json() for c in self]

    @classmethod
    def from_json(cls, data) -> "JetMap":
        return cls(Jet.from_json(d) for d in data)


def jet_add(a: Jet, b: Jet) -> Jet:
    """Coefficient-wise sum; raises :class:`ShapeError` on mismatch."""
    a._check(b)
    return a + b


def jet_mul(a: Jet, b: Jet) -> Jet:
    """Product truncated at the common order."""
    a._check(b)
    return a * b


def jet_compose(f: Jet, g: Sequence[Jet]) -> Jet:
    """Truncated substitution ``f(g(x))``.

    ``g`` has one component per variable of ``f``, all in shared source
    variables.  Components must have zero constant term, and component ``j``
    may only contain terms of weighted degree at least ``f.weights[j]`` so that
    the result is exact up to ``g``'s order.
    """
    g = JetMap(g)
    if len(g) != f.nvars:
        raise ShapeError(f"{len(g)} substitutions for {f.nvars} variables")
    for j, gj in enumerate(g):
        if gj.constant_term():
            raise JetDomainError(f"component {j} of the substitution has a nonzero constant term")
        low = gj.low_degree()
        if low is not None and low < f.weights[j]:
            raise JetDegreeError(
                f"component {j} has a term of weighted degree {low} < {f.weights[j]}")
    if f.order < g.order:
        raise JetDegreeError(
            f"outer series known to order {f.order} only, substitution needs {g.order}")

    order = g.order
    nv = g.nvars
    lows = [gj.low_degree() for gj in g]
    unit = {(0,) * nv: ONE}
    cache: dict[Exponent, dict] = {(0,) * f.nvars: unit}

    def power_product(alpha: Exponent) -> dict:
        hit = cache.get(alpha)
        if hit is not None:
            return hit
        j = max(i for i, a in enumerate(alpha) if a)
        prev = power_product(alpha[:j] + (alpha[j] - 1,) + alpha[j + 1:])
        if not prev:
            val = {}
        else:
            w = g.weights
            prev_sorted = sorted((_wdeg(e, w), e, c) for e, c in prev.items())
            val = _mul_sorted(prev_sorted, g[j].sorted_terms(), order)
        cache[alpha] = val
        return val

    out: dict = {}
    for e, c in f.items():
        if any(a and lows[j] is None for j, a in enumerate(e)):
            continue
        if sum(a * lows[j] for j, a in enumerate(e) if a) > order:
            continue
        _add_into(out, power_product(e), c)
    return Jet._raw(nv, g.weights, order, out)


def compose_map(f: Sequence[Jet], g: Sequence[Jet]) -> JetMap:
    """Component-wise :func:`jet_compose`."""
    return JetMap(jet_compose(fi, g) for fi in f)


def jet_invert(g: Sequence[Jet]) -> JetMap:
    """Compositional inverse of a map with identity linear part.

    Returns ``h`` with ``jet_compose(g_i, h) == x_i`` up to the order of ``g``.
    """
    g = JetMap(g)
    n = g.nvars
    if len(g) != n:
        raise ShapeError("jet_invert needs a square map")
    for j, gj in enumerate(g):
        if gj.constant_term():
            raise JetDomainError(f"component {j} has a nonzero constant term")
        linear = {e: c for e, c in gj.terms.items() if sum(e) == 1}
        expect = {tuple(1 if l == j else 0 for l in range(n)): ONE}
        if linear != expect:
            raise UnsupportedError("only maps with identity linear part can be inverted")
    ident = JetMap.identity(n, g.weights, g.order)
    nonlinear = JetMap(gj - xj for gj, xj in zip(g, ident))
    h = ident
    # Each round fixes at least one more weighted degree along every
    # dependency chain; chains have length at most order * n.
    for _ in range(g.order * n + 2):
        nxt = JetMap(xj - jet_compose(qj, h) for xj, qj in zip(ident, nonlinear))
        if nxt == h:
            return h
        h = nxt
    raise JetOrderError("series inversion did not stabilise")


def _operator_series(fields, psi: Jet, kmax: int, weights, order):
    """Yield ``((sum_i s_i Y_i)^k psi)(0)`` as raw dicts in ``s`` for k = 0..kmax.

    Works in the polynomial ring in ``(x, s)`` without truncation in ``x``;
    terms that cannot survive evaluation at ``x = 0`` are pruned.
    """
    m = len(fields)
    n = psi.nvars
    comps = []
    for f in fields:
        cs = f.components if hasattr(f, "components") else f
        if len(cs) != n:
            raise ShapeError("field dimension does not match the test function")
        comps.append([[(e, c, sum(e)) for e, c in cj.terms.items()] for cj in cs])
    zero_s = (0,) * m
    current = {(e, zero_s): c for e, c in psi.terms.items() if sum(e) <= kmax}
    for k in range(kmax + 1):
        yield {s: c for (x, s), c in current.items() if not any(x)}
        if k == kmax:
            return
        remaining = kmax - k - 1
        new: dict = {}
        for (xa, sa), c in current.items():
            base_w = _wdeg(sa, weights)
            xdeg = sum(xa)
            for l in range(n):
                al = xa[l]
                if not al:
                    continue
                xd = xa[:l] + (al - 1,) + xa[l + 1:]
                cl = c * al
                for i in range(m):
                    if order is not None and base_w + weights[i] > order:
                        continue
                    sn = sa[:i] + (sa[i] + 1,) + sa[i + 1:]
                    for ea, ca, da in comps[i][l]:
                        if xdeg - 1 + da > remaining:
                            continue
                        key = (tuple(map(operator.add, xd, ea)), sn)
                        v = new.get(key, ZERO) + cl * ca
                        if v:
                            new[key] = v
                        else:
                            del new[key]
        current = new


def apply_operator_power(fields, psi: Jet, k: int, weights=None, order: int | None = None) -> Jet:
    """k-th term of the operator exponential, as a polynomial in ``s``.

    Returns ``(1/k!) ((s_1 Y_1 + ... + s_m Y_m)^k psi)(0)``, i.e. the sum over
    words ``i_1..i_k`` of ``s_{i_1}...s_{i_k} (Y_{i_1}...Y_{i_k} psi)(0) / k!``.

    ``fields`` are vector fields (objects with ``.components`` or plain
    sequences of jets) treated as exact polynomials.  The result is a jet in
    ``m = len(fields)`` variables with the given ``weights`` (default all 1);
    ``order`` defaults to ``k * max(weights)`` so nothing is dropped.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    m = len(fields)
    weights = Weights.ones(m) if weights is None else Weights(weights)
    out_order = k * max(weights) if order is None else order
    terms = None
    for terms in _operator_series(fields, psi, k, weights, order):
        pass
    scale = mpq(1, math.factorial(k))
    return Jet(m, weights, out_order, {s: c * scale for s, c in terms.items()})


def operator_exponential(fields, psi: Jet, weights=None, order: int = 1) -> Jet:
    """Sum of :func:`apply_operator_power` over k, truncated at weighted ``order``."""
    m = len(fields)
    weights = Weights.ones(m) if weights is None else Weights(weights)
    out: dict = {}
    for k, terms in enumerate(_operator_series(fields, psi, order, weights, order)):
        _add_into(out, terms, mpq(1, math.factorial(k)))
    return Jet(m, weights, order, out)
