"""Polynomial vector fields, iterated brackets, adapted frames and dilations."""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Mapping, Sequence

from gmpy2 import mpq

from . import _linalg
from .errors import HormanderError, JetOrderError, ShapeError
from .jets import Jet, Weights, as_rational, rational_str


class PolyVectorField:
    """A vector field ``sum_j a_j(x) d/dx_j`` with jet coefficients.

    ``components[j]`` is the coefficient of ``d/dx_j``.
    """

    __slots__ = ("components",)

    def __init__(self, components: Iterable[Jet]):
        comps = tuple(components)
        if not comps:
            raise ShapeError("a vector field needs at least one component")
        shape = comps[0].shape
        if len(comps) != comps[0].nvars:
            raise ShapeError(f"{len(comps)} components in {comps[0].nvars} variables")
        for c in comps:
            if c.shape != shape:
                raise ShapeError("vector field components differ in shape")
        self.components = comps

    @classmethod
    def from_terms(cls, nvars: int, terms: Mapping[int, Mapping], weights=None,
                   order: int = 1) -> "PolyVectorField":
        """Build from ``{component index: {exponent: coefficient}}`` (0-based)."""
        weights = Weights.ones(nvars) if weights is None else Weights(weights)
        return cls(Jet(nvars, weights, order, terms.get(j, {})) for j in range(nvars))

    @classmethod
    def coordinate(cls, k: int, nvars: int, weights=None, order: int = 1) -> "PolyVectorField":
        """The constant field ``d/dx_k`` (0-based ``k``)."""
        return cls.from_terms(nvars, {k: {(0,) * nvars: 1}}, weights, order)

    @classmethod
    def zero(cls, nvars: int, weights=None, order: int = 1) -> "PolyVectorField":
        return cls.from_terms(nvars, {}, weights, order)

    # -- shape ---------------------------------------------------------------

    @property
    def nvars(self) -> int:
        return self.components[0].nvars

    @property
    def weights(self) -> Weights:
        return self.components[0].weights

    @property
    def order(self) -> int:
        return self.components[0].order

    @property
    def shape(self):
        return self.components[0].shape

    def degree(self) -> int | None:
        degs = [d for d in (c.degree() for c in self.components) if d is not None]
        return max(degs) if degs else None

    def with_order(self, order: int) -> "PolyVectorField":
        return PolyVectorField(c.with_order(order) for c in self.components)

    def truncated(self, order: int) -> "PolyVectorField":
        return PolyVectorField(c.truncated(order) for c in self.components)

    def regrade(self, weights, order: int) -> "PolyVectorField":
        return PolyVectorField(c.regrade(weights, order) for c in self.components)

    # -- evaluation ----------------------------------------------------------

    def __call__(self, point: Sequence):
        return tuple(c.evaluate(point) for c in self.components)

    def at_zero(self) -> tuple:
        return tuple(c.constant_term() for c in self.components)

    def apply(self, f: Jet) -> Jet:
        """Directional derivative ``sum_k a_k df/dx_k`` (truncated at the common order)."""
        total = f.like()
        for k, a in enumerate(self.components):
            if a:
                dk = f.deriv(k)
                if dk:
                    total = total + a * dk
        return total

    # -- arithmetic ----------------------------------------------------------

    def _check(self, other: "PolyVectorField"):
        if self.shape != other.shape:
            raise ShapeError(f"vector field shapes differ: {self.shape} vs {other.shape}")

    def __add__(self, other):
        if not isinstance(other, PolyVectorField):
            return NotImplemented
        self._check(other)
        return PolyVectorField(a + b for a, b in zip(self.components, other.components))

    def __sub__(self, other):
        if not isinstance(other, PolyVectorField):
            return NotImplemented
        self._check(other)
        return PolyVectorField(a - b for a, b in zip(self.components, other.components))

    def __neg__(self):
        return PolyVectorField(-a for a in self.components)

    def __mul__(self, scalar):
        if isinstance(scalar, PolyVectorField):
            return NotImplemented
        return PolyVectorField(a * scalar for a in self.components)

    __rmul__ = __mul__

    def __bool__(self):
        return any(self.components)

    def __eq__(self, other):
        if not isinstance(other, PolyVectorField):
            return NotImplemented
        return self.components == other.components

    def __hash__(self):
        return hash(self.components)

    def __repr__(self):
        parts = [f"({c})*d{j + 1}" for j, c in enumerate(self.components) if c]
        return "PolyVectorField(" + (" + ".join(parts) or "0") + ")"

    def to_json(self) -> list:
        return [c.to_json() for c in self.components]

    @classmethod
    def from_json(cls, data) -> "PolyVectorField":
        return cls(Jet.from_json(d) for d in data)


def _bracket_raw(V: PolyVectorField, W: PolyVectorField) -> PolyVectorField:
    comps = []
    for j in range(V.nvars):
        comps.append(V.apply(W.components[j]) - W.apply(V.components[j]))
    return PolyVectorField(comps)


def lie_bracket(V: PolyVectorField, W: PolyVectorField, truncate: bool = False) -> PolyVectorField:
    """Commutator ``[V, W] = V(W) - W(V)`` computed componentwise.

    Inputs are treated as exact polynomials.  If the bracket has terms above the
    common order, :class:`JetOrderError` is raised unless ``truncate`` is set,
    in which case those terms are dropped.
    """
    V._check(W)
    order = V.order
    bound = (V.degree() or 0) + (W.degree() or 0)
    if bound <= order:
        return _bracket_raw(V, W)
    exact = _bracket_raw(V.with_order(bound), W.with_order(bound))
    deg = exact.degree()
    if deg is not None and deg > order:
        if not truncate:
            raise JetOrderError(
                f"bracket has weighted degree {deg} above the order {order}", required=deg)
        return exact.truncated(order)
    return exact.truncated(order)


def polynomial_bracket(V: PolyVectorField, W: PolyVectorField) -> PolyVectorField:
    """Exact bracket of polynomial fields; orders are aligned and raised if needed."""
    if V.order != W.order:
        top = max(V.order, W.order)
        V, W = V.with_order(top), W.with_order(top)
    V._check(W)
    try:
        return lie_bracket(V, W)
    except JetOrderError as err:
        return lie_bracket(V.with_order(err.required), W.with_order(err.required))


class BracketWord(tuple):
    """Letters ``(j_1, ..., j_k)`` (1-based) naming ``[Y_j1, [Y_j2, ..., Y_jk]]``."""

    def __new__(cls, letters: Iterable[int]):
        letters = tuple(int(x) for x in letters)
        if not letters:
            raise ValueError("a bracket word needs at least one letter")
        if any(x < 1 for x in letters):
            raise ValueError(f"letters are 1-based, got {letters}")
        return super().__new__(cls, letters)

    @property
    def length(self) -> int:
        return len(self)

    def __repr__(self):
        return "(" + ",".join(map(str, self)) + ")"


def _as_fields(X) -> tuple:
    return tuple(X.fields) if isinstance(X, CCStructure) else tuple(X)


def evaluate_word(X, J: Sequence[int], truncate: bool = False, cache: dict | None = None):
    """Right-nested iterated bracket of the fields of ``X`` along the word ``J``.

    ``X`` is a :class:`CCStructure` or a sequence of fields.  By default the
    fields are treated as exact polynomials; with ``truncate`` the brackets are
    truncated at the fields' order.
    """
    fields = _as_fields(X)
    J = BracketWord(J)
    if max(J) > len(fields):
        raise ValueError(f"letter {max(J)} exceeds the number of fields {len(fields)}")
    cache = {} if cache is None else cache
    bracket = (lambda a, b: lie_bracket(a, b, truncate=True)) if truncate else polynomial_bracket

    def go(word: tuple):
        hit = cache.get(word)
        if hit is not None:
            return hit
        if len(word) == 1:
            val = fields[word[0] - 1]
        else:
            right = go(word[1:])
            left = fields[word[0] - 1]
            if left.order != right.order:
                top = max(left.order, right.order)
                left, right = left.with_order(top), right.with_order(top)
            val = bracket(left, right)
        cache[word] = val
        return val

    return go(tuple(J))


def words_up_to(r: int, max_len: int):
    """All bracket words over ``1..r`` by length, then lexicographically."""
    for k in range(1, max_len + 1):
        for letters in itertools.product(range(1, r + 1), repeat=k):
            yield BracketWord(letters)


class AdaptedFrame:
    """Bracket words whose values at 0 form a basis adapted to the filtration."""

    def __init__(self, words, basis_at_zero, rank: int, layer_dims=None):
        self.words = tuple(BracketWord(w) for w in words)
        self.weights = Weights(len(w) for w in self.words)
        self.step = self.weights[-1]
        self.basis_at_zero = tuple(tuple(mpq(x) for x in row) for row in basis_at_zero)
        self.rank = rank
        if layer_dims is None:
            layer_dims = [sum(1 for w in self.weights if w <= j) for j in range(1, self.step + 1)]
        self.layer_dims = tuple(layer_dims)
        n = len(self.words)
        if len(self.basis_at_zero) != n or any(len(r) != n for r in self.basis_at_zero):
            raise ShapeError("basis matrix must be n x n")
        if tuple(self.words[:rank]) != tuple(BracketWord((i,)) for i in range(1, rank + 1)):
            raise ValueError("the first words of an adapted frame are the single letters")
        if _linalg.rank(self.basis_at_zero) != n:
            raise ValueError("frame vectors at 0 are linearly dependent")

    @property
    def n(self) -> int:
        return len(self.words)

    def __eq__(self, other):
        if not isinstance(other, AdaptedFrame):
            return NotImplemented
        return self.words == other.words and self.basis_at_zero == other.basis_at_zero

    def __repr__(self):
        return f"AdaptedFrame(words={list(self.words)}, weights={tuple(self.weights)})"

    def to_json(self) -> dict:
        return {
            "words": [list(w) for w in self.words],
            "weights": list(self.weights),
            "step": self.step,
            "layer_dims": list(self.layer_dims),
            "basis_at_zero": [[rational_str(x) for x in row] for row in self.basis_at_zero],
        }

    @classmethod
    def from_json(cls, data, rank: int) -> "AdaptedFrame":
        return cls(data["words"], [[as_rational(x) for x in row] for row in data["basis_at_zero"]],
                   rank, data.get("layer_dims"))


class CCStructure:
    """``r`` polynomial vector fields on ``R^n``, linearly independent at 0."""

    def __init__(self, fields: Iterable[PolyVectorField], frame: AdaptedFrame | None = None):
        self.fields = tuple(fields)
        if not self.fields:
            raise ShapeError("a structure needs at least one field")
        shape = self.fields[0].shape
        for f in self.fields:
            if f.shape != shape:
                raise ShapeError("fields of a structure must share their shape")
        self.n = self.fields[0].nvars
        self.r = len(self.fields)
        if self.r > self.n:
            raise ShapeError(f"{self.r} fields in dimension {self.n}")
        if _linalg.rank([f.at_zero() for f in self.fields]) != self.r:
            raise ValueError("fields are linearly dependent at 0")
        self.frame = frame

    @property
    def order(self) -> int:
        return self.fields[0].order

    @property
    def weights(self) -> Weights:
        return self.fields[0].weights

    def with_frame(self, frame: AdaptedFrame) -> "CCStructure":
        return CCStructure(self.fields, frame)

    def __eq__(self, other):
        if not isinstance(other, CCStructure):
            return NotImplemented
        return self.fields == other.fields

    def __repr__(self):
        return f"CCStructure(n={self.n}, r={self.r}, order={self.order})"

    def to_json(self) -> dict:
        return {"n": self.n, "r": self.r, "fields": [f.to_json() for f in self.fields]}

    @classmethod
    def from_json(cls, data) -> "CCStructure":
        fields = [PolyVectorField.from_json(f) for f in data["fields"]]
        n, r = int(data["n"]), int(data["r"])
        if len(fields) != r or any(f.nvars != n for f in fields):
            raise ShapeError(f"structure declares n={n}, r={r} but holds "
                             f"{len(fields)} fields in {fields[0].nvars if fields else 0} variables")
        return cls(fields)


def select_adapted_frame(X: CCStructure, max_step: int) -> AdaptedFrame:
    """Greedy choice of bracket words whose values at 0 span ``R^n``.

    Words are scanned by length and then lexicographically; a word is kept when
    its value at 0 is independent of those already kept.
    """
    if max_step < 1:
        raise ValueError("max_step must be at least 1")
    n, r = X.n, X.r
    chosen: list[BracketWord] = []
    rows: list[tuple] = []
    layer_dims = []
    cache: dict = {}
    for length in range(1, max_step + 1):
        for letters in itertools.product(range(1, r + 1), repeat=length):
            if len(chosen) == n:
                break
            v = evaluate_word(X, letters, cache=cache).at_zero()
            if not any(v):
                continue
            if _linalg.rank(rows + [v]) > len(rows):
                chosen.append(BracketWord(letters))
                rows.append(v)
        layer_dims.append(len(chosen))
        if len(chosen) == n:
            break
    if len(chosen) < n:
        raise HormanderError(
            f"brackets of length <= {max_step} span only {len(chosen)} of {n} dimensions at 0",
            achieved_dim=len(chosen))
    return AdaptedFrame(chosen, rows, r, layer_dims)


def frame_fields(X: CCStructure, frame: AdaptedFrame, truncate: bool = False) -> list:
    """The fields ``Y_{J_1}, ..., Y_{J_n}`` of an adapted frame."""
    cache: dict = {}
    return [evaluate_word(X, w, truncate=truncate, cache=cache) for w in frame.words]


# -- dilations -----------------------------------------------------------------

def _check_lambda(lam):
    if lam == 0:
        raise ValueError("dilation factor must be nonzero")


def dilate_point(x: Sequence, lam, weights) -> tuple:
    """``(lam^w_1 x_1, ..., lam^w_n x_n)``; negative ``lam`` gives signed powers."""
    _check_lambda(lam)
    if len(x) != len(weights):
        raise ShapeError("point and weights differ in length")
    return tuple(lam ** w * xi for xi, w in zip(x, weights))


def pushforward_dilation_powers(V: PolyVectorField, weights=None) -> dict[int, PolyVectorField]:
    """``(delta_lam)_* V`` as ``{power: field}`` with ``lam`` kept symbolic."""
    w = V.weights if weights is None else Weights(weights)
    grouped: dict[int, dict[int, dict]] = {}
    for j, comp in enumerate(V.components):
        for e, c in comp.terms.items():
            p = w[j] - w.degree(e)
            grouped.setdefault(p, {}).setdefault(j, {})[e] = c
    return {p: PolyVectorField.from_terms(V.nvars, t, V.weights, V.order)
            for p, t in sorted(grouped.items())}


def pushforward_dilation(V: PolyVectorField, lam, weights=None) -> PolyVectorField:
    """``(delta_lam)_* V``: component ``j`` becomes ``lam^w_j * V_j(delta_{1/lam} x)``."""
    _check_lambda(lam)
    lam = as_rational(lam)
    total = PolyVectorField.zero(V.nvars, V.weights, V.order)
    for p, field in pushforward_dilation_powers(V, weights).items():
        total = total + field * (lam ** p)
    return total


def anorm(x: Sequence, weights) -> float:
    """Anisotropic size ``sum_i |x_i|^(1/w_i)``."""
    if len(x) != len(weights):
        raise ShapeError("point and weights differ in length")
    return float(sum(abs(float(xi)) ** (1.0 / w) for xi, w in zip(x, weights)))
