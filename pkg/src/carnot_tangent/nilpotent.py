"""Exponential coordinates, principal parts and the nilpotent approximation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

from gmpy2 import mpq

from . import _linalg
from .ccfields import (
    AdaptedFrame,
    CCStructure,
    PolyVectorField,
    evaluate_word,
    frame_fields,
    pushforward_dilation_powers,
    select_adapted_frame,
    words_up_to,
)
from .errors import ConsistencyError, DecompositionError, JetOrderError
from .jets import Jet, JetMap, Weights, as_rational, compose_map, jet_compose, jet_invert, operator_exponential


def _ungraded(field: PolyVectorField) -> PolyVectorField:
    """Regrade a polynomial field to total degree, keeping every term."""
    n = field.nvars
    top = max(field.degree() or 0, field.order, 1)
    return field.regrade(Weights.ones(n), top * max(field.weights))


def input_accuracy(X: CCStructure, frame: AdaptedFrame) -> int:
    """Order up to which the input coefficients are trusted, in the frame grading."""
    w = X.weights
    if all(x == 1 for x in w) or tuple(w) == tuple(frame.weights):
        return X.order
    return math.ceil((X.order + 1) / max(w)) - 1


class ExponentialChart:
    """Germ of ``s -> exp(sum_i s_i Y_{J_i})(0)`` for an adapted frame.

    ``phi`` is graded by the frame weights and truncated at ``order``.
    ``phi_inv`` is computed on demand in the total-degree grading.
    """

    def __init__(self, structure: CCStructure, frame: AdaptedFrame, order: int,
                 phi_extended: JetMap, fields: list):
        self.structure = structure
        self.frame = frame
        self.order = order
        self._phi_extended = phi_extended
        self._frame_fields = fields
        self.phi = phi_extended.truncated(order)

    @property
    def weights(self) -> Weights:
        return self.frame.weights

    @property
    def linear_part(self) -> list[list[mpq]]:
        """Matrix ``M`` with ``phi(s) = M s + O(|s|^2)``; equals ``basis_at_zero`` transposed."""
        n = self.frame.n
        return [[comp.coefficient(tuple(int(k == l) for k in range(n))) for l in range(n)]
                for comp in self.phi]

    @cached_property
    def phi_inv(self) -> JetMap:
        n = self.frame.n
        ones = Weights.ones(n)
        phi_total = JetMap(
            operator_exponential(self._frame_fields, Jet.var(j, n, ones, self.order),
                                 ones, self.order) for j in range(n))
        linv = _linalg.inverse(self.linear_part)
        normalized = JetMap(
            sum((phi_total[m] * linv[j][m] for m in range(n) if linv[j][m]), Jet.zero(n, ones, self.order))
            for j in range(n))
        g_inv = jet_invert(normalized)
        lin = JetMap(
            sum((Jet.var(m, n, ones, self.order) * linv[j][m] for m in range(n) if linv[j][m]),
                Jet.zero(n, ones, self.order))
            for j in range(n))
        return compose_map(g_inv, lin)

    def is_identity(self) -> bool:
        return self.phi == JetMap.identity(self.frame.n, self.frame.weights, self.order)

    def to_json(self) -> dict:
        return {"order": self.order, "weights": list(self.weights), "phi": self.phi.to_json()}


def _resolve(X: CCStructure, frame: AdaptedFrame | None, order: int | None, max_step: int | None):
    if frame is None:
        frame = X.frame or select_adapted_frame(X, max_step or X.n)
    s = frame.step
    order = 2 * s if order is None else order
    if order < s:
        raise ValueError(f"order {order} is below the step {s}")
    return frame, order


def build_exponential_chart(X: CCStructure, frame: AdaptedFrame | None = None,
                            order: int | None = None, max_step: int | None = None) -> ExponentialChart:
    """Taylor expansion of the exponential map of an adapted frame.

    Component ``j`` is ``sum_k (1/k!) ((sum_i s_i Y_{J_i})^k x_j)(0)`` truncated
    at weighted degree ``order`` (default twice the step).
    """
    frame, order = _resolve(X, frame, order, max_step)
    acc = input_accuracy(X, frame)
    if acc < order:
        raise JetOrderError(
            f"input fields are known to order {acc}, the chart to order {order} needs {order}",
            required=order)
    n = X.n
    exact = CCStructure([_ungraded(f) for f in X.fields])
    fields = frame_fields(exact, frame)
    extended = order + 1
    ones = Weights.ones(n)
    phi = JetMap(
        operator_exponential(fields, Jet.var(j, n, ones, 1), frame.weights, extended)
        for j in range(n))
    chart = ExponentialChart(X, frame, order, phi, fields)
    lin = chart.linear_part
    if [list(r) for r in zip(*lin)] != [list(r) for r in frame.basis_at_zero]:
        raise ConsistencyError("linear part of the chart differs from the frame at 0")
    return chart


def _identity_frame(frame: AdaptedFrame) -> AdaptedFrame:
    n = frame.n
    ident = [[int(i == j) for j in range(n)] for i in range(n)]
    return AdaptedFrame(frame.words, ident, frame.rank, frame.layer_dims)


def to_exponential_coordinates(X: CCStructure, frame: AdaptedFrame | None = None,
                               order: int | None = None, chart: ExponentialChart | None = None,
                               max_step: int | None = None) -> CCStructure:
    """Express the fields in exponential coordinates of the first kind.

    Solves ``Dphi(s) Z_i(s) = Y_i(phi(s))`` for each field by fixed-point
    iteration on jets.  The result is graded by the frame weights and satisfies
    ``Z_i(0) = e_i``.
    """
    if chart is None:
        chart = build_exponential_chart(X, frame, order, max_step)
    frame, order = chart.frame, chart.order
    n = X.n
    phi = chart._phi_extended
    extended = phi.order
    w = frame.weights
    linv = _linalg.inverse(chart.linear_part)
    zero = Jet.zero(n, w, extended)

    def lin_combo(row, jets):
        acc = zero
        for c, j in zip(row, jets):
            if c:
                acc = acc + j * c
        return acc

    dphi = [[phi[m].deriv(l) for l in range(n)] for m in range(n)]
    E = []
    for j in range(n):
        row = []
        for l in range(n):
            e = lin_combo(linv[j], [dphi[m][l] for m in range(n)])
            row.append(e - int(j == l))
        E.append(row)

    new_fields = []
    for Y in X.fields:
        exact = _ungraded(Y).with_order(extended)
        pulled = [jet_compose(c.with_order(max(c.order, extended)), phi) for c in exact.components]
        b = [lin_combo(linv[j], pulled) for j in range(n)]
        Z = b
        for _ in range(extended + 2):
            nxt = [b[j] - sum((E[j][l] * Z[l] for l in range(n) if E[j][l]), zero) for j in range(n)]
            if nxt == Z:
                break
            Z = nxt
        else:
            raise ConsistencyError("pushforward iteration did not stabilise")
        new_fields.append(PolyVectorField(z.truncated(order) for z in Z))

    out = CCStructure(new_fields, _identity_frame(frame))
    for i, f in enumerate(out.fields):
        if f.at_zero() != tuple(mpq(int(i == j)) for j in range(n)):
            raise ConsistencyError(f"field {i + 1} is not the coordinate vector at 0")
    return out


@dataclass(frozen=True)
class DecomposedStructure:
    """Coefficients split as ``a_ij = p_ij + r_ij`` by weighted degree."""

    base: CCStructure
    frame: AdaptedFrame
    p: tuple
    rjet: tuple

    @property
    def weights(self) -> Weights:
        return self.frame.weights

    @property
    def step(self) -> int:
        return self.frame.step

    def to_json(self) -> dict:
        return {
            "p": [[c.to_json() for c in row] for row in self.p],
            "r": [[c.to_json() for c in row] for row in self.rjet],
        }


def decompose_principal_parts(Xexp: CCStructure, frame: AdaptedFrame | None = None) -> DecomposedStructure:
    """Split each coefficient into its principal homogeneous part and a remainder.

    ``p_ij`` is the part of ``a_ij`` of weighted degree ``w_j - w_i``.  The four
    structural clauses are then checked and a :class:`DecompositionError`
    naming the first failing clause is raised:

    * ``i``: ``p_ij`` is homogeneous of degree ``w_j - w_i``;
    * ``ii``: ``p_ij = delta_ij`` whenever ``w_j <= w_i``;
    * ``iii``: ``r_ij(0) = 0``;
    * ``iv``: every term of ``r_ij`` has weighted degree above ``w_j - w_i``.

    ``pre`` is reported when ``a_ij(0) != delta_ij``.
    """
    frame = frame or Xexp.frame or select_adapted_frame(Xexp, Xexp.n)
    w = frame.weights
    n = Xexp.n
    if tuple(Xexp.weights) != tuple(w):
        raise DecompositionError(
            f"coefficients are graded by {tuple(Xexp.weights)}, frame weights are {tuple(w)}", "pre")
    p_rows, r_rows = [], []
    for i, Y in enumerate(Xexp.fields):
        wi = w[i]
        p_row, r_row = [], []
        for j, a in enumerate(Y.components):
            delta = int(i == j)
            if a.constant_term() != delta:
                raise DecompositionError(
                    f"a_{i + 1}{j + 1}(0) = {a.constant_term()}, expected {delta}", "pre")
            d = w[j] - wi
            p = a.homogeneous_part(d) if d >= 0 else a.like()
            r = a - p
            if not p.is_homogeneous(d) and p:
                raise DecompositionError(f"p_{i + 1}{j + 1} is not homogeneous of degree {d}", "i")
            if w[j] <= wi and p != delta:
                raise DecompositionError(f"p_{i + 1}{j + 1} = {p}, expected {delta}", "ii")
            if r.constant_term():
                raise DecompositionError(f"r_{i + 1}{j + 1}(0) = {r.constant_term()}", "iii")
            low = r.low_degree()
            if low is not None and low <= d:
                raise DecompositionError(
                    f"r_{i + 1}{j + 1} has a term of weighted degree {low} <= {d}", "iv")
            p_row.append(p)
            r_row.append(r)
        p_rows.append(tuple(p_row))
        r_rows.append(tuple(r_row))
    if any(len(row) != n for row in p_rows):
        raise ConsistencyError("decomposition lost components")
    return DecomposedStructure(Xexp, frame, tuple(p_rows), tuple(r_rows))


class NilpotentStructure:
    """Homogeneous principal parts ``Y_i^inf`` and their bracket frame."""

    def __init__(self, fields_inf, frame: AdaptedFrame):
        self.fields_inf = tuple(fields_inf)
        self.frame = frame
        self.weights = frame.weights
        self.step = frame.step
        self.structure = CCStructure(self.fields_inf, frame)
        cache: dict = {}
        self._words_cache = cache
        self.frame_inf = tuple(evaluate_word(self.fields_inf, J, cache=cache) for J in frame.words)

    @property
    def n(self) -> int:
        return self.structure.n

    @property
    def r(self) -> int:
        return self.structure.r

    def bracket(self, word) -> PolyVectorField:
        return evaluate_word(self.fields_inf, word, cache=self._words_cache)

    def frame_determinant(self) -> Jet:
        n = self.n
        top = n * self.step
        matrix = [[c.with_order(max(c.order, top)) for c in f.components] for f in self.frame_inf]
        # rows are fields, so the determinant of the matrix of components
        return _linalg.polynomial_det(matrix)

    def check(self) -> None:
        """Verify homogeneity, nilpotency of step ``s`` and the constant frame determinant."""
        for i, f in enumerate(self.fields_inf):
            powers = pushforward_dilation_powers(f)
            if set(powers) - {1}:
                raise ConsistencyError(f"field {i + 1} of the approximation is not homogeneous")
        for J in words_up_to(self.r, self.step + 1):
            if len(J) == self.step + 1 and self.bracket(J):
                raise ConsistencyError(f"bracket {J} of length s+1 does not vanish")
        d = self.frame_determinant()
        if d.degree() != 0 or not d.constant_term():
            raise ConsistencyError(f"frame determinant {d} is not a nonzero constant")

    def __eq__(self, other):
        if not isinstance(other, NilpotentStructure):
            return NotImplemented
        return self.fields_inf == other.fields_inf and self.frame.words == other.frame.words

    def to_json(self) -> dict:
        return {"weights": list(self.weights), "step": self.step,
                "fields": [f.to_json() for f in self.fields_inf]}


def nilpotent_approximation(D: DecomposedStructure) -> NilpotentStructure:
    """Fields with the principal parts ``p_ij`` as coefficients, fully verified."""
    fields = [PolyVectorField(row) for row in D.p]
    N = NilpotentStructure(fields, D.frame)
    N.check()
    expected = _linalg.det(D.frame.basis_at_zero)
    if N.frame_determinant().constant_term() != expected:
        raise ConsistencyError("frame determinant differs from its value at 0")
    return N


def rescale_powers(D: DecomposedStructure) -> list[dict[int, PolyVectorField]]:
    """``lam^-1 (delta_lam)_* Y_i`` as ``{power of lam: field}`` for each field."""
    out = []
    for Y in D.base.fields:
        out.append({p - 1: f for p, f in pushforward_dilation_powers(Y, D.weights).items()})
    return out


def rescale_structure(D: DecomposedStructure, lam) -> list[PolyVectorField]:
    """Rescaled fields ``lam^-1 (delta_lam)_* Y_i``; term ``c x^a`` in slot ``j`` gets ``lam^(w_j - 1 - w_a)``."""
    if lam <= 0:
        raise ValueError("rescaling factor must be positive")
    lam = as_rational(lam)
    out = []
    for powers in rescale_powers(D):
        total = None
        for p, f in powers.items():
            term = f * (lam ** p)
            total = term if total is None else total + term
        out.append(total)
    return out


@dataclass(frozen=True)
class Approximation:
    """Every stage of the pipeline from input fields to the nilpotent approximation."""

    structure: CCStructure
    frame: AdaptedFrame
    chart: ExponentialChart
    exponential: CCStructure
    decomposition: DecomposedStructure
    nilpotent: NilpotentStructure

    def to_json(self) -> dict:
        dec = self.decomposition.to_json()
        return {
            "frame": self.frame.to_json(),
            "chart": self.chart.to_json(),
            "p": dec["p"],
            "r": dec["r"],
            "nilpotent_fields": [f.to_json() for f in self.nilpotent.fields_inf],
        }


def approximate(X: CCStructure, order: int | None = None, max_step: int | None = None) -> Approximation:
    """Frame, chart, exponential coordinates, decomposition and approximation in one call."""
    frame, order = _resolve(X, None, order, max_step)
    chart = build_exponential_chart(X, frame, order)
    Xexp = to_exponential_coordinates(X, chart=chart)
    D = decompose_principal_parts(Xexp, Xexp.frame)
    N = nilpotent_approximation(D)
    return Approximation(X, frame, chart, Xexp, D, N)
