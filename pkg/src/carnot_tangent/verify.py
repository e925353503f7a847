"""Invariant checks run by ``carnot-tangent verify``."""

from __future__ import annotations

import random
import traceback
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from gmpy2 import mpq

from . import curves
from .ccfields import (
    CCStructure,
    evaluate_word,
    polynomial_bracket,
    pushforward_dilation_powers,
    select_adapted_frame,
    words_up_to,
)
from .freecarnot import (
    bch,
    build_hall_basis,
    exp_product,
    generation_word,
    generator_field,
    group_action,
    group_dilate,
    lift_structure,
    project_pi,
    witt_dimension,
)
from .jets import Jet, JetMap, Weights, jet_compose
from .nilpotent import (
    Approximation,
    approximate,
    build_exponential_chart,
    decompose_principal_parts,
    rescale_powers,
)

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"


@dataclass
class Check:
    name: str
    status: str
    exact: bool
    residual: float | None
    citation: str
    detail: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "status": self.status, "exact": self.exact,
                "residual": self.residual, "citation": self.citation, "detail": self.detail}


@dataclass
class VerificationReport:
    structure: str
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.status != FAIL for c in self.checks)

    def to_json(self) -> dict:
        return {"structure": self.structure, "ok": self.ok,
                "checks": [c.to_json() for c in self.checks]}

    def table(self) -> str:
        width = max(len(c.name) for c in self.checks) if self.checks else 10
        lines = [f"{'check':<{width}}  status   kind     residual"]
        for c in self.checks:
            res = "-" if c.residual is None else f"{c.residual:.3e}"
            kind = "exact" if c.exact else "numeric"
            lines.append(f"{c.name:<{width}}  {c.status:<7}  {kind:<7}  {res}")
            if c.status == FAIL and c.detail:
                lines.append(f"    {c.detail}")
        lines.append(f"{sum(c.status == PASS for c in self.checks)} passed, "
                     f"{sum(c.status == FAIL for c in self.checks)} failed, "
                     f"{sum(c.status == SKIPPED for c in self.checks)} skipped")
        return "\n".join(lines)


class _Skip(Exception):
    pass


@dataclass
class _Context:
    structure: CCStructure
    approx: Approximation
    tol: float
    rk4_step: float
    seed: int


# Each check returns a residual (0 for exact identities) or raises.

def _frame_adapted(ctx: _Context):
    X = ctx.structure
    F = ctx.approx.frame
    again = select_adapted_frame(X, F.step)
    assert again == F, "frame selection is not deterministic"
    assert F.layer_dims[0] == X.r, "first layer does not have dimension r"
    assert list(F.weights) == sorted(F.weights)
    return 0.0


def _bracket_identities(ctx: _Context):
    fields = list(ctx.structure.fields)
    cache: dict = {}
    pool = fields + [evaluate_word(fields, w, cache=cache) for w in words_up_to(len(fields), 2) if len(w) == 2]
    for a in pool:
        for b in pool:
            ab = polynomial_bracket(a, b)
            ba = polynomial_bracket(b, a)
            assert ab == -ba, "antisymmetry fails"
    a, b, c = fields[0], fields[-1], pool[-1]
    terms = [polynomial_bracket(a, polynomial_bracket(b, c)),
             polynomial_bracket(b, polynomial_bracket(c, a)),
             polynomial_bracket(c, polynomial_bracket(a, b))]
    top = max(t.order for t in terms)
    total = sum((t.with_order(top) for t in terms[1:]), terms[0].with_order(top))
    assert not total, "Jacobi identity fails"
    return 0.0


def _chart_inverse(ctx: _Context):
    chart = ctx.approx.chart
    n = chart.frame.n
    inv = chart.phi_inv
    fwd = JetMap(jet_compose(p, inv) for p in _phi_total(chart))
    assert fwd == JetMap.identity(n, inv.weights, inv.order), "chart inverse fails"
    return 0.0


def _phi_total(chart):
    from .jets import operator_exponential
    n = chart.frame.n
    ones = Weights.ones(n)
    return JetMap(operator_exponential(chart._frame_fields, Jet.var(j, n, ones, 1), ones, chart.order)
                  for j in range(n))


def _exponential_normalization(ctx: _Context):
    Xexp = ctx.approx.exponential
    for i, f in enumerate(Xexp.fields):
        assert f.at_zero() == tuple(mpq(int(i == j)) for j in range(Xexp.n))
    return 0.0


def _decomposition(ctx: _Context):
    decompose_principal_parts(ctx.approx.exponential, ctx.approx.exponential.frame)
    return 0.0


def _homogeneity(ctx: _Context):
    for f in ctx.approx.nilpotent.fields_inf:
        assert set(pushforward_dilation_powers(f)) <= {1}, "approximation field is not homogeneous"
    return 0.0


def _nilpotency(ctx: _Context):
    N = ctx.approx.nilpotent
    for J in words_up_to(N.r, N.step + 1):
        if len(J) == N.step + 1:
            assert not N.bracket(J), f"bracket {J} does not vanish"
    return 0.0


def _frame_determinant(ctx: _Context):
    d = ctx.approx.nilpotent.frame_determinant()
    assert d.degree() == 0 and d.constant_term() == 1, f"determinant is {d}"
    return 0.0


def _identity_chart(ctx: _Context):
    N = ctx.approx.nilpotent
    chart = build_exponential_chart(N.structure, N.frame, ctx.approx.chart.order)
    assert chart.is_identity(), "chart of the approximation is not the identity"
    return 0.0


def _rescaled_brackets(ctx: _Context):
    Xexp = ctx.approx.exponential
    N = ctx.approx.nilpotent
    w = N.weights
    cache: dict = {}
    for J in words_up_to(N.r, N.step):
        YJ = evaluate_word(Xexp, J, truncate=True, cache=cache)
        inf = N.bracket(J)
        ell = len(J)
        for j in range(Xexp.n):
            for e, c in YJ.components[j].terms.items():
                power = w[j] - w.degree(e) - ell
                if power >= 0:
                    expected = inf.components[j].coefficient(e) if power == 0 else 0
                    assert c == expected, f"word {J}: term {e} of component {j + 1} carries power {power}"
            for e, c in inf.components[j].terms.items():
                assert YJ.components[j].coefficient(e) == c, f"word {J}: principal term {e} missing"
    return 0.0


def _rescaling_limit(ctx: _Context):
    D = ctx.approx.decomposition
    N = ctx.approx.nilpotent
    for powers, inf in zip(rescale_powers(D), N.fields_inf):
        assert all(p <= 0 for p in powers), "rescaled field has a positive power"
        assert powers.get(0, inf * 0) == inf, "power-zero part differs from the approximation"
    return 0.0


def _idempotence(ctx: _Context):
    N = ctx.approx.nilpotent
    again = approximate(N.structure, ctx.approx.chart.order, N.step).nilpotent
    assert again == N, "approximation of the approximation differs"
    return 0.0


def _hall_dimensions(ctx: _Context):
    N = ctx.approx.nilpotent
    if N.r < 2:
        raise _Skip("rank below 2")
    basis = build_hall_basis(N.r, N.step)
    assert basis.layer_dims == tuple(witt_dimension(N.r, k) for k in range(1, N.step + 1))
    return 0.0


def _random_element(basis, rng):
    return basis.element([mpq(rng.randint(-5, 5), rng.randint(1, 4)) for _ in range(basis.dim)])


def _lift(ctx: _Context):
    N = ctx.approx.nilpotent
    if N.r < 2:
        raise _Skip("rank below 2")
    return lift_structure(N)


def _bch_identities(ctx: _Context):
    L = _lift(ctx)
    rng = random.Random(ctx.seed)
    b = L.basis
    for _ in range(5):
        A, B, C = (_random_element(b, rng) for _ in range(3))
        assert bch(A, b.zero()) == A and bch(b.zero(), A) == A
        assert not bch(A, -A)
        assert bch(bch(A, B), C) == bch(A, bch(B, C)), "associativity fails"
    return 0.0


def _action_property(ctx: _Context):
    L = _lift(ctx)
    rng = random.Random(ctx.seed + 1)
    b = L.basis
    for _ in range(3):
        x = [mpq(rng.randint(-3, 3), rng.randint(1, 3)) for _ in range(L.n)]
        f, g = _random_element(b, rng), _random_element(b, rng)
        assert group_action(group_action(x, f, L), g, L) == group_action(x, bch(f, g), L)
    return 0.0


def _projection_dilation(ctx: _Context):
    L = _lift(ctx)
    rng = random.Random(ctx.seed + 2)
    b = L.basis
    w = L.target.weights
    for pi_j, wj in zip(L.projection, w):
        assert pi_j.is_homogeneous(wj), "projection is not homogeneous"
    for _ in range(3):
        f = _random_element(b, rng)
        lam = mpq(rng.randint(1, 5), rng.randint(1, 5))
        lhs = project_pi(group_dilate(f, lam), L)
        rhs = tuple(lam ** wj * x for x, wj in zip(project_pi(f, L), w))
        assert lhs == rhs, "projection does not commute with dilations"
        assert tuple(L.projection.evaluate(f.coef)) == project_pi(f, L), "flow and series disagree"
    return 0.0


def _projection_pushforward(ctx: _Context):
    L = _lift(ctx)
    pi = L.projection
    a = L.coordinate_jets()
    dim = L.basis.dim
    for i, Y in enumerate(L.target.fields_inf):
        G = generator_field(i, a)
        for j in range(L.n):
            lhs = sum((pi[j].deriv(k) * G.coef[k] for k in range(dim)), pi[j].like())
            rhs = jet_compose(Y.components[j].with_order(max(Y.order, pi.order)), pi)
            assert lhs == rhs.truncated(lhs.order), f"generator {i + 1}, component {j + 1}"
    return 0.0


def _generation(ctx: _Context):
    L = _lift(ctx)
    rng = random.Random(ctx.seed + 3)
    for _ in range(3):
        f = _random_element(L.basis, rng)
        assert exp_product(generation_word(f), L.basis) == f
    return 0.0


def _blowup_identity(ctx: _Context):
    system = curves.FieldSystem.from_fields(ctx.approx.exponential.fields)
    rng = np.random.default_rng(ctx.seed)
    h = curves.Control.random_arclength(system.r, rng, pieces=8)
    lam = 3.0
    times = np.linspace(0.0, 1.0, 11)
    original = curves.integrate(system, h, np.zeros(system.n), ctx.rk4_step, t_eval=times)
    rescaled = curves.integrate(system.rescaled(lam), h.time_rescaled(lam), np.zeros(system.n),
                                ctx.rk4_step * lam, t_eval=lam * times)
    w = np.asarray(system.weights)
    dilated = original.sample(times) * lam ** w[None]
    residual = float(np.max(np.abs(rescaled.sample(lam * times) - dilated)))
    assert residual < ctx.tol, f"rescaled curve deviates by {residual:.3g}"
    return residual


def _lift_consistency(ctx: _Context):
    L = _lift(ctx)
    rng = np.random.default_rng(ctx.seed + 4)
    h = curves.Control.random_arclength(L.basis.r, rng, pieces=8)
    report = curves.lift_curve(h, L, ctx.rk4_step, tol=ctx.tol)
    assert report.lift_length == report.curve_length
    return report.defect


def _growth(ctx: _Context):
    system = curves.FieldSystem.from_fields(ctx.approx.exponential.fields)
    rng = np.random.default_rng(ctx.seed + 5)
    controls = [curves.Control.random_arclength(system.r, rng) for _ in range(20)]
    times = np.geomspace(1e-3, 1.0, 13)
    corpus = curves.integrate_many(system, controls, np.zeros(system.n), ctx.rk4_step, t_eval=times)
    ratios = curves.growth_ratios(corpus, system.weights, times)
    C = 2 * ratios[:, -1, :].max(axis=0)
    excess = float(np.max(ratios - C[None, None, :]))
    assert excess <= 0, f"growth bound exceeded by {excess:.3g}"
    return max(excess, 0.0)


CHECKS: list[tuple[str, bool, str, Callable]] = [
    ("adapted frame selection", True, "bracket words span the tangent space at the base point", _frame_adapted),
    ("bracket antisymmetry and Jacobi", True, "Lie bracket of polynomial fields", _bracket_identities),
    ("chart inversion", True, "inverse of the exponential chart", _chart_inverse),
    ("exponential coordinates at origin", True, "a_ij(0) = delta_ij in exponential coordinates", _exponential_normalization),
    ("principal part decomposition", True, "clauses i-iv of the principal-part decomposition", _decomposition),
    ("homogeneity of approximation", True, "(delta_lam)_* Y_inf = lam Y_inf", _homogeneity),
    ("nilpotency of step s", True, "brackets of length s+1 vanish identically", _nilpotency),
    ("constant frame determinant", True, "det of the approximate frame is a nonzero constant", _frame_determinant),
    ("identity chart of approximation", True, "approximation is in its own exponential coordinates", _identity_chart),
    ("rescaled brackets converge", True, "lam^-l(J) (delta_lam)_* Y_J -> Y_J_inf at jet level", _rescaled_brackets),
    ("rescaling limit", True, "Y^lam = Y_inf + negative powers of lam", _rescaling_limit),
    ("idempotence", True, "approximation of the approximation is itself", _idempotence),
    ("free algebra dimensions", True, "Hall layers match the Witt formula", _hall_dimensions),
    ("BCH identities", True, "P(A,0)=A, P(A,-A)=0, associativity", _bch_identities),
    ("action property", True, "x.(f f') = (x.f).f'", _action_property),
    ("projection commutes with dilations", True, "pi o dilation = dilation o pi", _projection_dilation),
    ("projection pushes generators", True, "pi_* W_i = Y_i_inf o pi", _projection_pushforward),
    ("generation by layer one", True, "F is generated by exp of the first layer", _generation),
    ("blow-up reparametrization", False, "integrating h(./lam) against Y^lam dilates the curve", _blowup_identity),
    ("lift projection consistency", False, "pi of the lift is the curve, lengths agree", _lift_consistency),
    ("growth estimate", False, "|gamma_j(t)| <= C t^w_j on random arclength controls", _growth),
]


def _run_one(entry, ctx: _Context) -> Check:
    name, exact, citation, fn = entry
    try:
        residual = fn(ctx)
        return Check(name, PASS, exact, float(residual), citation)
    except _Skip as skip:
        return Check(name, SKIPPED, exact, None, citation, str(skip))
    except AssertionError as err:
        return Check(name, FAIL, exact, None, citation, str(err) or "assertion failed")
    except Exception as err:  # surfaced with the originating check name
        detail = f"{type(err).__name__}: {err}"
        tb = traceback.extract_tb(err.__traceback__)
        if tb:
            detail += f" (at {tb[-1].name})"
        return Check(name, FAIL, exact, None, citation, detail)


def run_verification(structure: CCStructure, name: str = "structure", order: int | None = None,
                     max_step: int | None = None, tol: float = 1e-6, rk4_step: float = 1e-3,
                     jobs: int = 1, seed: int = 0) -> VerificationReport:
    """Run every check and collect a report in a fixed order."""
    report = VerificationReport(name)
    try:
        approx = approximate(structure, order, max_step)
    except Exception as err:
        report.checks.append(Check("approximation pipeline", FAIL, True, None,
                                   "frame, chart, decomposition and approximation",
                                   f"{type(err).__name__}: {err}"))
        return report
    ctx = _Context(structure, approx, tol, rk4_step, seed)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            report.checks = list(pool.map(lambda entry: _run_one(entry, ctx), CHECKS))
    else:
        report.checks = [_run_one(entry, ctx) for entry in CHECKS]
    return report
