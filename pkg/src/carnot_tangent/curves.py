"""Horizontal curves: integration, blow-ups, tangent lines and lifts.

Controls are piecewise constant.  Vector fields are compiled from exact
polynomial fields to float coefficient tensors and integrated with classical
fixed-step RK4, one piece of the control at a time.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, EscapeError, ShapeError, WindowError


class Control:
    """Piecewise-constant control: ``values[k]`` holds on ``[grid[k], grid[k+1])``."""

    def __init__(self, grid, values):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if grid.ndim != 1 or len(grid) < 2:
            raise ShapeError("control grid needs at least two points")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("control grid must be strictly increasing")
        if values.shape[0] != len(grid) - 1:
            raise ShapeError(f"{values.shape[0]} values for {len(grid) - 1} intervals")
        if not np.all(np.isfinite(values)):
            raise ValueError("control values must be finite")
        self.grid = grid
        self.values = values

    @property
    def r(self) -> int:
        return self.values.shape[1]

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    @classmethod
    def constant(cls, c: Sequence[float], start: float = 0.0, end: float = 1.0) -> "Control":
        return cls([start, end], [list(c)])

    @classmethod
    def from_function(cls, h: Callable[[float], Sequence[float]], start: float, end: float,
                      step: float) -> "Control":
        """Sample ``h`` at the midpoints of a uniform partition with the given step."""
        m = max(1, int(math.ceil((end - start) / step - 1e-9)))
        grid = np.linspace(start, end, m + 1)
        mids = 0.5 * (grid[:-1] + grid[1:])
        return cls(grid, [list(h(t)) for t in mids])

    @classmethod
    def random_arclength(cls, r: int, rng: np.random.Generator, pieces: int = 20,
                         start: float = 0.0, end: float = 1.0,
                         turning: float | None = 0.5) -> "Control":
        """Unit-speed control on equal pieces.

        Directions follow a random walk on the sphere with Gaussian steps of
        size ``turning``; with ``turning=None`` they are drawn independently.
        """
        if turning is None:
            v = rng.normal(size=(pieces, r))
        else:
            v = np.empty((pieces, r))
            d = rng.normal(size=r)
            for k in range(pieces):
                d /= np.linalg.norm(d)
                v[k] = d
                d = d + turning * rng.normal(size=r)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return cls(np.linspace(start, end, pieces + 1), v)

    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def length(self) -> float:
        """``sum_k |h_k| (t_{k+1} - t_k)``."""
        return float(np.sum(self.speeds() * np.diff(self.grid)))

    def is_arclength(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.speeds() - 1.0) <= tol))

    def value_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.grid, t, side="right") - 1, 0, len(self.values) - 1)
        return self.values[k]

    def restrict(self, a: float, b: float) -> "Control":
        lo, hi = self.domain
        if a < lo - 1e-12 or b > hi + 1e-12 or a >= b:
            raise WindowError(f"[{a}, {b}] is not inside the control domain [{lo}, {hi}]")
        a, b = max(a, lo), min(b, hi)
        inner = self.grid[(self.grid > a) & (self.grid < b)]
        grid = np.concatenate([[a], inner, [b]])
        mids = 0.5 * (grid[:-1] + grid[1:])
        return Control(grid, self.value_at(mids))

    def reparametrize(self, t0: float, eta: float) -> "Control":
        """The control ``tau -> h(t0 + eta tau)`` on the corresponding domain."""
        if eta <= 0:
            raise ValueError("eta must be positive")
        return Control((self.grid - t0) / eta, self.values)

    def time_rescaled(self, lam: float) -> "Control":
        """``t -> h(t / lam)`` on ``lam * domain``."""
        if lam <= 0:
            raise ValueError("lam must be positive")
        return Control(self.grid * lam, self.values)

    def to_json(self) -> dict:
        return {"grid": self.grid.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_json(cls, data) -> "Control":
        return cls(data["grid"], data["values"])

    def __repr__(self):
        lo, hi = self.domain
        return f"Control(r={self.r}, pieces={len(self.values)}, domain=[{lo}, {hi}])"


class FieldSystem:
    """Float evaluation of ``r`` polynomial fields on ``R^n``.

    ``coef[i, j, m]`` multiplies monomial ``exps[m]`` in component ``j`` of
    field ``i``.  ``powers[j, m] = w_j - 1 - w(exps[m])`` is the exponent of
    ``lam`` picked up under ``lam^-1 (delta_lam)_*``.
    """

    def __init__(self, exps: np.ndarray, coef: np.ndarray, powers: np.ndarray | None = None,
                 weights: Sequence[int] | None = None):
        self.exps = np.asarray(exps, dtype=np.int64)
        self.coef = np.asarray(coef, dtype=float)
        self.powers = None if powers is None else np.asarray(powers, dtype=np.int64)
        self.weights = None if weights is None else tuple(int(w) for w in weights)
        self.r, self.n, _ = self.coef.shape

    @classmethod
    def from_fields(cls, fields, weights: Sequence[int] | None = None) -> "FieldSystem":
        fields = list(fields)
        n = fields[0].nvars
        w = list(fields[0].weights if weights is None else weights)
        index: dict[tuple, int] = {}
        entries = []
        for i, f in enumerate(fields):
            if f.nvars != n:
                raise ShapeError("fields differ in dimension")
            for j, comp in enumerate(f.components):
                for e, c in comp.terms.items():
                    m = index.setdefault(e, len(index))
                    entries.append((i, j, m, float(c)))
        exps = np.array(sorted(index, key=index.get) or [(0,) * n], dtype=np.int64).reshape(-1, n)
        coef = np.zeros((len(fields), n, len(exps)))
        for i, j, m, c in entries:
            coef[i, j, m] += c
        wa = exps @ np.array(w)
        powers = np.array(w)[:, None] - 1 - wa[None, :]
        return cls(exps, coef, powers, w)

    def rescaled(self, lam: float) -> "FieldSystem":
        """Coefficients of ``lam^-1 (delta_lam)_* Y_i``."""
        if self.powers is None:
            raise ValueError("system has no grading")
        if lam <= 0:
            raise ValueError("lam must be positive")
        scale = np.power(float(lam), self.powers.astype(float))
        return FieldSystem(self.exps, self.coef * scale[None], self.powers, self.weights)

    def limit(self) -> "FieldSystem":
        """Keep only the terms invariant under rescaling (the principal parts)."""
        if self.powers is None:
            raise ValueError("system has no grading")
        mask = (self.powers == 0)[None]
        return FieldSystem(self.exps, np.where(mask, self.coef, 0.0), self.powers, self.weights)

    def monomials(self, X: np.ndarray) -> np.ndarray:
        return np.prod(X[:, None, :] ** self.exps[None, :, :], axis=2)

    def fields_at(self, X: np.ndarray) -> np.ndarray:
        """Array ``(batch, r, n)`` of field values at the points ``X``."""
        return np.einsum("rjm,bm->brj", self.coef, self.monomials(X))

    def velocity(self, X: np.ndarray, H: np.ndarray) -> np.ndarray:
        return np.einsum("br,rjm,bm->bj", H, self.coef, self.monomials(X))


@dataclass
class HorizontalCurve:
    times: np.ndarray
    states: np.ndarray
    control: Control
    label: str = "original"

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} is not a node of the curve")
        return self.states[k]

    def sample(self, times) -> np.ndarray:
        return np.array([self.at(t) for t in times])

    def length(self) -> float:
        lo, hi = self.times[0], self.times[-1]
        c = self.control.restrict(lo, hi) if (lo, hi) != self.control.domain else self.control
        return c.length()


def _nodes(grids: Sequence[np.ndarray], a: float, b: float, step: float, extra=()) -> np.ndarray:
    m = max(1, int(math.ceil((b - a) / step - 1e-9)))
    pts = [np.linspace(a, b, m + 1), np.asarray(list(extra), dtype=float)]
    for g in grids:
        pts.append(g[(g > a) & (g < b)])
    nodes = np.unique(np.concatenate(pts))
    nodes = nodes[(nodes >= a) & (nodes <= b)]
    # merge nodes closer than rounding noise
    keep = np.concatenate([[True], np.diff(nodes) > 1e-13 * max(1.0, abs(b - a))])
    return nodes[keep]


def _rk4_sweep(system: FieldSystem, nodes: np.ndarray, controls: Sequence[Control],
               X0: np.ndarray, bound: float) -> np.ndarray:
    """States at every node, starting from ``X0`` at ``nodes[0]`` (nodes may decrease)."""
    out = np.empty((len(nodes),) + X0.shape)
    out[0] = X = X0
    for k in range(len(nodes) - 1):
        t, t1 = nodes[k], nodes[k + 1]
        dt = t1 - t
        mid = 0.5 * (t + t1)
        H = np.stack([c.value_at(mid) for c in controls])
        k1 = system.velocity(X, H)
        k2 = system.velocity(X + 0.5 * dt * k1, H)
        k3 = system.velocity(X + 0.5 * dt * k2, H)
        k4 = system.velocity(X + dt * k3, H)
        X = X + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(X)) or np.max(np.abs(X)) > bound:
            raise EscapeError(f"state left the box of radius {bound} near t = {t1}")
        out[k + 1] = X
    return out


def integrate_many(system: FieldSystem, controls: Sequence[Control], x0s, step: float = 1e-3,
                   start: float | None = None, t_eval=(), bound: float = 1e8,
                   interval: tuple[float, float] | None = None) -> list[HorizontalCurve]:
    """RK4 integration of several controls at once.

    Every RK4 step lies inside one piece of every control.  Integration runs
    from ``start`` (default: the left end) to both ends of ``interval``
    (default: the common domain of the controls).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    controls = list(controls)
    X0 = np.atleast_2d(np.asarray(x0s, dtype=float))
    if X0.shape[0] == 1 and len(controls) > 1:
        X0 = np.repeat(X0, len(controls), axis=0)
    if X0.shape != (len(controls), system.n):
        raise ShapeError(f"initial states of shape {X0.shape}, expected {(len(controls), system.n)}")
    for c in controls:
        if c.r != system.r:
            raise ShapeError(f"control of rank {c.r} for {system.r} fields")
    a = max(c.domain[0] for c in controls)
    b = min(c.domain[1] for c in controls)
    if interval is not None:
        if interval[0] < a - 1e-12 or interval[1] > b + 1e-12:
            raise WindowError(f"interval {interval} is not inside the control domain [{a}, {b}]")
        a, b = max(interval[0], a), min(interval[1], b)
    start = a if start is None else float(start)
    if not a - 1e-12 <= start <= b + 1e-12:
        raise WindowError(f"start time {start} outside [{a}, {b}]")
    nodes = _nodes([c.grid for c in controls], a, b, step, list(t_eval) + [start])
    s_idx = int(np.argmin(np.abs(nodes - start)))
    forward = _rk4_sweep(system, nodes[s_idx:], controls, X0, bound)
    backward = _rk4_sweep(system, nodes[: s_idx + 1][::-1], controls, X0, bound)
    states = np.concatenate([backward[::-1][:-1], forward], axis=0)
    return [HorizontalCurve(nodes.copy(), states[:, b_], c) for b_, c in enumerate(controls)]


def integrate(system: FieldSystem, control: Control, x0, step: float = 1e-3,
              start: float | None = None, t_eval=(), bound: float = 1e8,
              interval: tuple[float, float] | None = None) -> HorizontalCurve:
    """RK4 solution of ``x' = sum_i h_i(t) Y_i(x)`` with ``x(start) = x0``."""
    return integrate_many(system, [control], [x0], step, start, t_eval, bound, interval)[0]


# -- blow-ups ----------------------------------------------------------------------

def _window(side: str, window: float) -> tuple[float, float]:
    if side == "both":
        return -window, window
    if side == "right":
        return 0.0, window
    if side == "left":
        return -window, 0.0
    raise ValueError(f"side must be 'both', 'right' or 'left', got {side!r}")


def blowup(system: FieldSystem, control: Control, t0: float, eta: float, window: float = 1.0,
           step: float | None = None, side: str = "both", t_eval=()) -> HorizontalCurve:
    """The rescaled curve ``tau -> delta_{1/eta} gamma(t0 + eta tau)``.

    The curve is assumed to pass through the origin at ``t0``.  Instead of
    dilating tiny states, the control ``h(t0 + eta tau)`` is integrated from 0
    against the rescaled fields ``eta (delta_{1/eta})_* Y_i``.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    lo, hi = _window(side, window)
    dlo, dhi = control.domain
    if t0 + eta * lo < dlo - 1e-12 or t0 + eta * hi > dhi + 1e-12:
        raise WindowError(
            f"window [{t0 + eta * lo}, {t0 + eta * hi}] exceeds the control domain [{dlo}, {dhi}]")
    step = (hi - lo) * 1e-3 if step is None else step
    local = control.restrict(max(dlo, t0 + eta * lo), min(dhi, t0 + eta * hi)).reparametrize(t0, eta)
    curve = integrate(system.rescaled(1.0 / eta), local, np.zeros(system.n), step,
                      start=0.0, t_eval=t_eval, interval=(lo, hi))
    curve.label = f"blowup eta={eta:g}"
    return curve


def _blowup_job(args):
    return blowup(*args)


def blowup_family(system: FieldSystem, control: Control, t0: float, etas: Sequence[float],
                  window: float = 1.0, step: float | None = None, side: str = "both",
                  samples: int = 201, jobs: int = 1) -> list[HorizontalCurve]:
    """Blow-ups at every scale, all sampled on a shared uniform window grid."""
    lo, hi = _window(side, window)
    t_eval = np.linspace(lo, hi, samples)
    args = [(system, control, t0, float(e), window, step, side, t_eval) for e in etas]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            curves = list(pool.map(_blowup_job, args))
    else:
        curves = [_blowup_job(a) for a in args]
    for c in curves:
        k = np.clip(np.searchsorted(t_eval, c.times), 1, len(t_eval) - 1)
        near = np.minimum(np.abs(t_eval[k] - c.times), np.abs(t_eval[k - 1] - c.times))
        keep = near < 1e-12
        c.times, c.states = c.times[keep], c.states[keep]
    return curves


def sup_distance(a: HorizontalCurve, b: HorizontalCurve) -> float:
    if len(a.times) != len(b.times) or np.max(np.abs(a.times - b.times)) > 1e-12:
        raise ShapeError("curves are not sampled on the same times")
    return float(np.max(np.abs(a.states - b.states)))


@dataclass
class HalflineVerdict:
    limit_found: bool
    v: np.ndarray | None
    norm_v: float | None
    gaps: list[float]
    residual: float | None

    def to_json(self) -> dict:
        return {
            "limit_found": self.limit_found,
            "v": None if self.v is None else [float(x) for x in self.v],
            "norm_v": self.norm_v,
            "residuals": {"cauchy_gaps": self.gaps, "line_fit": self.residual},
        }


def detect_halfline(family: Sequence[HorizontalCurve], tol: float = 1e-6, r: int | None = None) -> HalflineVerdict:
    """Look for a limit of the form ``tau -> tau v`` in a blow-up family.

    The family must be ordered by decreasing scale and share sample times.
    The last gap between consecutive members and the least-squares line fit of
    the last member must both be below ``tol``.  ``|v|`` is computed from the
    first ``r`` coordinates when ``r`` is given.
    """
    if len(family) < 2:
        raise ValueError("need at least two blow-ups")
    gaps = [sup_distance(a, b) for a, b in zip(family, family[1:])]
    last = family[-1]
    tau = last.times
    v = (tau @ last.states) / float(tau @ tau)
    residual = float(np.max(np.abs(last.states - np.outer(tau, v))))
    found = gaps[-1] < tol and residual < tol
    horiz = v if r is None else v[:r]
    norm = float(np.linalg.norm(horiz))
    if not found:
        return HalflineVerdict(False, None, None, gaps, residual)
    return HalflineVerdict(True, v, norm, gaps, residual)


@dataclass
class LineVerdict:
    is_line: bool
    c: np.ndarray | None
    residual: float
    fitted: np.ndarray = field(default_factory=lambda: np.zeros(0))


def is_horizontal_line(x0: Sequence[float], limit: FieldSystem, tol: float = 1e-6,
                       samples: int = 201, span: float = 1.0) -> LineVerdict:
    """Decide whether ``t -> delta_t(x0)`` is a constant-control curve of ``limit``.

    The constant control is fitted by least squares to the analytic velocity
    on ``t`` in ``[-span, span]``; the curve is accepted when the worst
    pointwise residual is below ``tol``.
    """
    x0 = np.asarray(x0, dtype=float)
    w = np.asarray(limit.weights)
    t = np.linspace(-span, span, samples)
    kappa = np.sign(t)[:, None] ** w[None] * np.abs(t)[:, None] ** w[None] * x0[None]
    vel = w[None] * np.sign(t)[:, None] ** (w[None] - 1) * np.abs(t)[:, None] ** (w[None] - 1) * x0[None]
    F = limit.fields_at(kappa)  # (T, r, n)
    A = np.transpose(F, (0, 2, 1)).reshape(-1, limit.r)
    c, *_ = np.linalg.lstsq(A, vel.reshape(-1), rcond=None)
    residual = float(np.max(np.abs(np.einsum("trj,r->tj", F, c) - vel)))
    ok = residual < tol
    return LineVerdict(ok, x0[: limit.r].copy() if ok else None, residual, c)


@dataclass
class ControlLimitVerdict:
    found: bool
    c: np.ndarray | None
    distances: list[float]
    means: list[np.ndarray]


def _mean_and_l2(control: Control, a: float, b: float) -> tuple[np.ndarray, float]:
    piece = control.restrict(a, b)
    dt = np.diff(piece.grid)
    mean = (dt @ piece.values) / (b - a)
    dist = math.sqrt(float(dt @ np.sum((piece.values - mean) ** 2, axis=1)))
    return mean, dist


def control_blowup_limit(control: Control, t0: float, etas: Sequence[float], window: float = 1.0,
                         tol: float = 1e-3, side: str = "both") -> ControlLimitVerdict:
    """Test whether ``h(t0 + eta .)`` approaches a constant unit vector in L2 on the window.

    Distances are measured in the rescaled variable.  Succeeds when they do not
    increase, the last is below ``tol`` and the last mean has norm within
    ``tol`` of one.
    """
    lo, hi = _window(side, window)
    means, dists = [], []
    for eta in etas:
        local = control.reparametrize(t0, eta)
        m, d = _mean_and_l2(local, lo, hi)
        means.append(m)
        dists.append(d)
    monotone = all(b <= a + 1e-15 for a, b in zip(dists, dists[1:]))
    c = means[-1]
    ok = monotone and dists[-1] < tol and abs(float(np.linalg.norm(c)) - 1.0) < tol
    return ControlLimitVerdict(ok, c if ok else None, dists, means)


# -- growth and lifting ----------------------------------------------------------------

def growth_ratios(curves: Sequence[HorizontalCurve], weights: Sequence[int], times) -> np.ndarray:
    """``|gamma_j(t)| / t^w_j`` with shape ``(curves, times, n)``."""
    w = np.asarray(weights, dtype=float)
    times = np.asarray(times, dtype=float)
    return np.array([np.abs(c.sample(times)) / times[:, None] ** w[None] for c in curves])


class PolynomialMap:
    """Float evaluation of a map given by jets."""

    def __init__(self, components):
        comps = list(components)
        n = comps[0].nvars
        index: dict[tuple, int] = {}
        entries = []
        for j, comp in enumerate(comps):
            for e, c in comp.terms.items():
                entries.append((j, index.setdefault(e, len(index)), float(c)))
        self.exps = np.array(sorted(index, key=index.get) or [(0,) * n], dtype=np.int64).reshape(-1, n)
        self.coef = np.zeros((len(comps), len(self.exps)))
        for j, m, c in entries:
            self.coef[j, m] += c

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        mono = np.prod(X[:, None, :] ** self.exps[None], axis=2)
        return mono @ self.coef.T


@dataclass
class LiftReport:
    lift: HorizontalCurve
    projected: np.ndarray
    direct: HorizontalCurve
    defect: float
    lift_length: float
    curve_length: float


def lifted_system(L) -> FieldSystem:
    """Generator fields of the free group as a float system in Hall coordinates."""
    from .ccfields import PolyVectorField
    from .freecarnot import generator_field

    a = L.coordinate_jets()
    fields = [PolyVectorField(generator_field(i, a).coef) for i in range(L.basis.r)]
    return FieldSystem.from_fields(fields, L.basis.weights)


def lift_curve(control: Control, L, step: float = 1e-3, start=None, tol: float = 1e-5,
               lifted: FieldSystem | None = None, limit: FieldSystem | None = None) -> LiftReport:
    """Integrate the lift of a control to the free group and check its projection.

    The projection of the lift is compared with the curve integrated directly
    against the approximation's fields from the projected start; a sup-norm
    defect above ``tol`` raises :class:`ConsistencyError`.
    """
    lifted = lifted or lifted_system(L)
    limit = limit or FieldSystem.from_fields(L.target.fields_inf)
    start = np.zeros(L.basis.dim) if start is None else np.asarray(start, dtype=float)
    proj = PolynomialMap(L.projection)
    lift = integrate(lifted, control, start, step)
    projected = proj(lift.states)
    direct = integrate(limit, control, proj(start)[0], step)
    defect = float(np.max(np.abs(projected - direct.states)))
    report = LiftReport(lift, projected, direct, defect, lift.length(), direct.length())
    if defect > tol:
        raise ConsistencyError(f"projection of the lift deviates by {defect:.3g} > {tol:g}")
    return report
