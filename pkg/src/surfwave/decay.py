"""Nonlinear decay-rate calculus and trajectory certification.

From a feedback law g this module constructs the concave majorant h with
h(s g(s)) >= s^2 + g(s)^2 near the origin, the derived chain

    r(y) = h(y / measSigma),   p = (cI + r)^{-1} (L .),   q = I - (I + p)^{-1},

solves the scalar comparison ODE S' + q(S) = 0, and certifies sampled energy
trajectories against the envelope S(t/T0 - 1) through the discrete
comparison lemma s_{m+1} + p(s_{m+1}) <= s_m.

All inversions are monotone bisections with bracket growth by doubling;
correctness over speed on this certification path.
"""

import math
from dataclasses import dataclass, replace

import numpy as np


class DecayError(ValueError):
    """Raised for invalid chain constructions or unusable trajectories."""


# ---------------------------------------------------------------------------
# monotone functions and inversion


def invert_increasing(f, y, lo=0.0, hi=None, tol=1e-12, max_iter=300):
    """Solve f(x) = y for increasing f with f(lo) <= y.

    The bracket grows by doubling when `hi` is not supplied. Bisection stops
    once the residual |f(x) - y| falls below tol * (1 + |y|) (with an
    interval-width floor at machine precision), so compositions round-trip
    to the same relative accuracy even where f is steep.
    """
    flo = f(lo)
    if y < flo - tol * (1.0 + abs(y)):
        raise DecayError(f"target {y} below f({lo}) = {flo}")
    if abs(flo - y) <= tol * (1.0 + abs(y)):
        return lo
    if hi is None:
        hi = max(lo, 0.0) + 1.0
        for _ in range(300):
            if f(hi) >= y:
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise DecayError("bracket growth failed (function bounded below target?)")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if abs(fmid - y) <= 0.1 * tol * (1.0 + abs(y)):
            return mid
        if fmid < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17 * (1.0 + hi):
            break
    x = 0.5 * (lo + hi)
    if abs(f(x) - y) > tol * (1.0 + abs(y)):
        raise DecayError("bisection stalled before reaching the residual tolerance")
    return x


class MonotoneFn:
    """Strictly increasing scalar function on [0, domain_max or infinity).

    Wraps either a closed form or tabulated samples (linear interpolation);
    strict growth is checked on a sampled grid at construction.
    """

    def __init__(self, fn, domain_max=None, label="", check=True, check_points=1000):
        self._fn = fn
        self.domain_max = domain_max
        self.label = label
        if check:
            top = domain_max if domain_max is not None else 1.0
            xs = np.linspace(0.0, top, check_points)
            ys = np.array([fn(float(x)) for x in xs])
            if np.any(np.diff(ys) <= 0.0):
                raise DecayError(f"function {label or fn!r} is not strictly increasing")

    def __call__(self, x):
        if np.ndim(x) == 0:
            return self._fn(float(x))
        return np.array([self._fn(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))

    def inverse(self, y, tol=1e-12):
        return invert_increasing(self._fn, y, tol=tol)

    @classmethod
    def from_samples(cls, xs, ys, label=""):
        """Piecewise-linear monotone function extended linearly beyond the
        last knot with its final slope."""
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
            raise DecayError("samples must be strictly increasing in x and y")
        end_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])

        def fn(x):
            if x <= xs[-1]:
                return float(np.interp(x, xs, ys))
            return float(ys[-1] + end_slope * (x - xs[-1]))

        return cls(fn, domain_max=None, label=label, check=False)


# ---------------------------------------------------------------------------
# the majorant h


def construct_h(g) -> MonotoneFn:
    """Concave strictly increasing h with h(0) = 0 and
    h(s g(s)) >= s^2 + g(s)^2 for |s| <= 1.

    Closed forms for the linear and power families; any other law gets the
    least concave increasing majorant of the sampled parametric curve
    (s g(s), s^2 + g(s)^2), built as an upper convex hull. The inequality is
    re-verified on a 10^4-point grid.
    """
    if g.kind == "linear":
        k = g.params["slope"]
        coef = (1.0 + k * k) / k
        h = MonotoneFn(lambda y: coef * y, label="h-linear", check=False)
    elif g.kind == "power":
        p = g.params["exponent"]
        expo = 2.0 / (p + 1.0)
        h = MonotoneFn(lambda y: 2.0 * y**expo if y > 0 else 0.0, label="h-power", check=False)
    else:
        h = _hull_majorant(g)
    _verify_majorant(h, g)
    return h


def _hull_majorant(g) -> MonotoneFn:
    s = np.unique(np.concatenate([np.linspace(0.0, 1.0, 20001), _verify_grid()]))
    x = s * g(s)
    y = s**2 + g(s) ** 2
    order = np.argsort(x)
    x, y = x[order], y[order]
    # collapse duplicate abscissae onto their max ordinate
    keep_x, keep_y = [x[0]], [y[0]]
    for xi, yi in zip(x[1:], y[1:]):
        if xi - keep_x[-1] <= 1e-300:
            keep_y[-1] = max(keep_y[-1], yi)
        else:
            keep_x.append(xi)
            keep_y.append(yi)

    hull = []  # upper concave hull, monotone chain
    for pt in zip(keep_x, keep_y):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (pt[1] - y1) - (y2 - y1) * (pt[0] - x1) >= 0.0:
                hull.pop()
            else:
                break
        hull.append(pt)
    xs = np.array([p[0] for p in hull])
    ys = np.array([p[1] for p in hull])
    return MonotoneFn.from_samples(xs, ys, label="h-hull")


def _verify_grid(n: int = 10000) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def _verify_majorant(h, g, rel_slack: float = 1e-9) -> None:
    s = _verify_grid()
    lhs = h(s * g(s))
    rhs = s**2 + g(s) ** 2
    if np.any(lhs < rhs * (1.0 - rel_slack) - 1e-15):
        worst = float((rhs - lhs).max())
        raise DecayError(f"majorant verification failed (worst deficit {worst:.3e})")


# ---------------------------------------------------------------------------
# the chain r, p, q


def build_chain(h: MonotoneFn, meas_sigma: float, a_inf: float, K0: float, L: float):
    """(r, p, q) from the majorant and the run constants.

    r(y) = h(y / meas_sigma); c = K0 / (meas_sigma (1 + a_inf));
    p(x) = (cI + r)^{-1}(L x); q(x) = x - (I + p)^{-1}(x). q is evaluated
    through the equivalent single inversion (c z + r(z))/L + z = x, which
    avoids nesting bisections.
    """
    if L <= 0:
        raise DecayError("L must be positive")
    if meas_sigma <= 0:
        raise DecayError("meas_sigma must be positive")
    c = K0 / (meas_sigma * (1.0 + a_inf))

    def r_fn(y):
        return h(y / meas_sigma)

    def p_fn(x):
        if x <= 0.0:
            return 0.0
        return invert_increasing(lambda t: c * t + r_fn(t), L * x)

    def q_fn(x):
        if x <= 0.0:
            return 0.0
        return invert_increasing(
            lambda z: (c * z + r_fn(z)) / L + z, x, hi=x
        )

    r = MonotoneFn(r_fn, label="r", check=False)
    p = MonotoneFn(p_fn, label="p", check=False)
    q = MonotoneFn(q_fn, label="q", check=False)
    return r, p, q


def chain_constant_c(meas_sigma: float, a_inf: float, K0: float) -> float:
    """c = K0 / (meas_sigma (1 + a_inf)) with K0 = 1/k + K."""
    return K0 / (meas_sigma * (1.0 + a_inf))


# ---------------------------------------------------------------------------
# envelopes


@dataclass
class EnvelopeCurve:
    """Sampled solution of S' = -q(S); linear interpolation between nodes."""

    t: np.ndarray
    S: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.t, self.S)


def solve_envelope(q, S0: float, t_max: float, dt_ode: float = 1e-3, t_eval=None) -> EnvelopeCurve:
    """Integrate S' = -q(S), S(0) = S0 with classical RK4, clipped at 0 and
    forced nonincreasing. Requested t_eval points are hit exactly by
    shortened substeps."""
    if S0 < 0:
        raise DecayError("S0 must be nonnegative")
    nodes = np.arange(0.0, t_max + 0.5 * dt_ode, dt_ode)
    if nodes[-1] < t_max:
        nodes = np.append(nodes, t_max)
    if t_eval is not None:
        extra = np.asarray(t_eval, dtype=np.float64)
        extra = extra[(extra >= 0.0) & (extra <= t_max)]
        nodes = np.unique(np.concatenate([nodes, extra]))

    def rhs(s):
        return -q(max(s, 0.0))

    S = float(S0)
    values = [S]
    for i in range(len(nodes) - 1):
        dt = nodes[i + 1] - nodes[i]
        if dt > 0 and S > 0:
            k1 = rhs(S)
            k2 = rhs(S + 0.5 * dt * k1)
            k3 = rhs(S + 0.5 * dt * k2)
            k4 = rhs(S + dt * k3)
            S = S + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            S = min(max(S, 0.0), values[-1])
        values.append(S)
    return EnvelopeCurve(t=nodes, S=np.array(values))


def closed_form_envelope(kind: str, E0: float, params):
    """The stated closed-form decay bounds as a callable t -> bound.

    'linear' with params (C, k): C exp(-k t) E0. 'power' with params (C, p),
    p > 1: C (E0^((1-p)/2) + t (p-1))^(2/(1-p)). Both give C*E0 at t = 0.
    """
    if kind == "linear":
        C, k = params

        def bound(t):
            return C * math.exp(-k * t) * E0

    elif kind == "power":
        C, p = params
        if p <= 1:
            raise DecayError("power envelope needs p > 1")

        def bound(t):
            return C * (E0 ** ((1.0 - p) / 2.0) + t * (p - 1.0)) ** (2.0 / (1.0 - p))

    else:
        raise DecayError(f"unknown closed form {kind!r}")
    return bound


@dataclass
class DecayEnvelope:
    """The full decay-calculus bundle for one run."""

    h: MonotoneFn
    r: MonotoneFn
    p: MonotoneFn
    q: MonotoneFn
    c: float
    L: float
    K0: float
    meas_sigma: float
    a_inf: float
    T0: float
    S: EnvelopeCurve = None
    closed_form: str = None


def make_envelope(g, meas_sigma: float, a_inf: float, T0: float, L: float = 1.0) -> DecayEnvelope:
    """Assemble the chain for a feedback law; K0 = 1/k_low + K_high."""
    h = construct_h(g)
    K0 = 1.0 / g.k_low + g.K_high
    r, p, q = build_chain(h, meas_sigma, a_inf, K0, L)
    return DecayEnvelope(
        h=h,
        r=r,
        p=p,
        q=q,
        c=chain_constant_c(meas_sigma, a_inf, K0),
        L=L,
        K0=K0,
        meas_sigma=meas_sigma,
        a_inf=a_inf,
        T0=T0,
        closed_form={"linear": "exponential", "power": "polynomial"}.get(g.kind),
    )


# ---------------------------------------------------------------------------
# certification


def sequence_condition(s, p, slack: float = 1e-12) -> bool:
    """Discrete comparison hypothesis: s_{m+1} + p(s_{m+1}) <= s_m for all m
    (with a tiny relative slack for float evaluation)."""
    s = np.asarray(s, dtype=np.float64)
    for m in range(len(s) - 1):
        if s[m + 1] + p(s[m + 1]) > s[m] + slack * (s[0] + abs(s[m])):
            return False
    return True


@dataclass
class CertificationReport:
    sequence_ok: bool
    envelope_ok: bool
    fitted_L: float
    s: np.ndarray
    T0: float
    envelope: DecayEnvelope = None


def certify(traj, env: DecayEnvelope, T0: float, dt_ode: float = 0.01) -> CertificationReport:
    """Fit the largest L whose chain accepts the sampled energy sequence
    s_m = E(m T0), then check domination E(t) <= S(t/T0 - 1) on the samples.

    sequence_ok: some L > 0 satisfies s_{m+1} + p_L(s_{m+1}) <= s_m for all
    m (L is fitted by bisection to 1% relative). envelope_ok: the envelope
    solved from the fitted chain dominates all samples past T0 within a
    1e-9 relative slack.
    """
    t = np.asarray(traj.t, dtype=np.float64)
    E = np.asarray(traj.E, dtype=np.float64)
    if T0 <= 0:
        raise DecayError("T0 must be positive")
    n = int(math.floor(t[-1] / T0 + 1e-9))
    if n < 3:
        raise DecayError(f"trajectory too short: covers {t[-1]:.6g} < 3*T0 = {3 * T0:.6g}")
    s = np.interp(T0 * np.arange(n + 1), t, E)

    def chain_with(L):
        _, pL, qL = build_chain(env.h, env.meas_sigma, env.a_inf, env.K0, L)
        return pL, qL

    def feasible(L):
        pL, _ = chain_with(L)
        return sequence_condition(s, pL)

    report = CertificationReport(
        sequence_ok=False, envelope_ok=False, fitted_L=0.0, s=s, T0=T0
    )
    if np.any(np.diff(s) > 1e-12 * (s[0] + np.abs(s[:-1]))):
        return report  # not even nonincreasing: no L > 0 can work

    lo = 1.0
    if feasible(lo):
        hi = 2.0 * lo
        for _ in range(200):
            if not feasible(hi):
                break
            lo, hi = hi, 2.0 * hi
        else:
            hi = lo  # never binds (fully decayed sequence): cap the fit
    else:
        hi = lo
        lo = 0.5 * hi
        for _ in range(200):
            if feasible(lo):
                break
            hi, lo = lo, 0.5 * lo
        else:
            return report  # no positive L admissible
    while hi - lo > 0.01 * lo:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    fitted_L = lo

    pL, qL = chain_with(fitted_L)
    past = t > T0
    tau = t[past] / T0 - 1.0
    horizon = max(float(t[-1] / T0), float(n) + 1.0)
    S = solve_envelope(qL, s[0], horizon, dt_ode=dt_ode, t_eval=tau)
    envelope_ok = bool(np.all(E[past] <= S(tau) * (1.0 + 1e-9)))

    report.sequence_ok = True
    report.fitted_L = fitted_L
    report.envelope_ok = envelope_ok
    report.envelope = replace(env, L=fitted_L, p=pL, q=qL, S=S)
    return report
