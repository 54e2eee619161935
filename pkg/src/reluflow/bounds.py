"""Analytic envelopes that bracket the reduced flow.

Every envelope is anchored at a time anchor_time where the reduced state
(v0, phi0) was observed, and evaluated at elapsed time tau = t - anchor_time.
The anchoring state fixes the gap eps0 = epsilon_gap(phi0); a later anchor has
a smaller gap and therefore a tighter band, which is what re-anchoring
exploits.

Magnitude envelopes
-------------------
For m = 0 the band is a pair of exponential relaxations toward the teacher
magnitude, the lower one damped by (1 - eps0). For m >= 1 both sides are the
solution u(tau; eps) of the frozen-gap equation

    du/dtau = -(1/2) u^m ( u^(m+1) - a ),      a = vstar^(m+1) (1 - eps),

with eps = eps0 (lower) and eps = 0 (upper). m = 1 has a logistic closed
form in u^2. For m >= 2 the equation is solved two independent ways: the
primary path inverts the exact implicit relation

    F(u) - F(v0) = -tau / 2,
    F(v) = v^(1-m) / ((m-1) a) * 2F1(1, (1-m)/(m+1); 2/(m+1); v^(m+1)/a),

by bracketed bisection (F is monotone between v0 and the attractor
a^(1/(m+1))), and the fallback integrates the frozen-gap equation with RK4.
The hypergeometric series needs ~37/(1-z) terms near z = 1, so deep into
convergence the primary path runs out of series budget and, like the
large-start case z >= 1, routes to the fallback. Both paths agree within 1e-6
wherever both are defined, and tests enforce that.

Angle envelopes
---------------
Both sides are the exact solution map of d(phi)/ds = sin(phi) run at constant
worst-case rates: the true angle rate contains v^(m-1), bounded using trusted
magnitude bounds r <= v <= R on the window. The upper side carries a cubic
correction term and is clipped at pi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConvergenceError, DomainError, UnavailableError
from .flow import Trajectory, epsilon_gap
from .special import Hyp2F1Params, find_root_bracketed, hyp2f1

_ODE_DT = 1e-4
_SWEEP_DT = 1e-3


@dataclass(frozen=True)
class BoundEnvelope:
    """An anchored analytic band for one reduced coordinate.

    kind selects the coordinate ('magnitude' or 'angle'); (v0, phi0) is the
    reduced state at anchor_time. r and R are trusted magnitude bounds over
    the checked window, required by angle envelopes (the angle rate depends
    on the magnitude) and unused by magnitude envelopes.
    """

    kind: str
    m: int
    target_norm: float
    phi0: float
    v0: float
    r: float | None = None
    R: float | None = None
    anchor_time: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("magnitude", "angle"):
            raise DomainError(f"unknown envelope kind {self.kind!r}")
        if self.m < 0:
            raise DomainError(f"m={self.m} must be non-negative")
        if self.target_norm <= 0:
            raise DomainError("target_norm must be positive")
        if not 0.0 < self.phi0 < math.pi:
            raise DomainError(f"phi0={self.phi0} must lie strictly inside (0, pi)")
        if self.v0 < 0:
            raise DomainError("v0 must be non-negative")
        if self.m >= 1 and self.v0 == 0:
            # v = 0 is a stationary point of the deep system; the closed
            # forms are stated for positive starts
            raise DomainError("v0 must be positive when m >= 1")
        if self.anchor_time < 0:
            raise DomainError("anchor_time must be non-negative")
        if self.r is not None and self.R is not None and not self.r < self.R:
            raise DomainError(f"need r < R, got r={self.r}, R={self.R}")
        if self.kind == "angle" and (self.r is None or self.R is None):
            raise DomainError("angle envelopes need both magnitude bounds r and R")
        if self.r is not None and self.r <= 0:
            raise DomainError("r must be positive")

    @property
    def eps0(self) -> float:
        """Anchoring gap epsilon_gap(phi0); recomputed, never stored."""
        return epsilon_gap(self.phi0)


@dataclass(frozen=True)
class EnvelopeReport:
    """Outcome of checking a trajectory against an envelope.

    worst_margin is max over checked samples of
    max(lower - value, value - upper): negative means strictly inside,
    anything above the slack used in the check means failure.
    """

    passed: bool
    worst_margin: float
    worst_time: float
    n_checked: int
    times: np.ndarray
    values: np.ndarray
    lowers: np.ndarray
    uppers: np.ndarray


def _elapsed(env: BoundEnvelope, t: float) -> float:
    tau = t - env.anchor_time
    if tau < 0:
        raise DomainError(f"t={t} precedes the envelope anchor {env.anchor_time}")
    return tau


def _require(env: BoundEnvelope, kind: str, wants_m0: bool) -> None:
    if env.kind != kind:
        raise DomainError(f"envelope kind {env.kind!r} does not match evaluator {kind!r}")
    if wants_m0 != (env.m == 0):
        raise DomainError(f"evaluator depth does not match envelope m={env.m}")


def magnitude_bounds_one_layer(env: BoundEnvelope, t: float) -> tuple[float, float]:
    """Magnitude band for m = 0: exponential relaxation toward the teacher.

    lower = (1 - eps0)(1 - e^(-tau/2)) vstar + v0 e^(-tau/2); the upper side
    is the same with eps0 = 0. Both equal v0 at the anchor.
    """
    _require(env, "magnitude", wants_m0=True)
    tau = _elapsed(env, t)
    decay = math.exp(-0.5 * tau)
    grow = (1.0 - decay) * env.target_norm
    return (1.0 - env.eps0) * grow + env.v0 * decay, grow + env.v0 * decay


def angle_bounds_one_layer(env: BoundEnvelope, t: float) -> tuple[float, float]:
    """Angle band for m = 0, run at worst-case rates vstar/(2R) and vstar/(2r).

    lower = pi - 2 cot(phi0/2) exp(-(vstar/2R)(phi0/pi) tau);
    upper = pi - 2 cot(phi0/2) exp(-(vstar/2r) tau)
            + (2/3) cot^3(phi0/2) exp(-3(vstar/2r) tau), clipped to pi.
    """
    _require(env, "angle", wants_m0=True)
    tau = _elapsed(env, t)
    cot = 1.0 / math.tan(env.phi0 / 2.0)
    slow = env.target_norm / (2.0 * env.R)
    fast = env.target_norm / (2.0 * env.r)
    lower = math.pi - 2.0 * cot * math.exp(-slow * (env.phi0 / math.pi) * tau)
    upper = (
        math.pi
        - 2.0 * cot * math.exp(-fast * tau)
        + (2.0 / 3.0) * cot**3 * math.exp(-3.0 * fast * tau)
    )
    return lower, min(upper, math.pi)


def angle_bounds_multilayer(env: BoundEnvelope, t: float) -> tuple[float, float]:
    """Angle band for m >= 1; the magnitude factor v^(m-1) is bounded by r, R.

    lower rate (phi0/2pi) r^(m-1) vstar^(m+1); upper rates
    (1/2) R^(m-1) vstar^(m+1) and three times that for the cubic term.
    """
    _require(env, "angle", wants_m0=False)
    tau = _elapsed(env, t)
    cot = 1.0 / math.tan(env.phi0 / 2.0)
    vpow = env.target_norm ** (env.m + 1)
    slow = (env.phi0 / (2.0 * math.pi)) * env.r ** (env.m - 1) * vpow
    fast = 0.5 * env.R ** (env.m - 1) * vpow
    lower = math.pi - 2.0 * cot * math.exp(-slow * tau)
    upper = (
        math.pi
        - 2.0 * cot * math.exp(-fast * tau)
        + (2.0 / 3.0) * cot**3 * math.exp(-3.0 * fast * tau)
    )
    return lower, min(upper, math.pi)


def _frozen_ode_rhs(m: int, a: float, v: float) -> float:
    return -0.5 * v**m * (v ** (m + 1) - a)


def frozen_gap_magnitude_ode(
    m: int, target_norm: float, eps: float, v0: float, tau: float, dt: float = _ODE_DT
) -> float:
    """u(tau; eps) by fixed-step RK4 on the frozen-gap equation (fallback path)."""
    if m < 1:
        raise DomainError("frozen-gap magnitude paths apply to m >= 1")
    if not 0.0 <= eps <= 1.0:
        raise DomainError(f"eps={eps} must lie in [0, 1]")
    if tau < 0:
        raise DomainError("tau must be non-negative")
    if v0 <= 0:
        raise DomainError("v0 must be positive")
    if tau == 0.0:
        return v0
    a = target_norm ** (m + 1) * (1.0 - eps)
    n = max(1, round(tau / dt))
    h = tau / n
    v = v0
    for _ in range(n):
        k1 = _frozen_ode_rhs(m, a, v)
        k2 = _frozen_ode_rhs(m, a, v + 0.5 * h * k1)
        k3 = _frozen_ode_rhs(m, a, v + 0.5 * h * k2)
        k4 = _frozen_ode_rhs(m, a, v + h * k3)
        v += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return v


def _frozen_antiderivative(m: int, a: float, v: float) -> float:
    """F(v) with F'(v) = 1 / (v^m (v^(m+1) - a)), valid for v^(m+1) < a."""
    z = v ** (m + 1) / a
    params = Hyp2F1Params(1.0, (1.0 - m) / (m + 1.0), 2.0 / (m + 1.0))
    return v ** (1 - m) / ((m - 1) * a) * hyp2f1(params, z)


def frozen_gap_magnitude_implicit(
    m: int, target_norm: float, eps: float, v0: float, tau: float
) -> float:
    """u(tau; eps) by inverting the exact implicit relation (primary path).

    Only defined on the growing branch v0 < a^(1/(m+1)) and for m >= 2 (the
    m = 1 antiderivative is elementary, handled by the closed form).

    Raises UnavailableError when the start sits at or beyond the attractor
    (z >= 1) or when the series budget runs out so close to the attractor
    that the relation cannot be evaluated; callers fall back to the ODE path.
    """
    if m < 2:
        raise DomainError("the implicit path needs m >= 2")
    if not 0.0 <= eps <= 1.0:
        raise DomainError(f"eps={eps} must lie in [0, 1]")
    if tau < 0:
        raise DomainError("tau must be non-negative")
    if v0 <= 0:
        raise DomainError("v0 must be positive")
    a = target_norm ** (m + 1) * (1.0 - eps)
    attractor = a ** (1.0 / (m + 1))
    if v0 >= attractor * (1.0 - 1e-14):
        if abs(v0 - attractor) <= 1e-14 * attractor:
            return attractor if tau > 0 else v0
        raise UnavailableError(
            "implicit path is defined on the growing branch only (v0 below the attractor)"
        )
    if tau == 0.0:
        return v0

    try:
        target = _frozen_antiderivative(m, a, v0) - 0.5 * tau

        def g(u: float) -> float:
            return _frozen_antiderivative(m, a, u) - target

        # F is strictly decreasing here, so g(v0) = tau/2 > 0; march toward
        # the attractor until the sign flips, then bisect.
        gap = attractor - v0
        lo = v0
        hi = None
        for k in range(1, 46):
            cand = attractor - gap * 0.5**k
            val = g(cand)
            if val <= 0.0:
                hi = cand
                break
            lo = cand
        if hi is None:
            # Root is within 2^-45 of the attractor; that candidate is the
            # answer to far better than the cross-path tolerance.
            return lo
        return find_root_bracketed(g, lo, hi, tol=1e-13 * max(1.0, attractor))
    except ConvergenceError as exc:
        raise UnavailableError(f"series budget exhausted near the attractor: {exc}") from exc


def _logistic_magnitude(m1_a: float, v0: float, tau: float) -> float:
    """Closed form of the frozen-gap equation for m = 1: logistic in u^2."""
    denom = 1.0 - (1.0 - m1_a / (v0 * v0)) * math.exp(-m1_a * tau)
    return math.sqrt(m1_a / denom)


def _frozen_gap_magnitude(
    m: int, target_norm: float, eps: float, v0: float, tau: float
) -> float:
    if m == 1:
        return _logistic_magnitude(target_norm**2 * (1.0 - eps), v0, tau)
    try:
        return frozen_gap_magnitude_implicit(m, target_norm, eps, v0, tau)
    except UnavailableError:
        return frozen_gap_magnitude_ode(m, target_norm, eps, v0, tau)


def magnitude_bounds_multilayer(env: BoundEnvelope, t: float) -> tuple[float, float]:
    """Magnitude band for m >= 1: frozen-gap solutions at eps0 and at 0."""
    _require(env, "magnitude", wants_m0=False)
    if env.v0 <= 0:
        raise DomainError("multilayer magnitude bounds need v0 > 0")
    tau = _elapsed(env, t)
    lower = _frozen_gap_magnitude(env.m, env.target_norm, env.eps0, env.v0, tau)
    upper = _frozen_gap_magnitude(env.m, env.target_norm, 0.0, env.v0, tau)
    return lower, upper


def _ode_sweep(m: int, target_norm: float, eps: float, v0: float, taus: np.ndarray) -> np.ndarray:
    """frozen_gap_magnitude_ode evaluated along a sorted grid in one pass."""
    a = target_norm ** (m + 1) * (1.0 - eps)
    out = np.empty(len(taus))
    v = v0
    prev = 0.0
    for i, tau in enumerate(taus):
        span = tau - prev
        if span > 0:
            n = max(1, round(span / _SWEEP_DT))
            h = span / n
            for _ in range(n):
                k1 = _frozen_ode_rhs(m, a, v)
                k2 = _frozen_ode_rhs(m, a, v + 0.5 * h * k1)
                k3 = _frozen_ode_rhs(m, a, v + 0.5 * h * k2)
                k4 = _frozen_ode_rhs(m, a, v + h * k3)
                v += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i] = v
        prev = tau
    return out


def envelope_curve(env: BoundEnvelope, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (lowers, uppers) along an increasing grid of absolute times.

    Closed forms are evaluated directly; the m >= 2 magnitude band is swept
    by a single frozen-gap integration per side, which is what makes
    per-sample envelope checking affordable on long trajectories.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1:
        raise DomainError("times must be a 1-d array")
    if np.any(np.diff(times) < 0):
        raise DomainError("times must be non-decreasing")
    if len(times) and times[0] < env.anchor_time:
        raise DomainError("times precede the envelope anchor")
    taus = times - env.anchor_time

    if env.kind == "angle":
        point = angle_bounds_one_layer if env.m == 0 else angle_bounds_multilayer
        pairs = [point(env, t) for t in times]
        lowers = np.array([p[0] for p in pairs])
        uppers = np.array([p[1] for p in pairs])
        return lowers, uppers

    if env.m == 0:
        decay = np.exp(-0.5 * taus)
        grow = (1.0 - decay) * env.target_norm
        return (1.0 - env.eps0) * grow + env.v0 * decay, grow + env.v0 * decay
    if env.m == 1:
        lowers = np.array([_logistic_magnitude(env.target_norm**2 * (1.0 - env.eps0), env.v0, tau) for tau in taus])
        uppers = np.array([_logistic_magnitude(env.target_norm**2, env.v0, tau) for tau in taus])
        return lowers, uppers
    lowers = _ode_sweep(env.m, env.target_norm, env.eps0, env.v0, taus)
    uppers = _ode_sweep(env.m, env.target_norm, 0.0, env.v0, taus)
    return lowers, uppers


def check_envelope(
    traj: Trajectory,
    env: BoundEnvelope,
    slack: float,
    bounds_fn: Callable[[BoundEnvelope, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None,
) -> EnvelopeReport:
    """Check every sample at t >= anchor_time against the band, with slack.

    A sample fails when it sits more than slack outside [lower, upper]. The
    report keeps the per-sample band so callers can serialize or plot it.
    bounds_fn overrides the band evaluation (descent envelopes are evaluated
    per step index rather than per flow time, but share this machinery).
    """
    if slack < 0:
        raise DomainError("slack must be non-negative")
    mask = traj.times >= env.anchor_time
    times = traj.times[mask]
    if len(times) == 0:
        raise DomainError("no trajectory samples at or after the envelope anchor")
    values = (traj.magnitudes if env.kind == "magnitude" else traj.angles)[mask]
    if bounds_fn is None:
        bounds_fn = envelope_curve
    lowers, uppers = bounds_fn(env, times)
    margins = np.maximum(lowers - values, values - uppers)
    worst = int(np.argmax(margins))
    return EnvelopeReport(
        passed=bool(margins[worst] <= slack),
        worst_margin=float(margins[worst]),
        worst_time=float(times[worst]),
        n_checked=len(times),
        times=times,
        values=values,
        lowers=lowers,
        uppers=uppers,
    )


def reanchored(env: BoundEnvelope, traj: Trajectory, index: int) -> BoundEnvelope:
    """The same band re-anchored at a trajectory sample.

    Reads (v0, phi0, anchor_time) from traj at the given sample index and
    keeps everything else. Later anchors have smaller gaps, hence tighter
    bands over the remaining window.
    """
    state = traj.states[index]
    return BoundEnvelope(
        kind=env.kind,
        m=env.m,
        target_norm=env.target_norm,
        phi0=state.angle,
        v0=state.magnitude,
        r=env.r,
        R=env.R,
        anchor_time=float(traj.times[index]),
    )


def convergence_horizon(
    m: int,
    target_norm: float,
    v0: float,
    phi0: float,
    angle_tol: float = 1e-3,
    mag_tol: float = 1e-3,
) -> float:
    """A time by which the flow provably sits within tolerance of its limit.

    Built from the guaranteed worst-case constants: the angle lower bound run
    at the guaranteed magnitude floor r = min(v0, attractor(eps0)), plus a
    linearized magnitude-settling term at the slowest local rate, with a 30%
    safety factor. Deliberately conservative, never tuned per run.
    """
    if angle_tol <= 0 or mag_tol <= 0:
        raise DomainError("tolerances must be positive")
    eps0 = epsilon_gap(phi0)
    attractor = target_norm * (1.0 - eps0) ** (1.0 / (m + 1))
    r = min(v0, attractor)
    big_r = max(v0, target_norm)
    if m >= 1:
        angle_rate = (phi0 / (2.0 * math.pi)) * r ** (m - 1) * target_norm ** (m + 1)
    else:
        angle_rate = (phi0 / (2.0 * math.pi)) * (target_norm / big_r)
    cot = 1.0 / math.tan(phi0 / 2.0)
    ratio = 2.0 * cot / (0.5 * angle_tol)
    t_angle = math.log(ratio) / angle_rate if ratio > 1.0 else 0.0
    settle_rate = 0.5 * (m + 1) * min(r, target_norm) ** (2 * m)
    gap = max(abs(v0 - target_norm), target_norm)
    t_mag = math.log(gap / (0.5 * mag_tol)) / settle_rate if gap > 0.5 * mag_tol else 0.0
    return 1.3 * (t_angle + t_mag) + 1.0
