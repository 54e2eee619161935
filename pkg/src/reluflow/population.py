"""Population-level quantities for deep single-ReLU-neuron models.

Model and conventions
---------------------
The predictor is x -> v_1 ... v_m * relu(w . x): one ReLU neuron with weight
vector w in R^d followed by m scalar layers ("hidden scalars"). Inputs are
standard Gaussian, x ~ N(0, I_d). Labels come from a planted teacher of the
same shape with weight vector target_w and all hidden scalars equal to
target_v (a balanced teacher), so the teacher's scalar product is target_v^m.

The population loss is the expected squared error
    L = (1/2) E_x (v_1...v_m relu(w.x) - target_v^m relu(target_w.x))^2,
which reduces to a closed form in ||w||, the hidden scalars, and the angle
between w and target_w. Everything in this module is that closed form and its
exact gradient; no sampling happens here.

Two angle variables appear throughout the package:

* theta in [0, pi]  — the angle between w and target_w;
* phi = pi - theta  — the "alignment" angle, which increases to pi as the
  neuron converges. Closed forms are stated in whichever variable is cleaner.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateAngleError,
    DimensionError,
    DomainError,
    ZeroVectorError,
)

# Below this norm a vector has no usable direction in float64.
_NORM_FLOOR = 1e-300
# Unit-vector and degenerate-angle tolerances for the moment closed forms.
_UNIT_TOL = 1e-10
_SIN_FLOOR = 1e-10


@dataclass(frozen=True)
class NeuronConfig:
    """Problem instance: dimensions, depth, and the planted teacher.

    target_v is the common value of the teacher's hidden scalars; for a
    balanced teacher it must equal ||target_w||. With m = 0 there are no
    hidden scalars and target_v is conventionally ||target_w||.
    """

    d: int
    m: int
    target_w: np.ndarray
    target_v: float | None = None

    def __post_init__(self) -> None:
        if self.d < 1:
            raise DomainError(f"d={self.d} must be a positive integer")
        if self.m < 0:
            raise DomainError(f"m={self.m} must be a non-negative integer")
        w = np.asarray(self.target_w, dtype=float)
        if w.shape != (self.d,):
            raise DimensionError(f"target_w has shape {w.shape}, expected ({self.d},)")
        norm = float(np.linalg.norm(w))
        if norm < _NORM_FLOOR:
            raise ZeroVectorError("target_w must be nonzero")
        object.__setattr__(self, "target_w", w)
        tv = self.target_v
        if tv is None:
            tv = norm
        tv = float(tv)
        if tv <= 0:
            raise DomainError(f"target_v={tv} must be positive")
        if self.m >= 1 and not math.isclose(tv, norm, rel_tol=1e-9, abs_tol=0.0):
            raise DomainError(
                f"balanced teacher requires target_v == ||target_w|| "
                f"({tv} vs {norm})"
            )
        object.__setattr__(self, "target_v", tv)

    @property
    def target_norm(self) -> float:
        return float(np.linalg.norm(self.target_w))

    @property
    def target_product(self) -> float:
        """Product of the teacher's hidden scalars, target_v^m."""
        return float(self.target_v) ** self.m


@dataclass(frozen=True)
class WeightState:
    """Student parameters: weight vector plus the m hidden scalars."""

    w: np.ndarray
    hidden: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1:
            raise DimensionError(f"w must be a vector, got shape {w.shape}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "hidden", tuple(float(v) for v in self.hidden))

    @property
    def product(self) -> float:
        """Product of the hidden scalars (1.0 when there are none)."""
        return math.prod(self.hidden) if self.hidden else 1.0


@dataclass(frozen=True)
class PolarState:
    """Reduced coordinates of a state: magnitude ||w|| and alignment angle."""

    magnitude: float
    angle: float

    def __post_init__(self) -> None:
        if not (self.magnitude >= 0.0 and math.isfinite(self.magnitude)):
            raise DomainError(f"magnitude {self.magnitude} must be finite and >= 0")
        if not (0.0 <= self.angle <= math.pi):
            raise DomainError(f"angle {self.angle} must lie in [0, pi]")


def _check_unit(u: np.ndarray, name: str) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {u.shape}")
    if abs(float(np.linalg.norm(u)) - 1.0) > _UNIT_TOL:
        raise DomainError(f"{name} must be a unit vector (|norm-1| <= {_UNIT_TOL})")
    return u


def half_space_second_moment(u: np.ndarray) -> np.ndarray:
    """E[ 1{u.x > 0} x x^T ] for x ~ N(0, I): equals I/2 for any unit u."""
    u = _check_unit(u, "u")
    return 0.5 * np.eye(u.shape[0])


def double_wedge_second_moment(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """E[ 1{u.x > 0} 1{v.x > 0} x x^T ] for x ~ N(0, I), unit u and v.

    With theta the angle between u and v, the closed form is

        (1/2)(1 - theta/pi) I
        + (1 / (2 pi sin theta)) [ -cos(theta)(u u^T + v v^T) + v u^T + u v^T ].

    u + v and u - v are eigenvectors, with eigenvalues
    (1/2)(1 - theta/pi) +- sin(theta)/(2 pi).

    Raises DegenerateAngleError when sin(theta) < 1e-10 (parallel or
    antiparallel arguments); the parallel limit is half_space_second_moment.
    """
    u = _check_unit(u, "u")
    v = _check_unit(v, "v")
    if u.shape != v.shape:
        raise DimensionError(f"shape mismatch: {u.shape} vs {v.shape}")
    cos_t = float(np.clip(u @ v, -1.0, 1.0))
    theta = math.acos(cos_t)
    sin_t = math.sin(theta)
    if sin_t < _SIN_FLOOR:
        raise DegenerateAngleError(
            f"u and v are (anti)parallel within tolerance: sin(theta)={sin_t}"
        )
    d = u.shape[0]
    cross = np.outer(v, u) + np.outer(u, v)
    own = np.outer(u, u) + np.outer(v, v)
    return 0.5 * (1.0 - theta / math.pi) * np.eye(d) + (cross - cos_t * own) / (
        2.0 * math.pi * sin_t
    )


def relu_product_moment(theta: float) -> float:
    """E[ relu(u.x) relu(v.x) ] for unit u, v at angle theta, x ~ N(0, I).

    Closed form: (1/2)(1 - theta/pi) cos(theta) + sin(theta) / (2 pi).
    At theta = 0 this is E relu(u.x)^2 = 1/2; at theta = pi it vanishes.
    """
    if not 0.0 <= theta <= math.pi:
        raise DomainError(f"theta={theta} must lie in [0, pi]")
    return 0.5 * (1.0 - theta / math.pi) * math.cos(theta) + math.sin(theta) / (
        2.0 * math.pi
    )


def _angles(config: NeuronConfig, state: WeightState) -> tuple[float, float, float]:
    """Return (norm of w, theta, phi) for a state, or raise on zero w."""
    norm = float(np.linalg.norm(state.w))
    if norm < _NORM_FLOOR:
        raise ZeroVectorError("state weight vector has zero norm")
    cos_t = float(np.clip((state.w @ config.target_w) / (norm * config.target_norm), -1.0, 1.0))
    theta = math.acos(cos_t)
    return norm, theta, math.pi - theta


def _check_state(config: NeuronConfig, state: WeightState) -> None:
    if state.w.shape != (config.d,):
        raise DimensionError(f"w has shape {state.w.shape}, expected ({config.d},)")
    if len(state.hidden) != config.m:
        raise DimensionError(
            f"state has {len(state.hidden)} hidden scalars, config says m={config.m}"
        )


def population_loss(config: NeuronConfig, state: WeightState) -> float:
    """Exact population squared-error loss of a state against the teacher.

    L = (1/2) [ P^2 ||w||^2 / 2  -  2 P P* ||w|| ||w*|| h(theta)
                + P*^2 ||w*||^2 / 2 ],

    where P is the product of the student's hidden scalars, P* the teacher's,
    w* the teacher vector, and h = relu_product_moment. Zero exactly on the
    teacher's function (w aligned with w*, P ||w|| = P* ||w*||).
    """
    _check_state(config, state)
    norm, theta, _ = _angles(config, state)
    p = state.product
    p_star = config.target_product
    t_norm = config.target_norm
    a = 0.5 * p * p * norm * norm
    b = p * p_star * norm * t_norm * relu_product_moment(theta)
    c = 0.5 * p_star * p_star * t_norm * t_norm
    return 0.5 * ((a + c) - 2.0 * b)


def population_gradient(
    config: NeuronConfig, state: WeightState
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of population_loss in (w, hidden scalars).

    Returns (grad_w, grad_hidden) with shapes (d,) and (m,). In the alignment
    angle phi = pi - theta,

        dL/dw   = (P^2 / 2) w
                  - P P* [ (phi / 2 pi) w* + (sin phi / 2 pi)(||w*|| / ||w||) w ]
        dL/dv_k = (P / v_k) [ (P/2) ||w||^2
                              - P* ||w|| ||w*|| (sin phi - phi cos phi)/(2 pi) ].

    The w-gradient is continuous through the aligned and anti-aligned states,
    so no degenerate-angle guard is needed. Hidden scalars must all be
    strictly positive (the formulas assume the sign pattern is preserved,
    which holds along both flow and small-step descent).
    """
    _check_state(config, state)
    if any(v <= 0.0 for v in state.hidden):
        raise DomainError(f"hidden scalars must be positive, got {state.hidden}")
    norm, _, phi = _angles(config, state)
    p = state.product
    p_star = config.target_product
    t_norm = config.target_norm
    sin_phi = math.sin(phi)
    cos_phi = math.cos(phi)

    grad_w = 0.5 * p * p * state.w - p * p_star * (
        (phi / (2.0 * math.pi)) * config.target_w
        + (sin_phi / (2.0 * math.pi)) * (t_norm / norm) * state.w
    )

    if config.m == 0:
        return grad_w, np.zeros(0)
    shared = 0.5 * p * norm * norm - p_star * norm * t_norm * (
        (sin_phi - phi * cos_phi) / (2.0 * math.pi)
    )
    grad_hidden = np.array([(p / v) * shared for v in state.hidden])
    return grad_w, grad_hidden


def polar_of(config: NeuronConfig, state: WeightState) -> PolarState:
    """Reduced coordinates of a state: (||w||, pi - angle(w, target_w))."""
    _check_state(config, state)
    norm, _, phi = _angles(config, state)
    return PolarState(magnitude=norm, angle=phi)
