"""Config-driven experiment runner: the engine behind the command line.

An experiment is described by a RunConfig (parsed from a plain-text
``key = value`` file), runs deterministically from its seed, and leaves four
kinds of artifacts in its output directory:

* ``trajectory.csv``   — step_or_time, magnitude, angle, loss
* ``bounds.csv``       — step_or_time, kind, lower, upper (re-anchored runs
  write one ``bounds_anchor_<step>.csv`` per anchor instead)
* ``report.json``      — {experiment, seed, checks: [{name, pass, margin}],
  runtime_seconds}
* ``plot.gp``          — a self-contained gnuplot 5 script rendering the CSVs

Floats are serialized at 17 significant digits, so identical configs (seed
included) produce byte-identical CSVs. A check's ``margin`` is its headroom:
positive means it passed with that much room, negative says how far past the
boundary it failed. Checks suffixed ``_advisory`` never fail a run; they
record diagnostics such as a magnitude excursion outside the (r, R) bracket
an angle band was drawn with — when that happens the angle band's premise is
gone, so its own check is downgraded to advisory for that run too.

Scales: defaults are desk scale (d=20, n=2000, T=20000 against the full-scale
d=100, n=10000, T=100000); ``paper_scale`` restores the full-scale values.
Desk runs keep the teacher's expected squared norm by scaling its variance
with 100/d, so every rate constant matches the full-scale dynamics and only
the sampling noise grows.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bounds import BoundEnvelope, check_envelope, convergence_horizon, reanchored
from .descent import (
    DescentConfig,
    ExpFlowForm,
    eta_threshold,
    gd_envelope_curve,
    gd_error_scaling,
    run_gd,
    stopping_time,
)
from .errors import ConfigError, DegenerateAngleError
from .flow import FlowSpec, Trajectory, integrate_polar
from .montecarlo import (
    angle_concentration,
    mc_double_wedge_moment,
    mc_half_space_moment,
    mc_relu_product,
)
from .population import (
    NeuronConfig,
    PolarState,
    WeightState,
    double_wedge_second_moment,
    half_space_second_moment,
    polar_of,
    relu_product_moment,
)

# ---------------------------------------------------------------------------
# configuration

_PAPER = {"d": 100, "n": 10_000, "steps": 100_000}
_DESK = {"d": 20, "n": 2_000, "steps": 20_000}

# Published per-depth settings: learning rate and teacher variance for the
# single-neuron figures (depth = m + 1 layers).
_FIG_ETA = {0: 3e-4, 1: 8e-6, 2: 2e-6}
_FIG_KSTAR = {0: 1.0, 1: 0.5, 2: 0.3}

_REANCHOR = {
    0: {"eta": 6e-4, "steps": 30_000, "anchors": (0, 2_500, 5_000, 7_500)},
    1: {"eta": 1e-4, "steps": 2_000, "anchors": (0, 120, 250, 500)},
}
_REANCHOR_KSTAR = 1.2

# Full-scale depth-5 runs and their desk-size counterparts. The full-scale
# (k, eta) pairs were tuned for the full width/dimension; at desk size
# the large-init forward pass would overflow under them, so desk uses its own
# stable pair exhibiting the same monotone-norm behavior.
_DEEP = {
    "small": {
        "paper": {"k": 0.04, "eta": 8e-4, "steps": 100_000},
        "desk": {"k": 0.04, "eta": 2e-3, "steps": 5_000},
    },
    "large": {
        "paper": {"k": 0.44, "eta": 1e-4, "steps": 30_000},
        "desk": {"k": 0.3, "eta": 2e-4, "steps": 3_000},
    },
}
_DEEP_DEPTH = 5  # weight layers
_DEEP_TARGET_K = 0.1
_DEEP_DIMS = {"paper": {"d": 100, "n": 10_000, "width": 50},
              "desk": {"d": 15, "n": 800, "width": 30}}

_SCALE_RATIO = {"small": 0.1, "middle": 1.0, "large": 2.0}

EXPERIMENTS: dict[str, str] = {
    "flow": "integrate the reduced flow and check it against its analytic bands",
    "gd": "full-batch descent on sampled data, checked against descent-side bands",
    "figure-angle": "angle dynamics of descent inside its analytic band",
    "figure-magnitude": "magnitude dynamics of descent inside its analytic band (m <= 1)",
    "reanchor": "descent magnitude bands re-anchored along the run; bands must tighten",
    "lemma-verify": "Monte Carlo verification of the Gaussian moment closed forms",
    "error-scaling": "flow-vs-descent substitution error as a function of step size",
    "stopping-time": "certified step count, then a run that must beat it",
    "deep-general": "depth-5 ReLU network; parameter norm must move monotonically",
}

_REQUIRED: dict[str, set[str]] = {
    "flow": {"m"},
    "gd": {"m"},
    "figure-angle": {"m", "init_scale"},
    "figure-magnitude": {"m", "init_scale"},
    "reanchor": {"m"},
    "lemma-verify": set(),
    "error-scaling": set(),
    "stopping-time": set(),
    "deep-general": {"init_scale"},
}

_INT_KEYS = {"m", "d", "n", "steps", "seed"}
_FLOAT_KEYS = {"eta", "dt", "t_end", "target_scale", "eps"}
_STR_KEYS = {"experiment", "output_dir"}


@dataclass(frozen=True)
class RunConfig:
    """One experiment's inputs. None means 'use the experiment's default'."""

    experiment: str
    m: int | None = None
    d: int | None = None
    n: int | None = None
    eta: float | None = None
    steps: int | None = None
    init_scale: str | float | None = None
    target_scale: float | None = None
    seed: int = 0
    dt: float | None = None
    t_end: float | None = None
    output_dir: str | None = None
    eps: float | None = None
    anchors: tuple[int, ...] | None = None
    paper_scale: bool = False

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"unknown experiment {self.experiment!r}; known: {sorted(EXPERIMENTS)}"
            )
        missing = _REQUIRED[self.experiment] - {
            k for k in ("m", "init_scale") if getattr(self, k) is not None
        }
        if missing:
            raise ConfigError(
                f"experiment {self.experiment!r} needs keys: {sorted(missing)}"
            )
        if self.m is not None and self.m < 0:
            raise ConfigError("m must be non-negative")
        if isinstance(self.init_scale, str) and self.init_scale not in _SCALE_RATIO:
            raise ConfigError(
                f"init_scale must be one of {sorted(_SCALE_RATIO)} or an explicit variance"
            )


def parse_config_file(path: str | Path) -> RunConfig:
    """Parse a plain-text ``key = value`` config; '#' starts a comment.

    Unknown keys and malformed values are rejected with file/line context.
    """
    path = Path(path)
    values: dict[str, object] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, rhs = line.partition("=")
        key = key.strip()
        rhs = rhs.strip()
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(rhs)
            elif key in _FLOAT_KEYS:
                values[key] = float(rhs)
            elif key in _STR_KEYS:
                values[key] = rhs
            elif key == "init_scale":
                values[key] = rhs if rhs in _SCALE_RATIO else float(rhs)
            elif key == "anchors":
                values[key] = tuple(int(a) for a in rhs.split(","))
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    if "experiment" not in values:
        raise ConfigError(f"{path}: missing required key 'experiment'")
    try:
        return RunConfig(**values)  # type: ignore[arg-type]
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# serialization helpers

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_trajectory(outdir: Path, rows: list[tuple[float, float, float, float]]) -> None:
    lines = ["step_or_time,magnitude,angle,loss"]
    lines += [",".join(_fmt(c) for c in row) for row in rows]
    (outdir / "trajectory.csv").write_text("\n".join(lines) + "\n")


def _trajectory_rows(traj: Trajectory) -> list[tuple[float, float, float, float]]:
    losses = traj.losses if traj.losses is not None else np.full(len(traj.times), math.nan)
    return [
        (float(t), s.magnitude, s.angle, float(l))
        for t, s, l in zip(traj.times, traj.states, losses)
    ]


def _write_bounds(
    outdir: Path,
    per_kind: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]],
    filename: str = "bounds.csv",
) -> None:
    lines = ["step_or_time,kind,lower,upper"]
    for kind, (times, lowers, uppers) in per_kind.items():
        lines += [
            f"{_fmt(float(t))},{kind},{_fmt(float(lo))},{_fmt(float(up))}"
            for t, lo, up in zip(times, lowers, uppers)
        ]
    (outdir / filename).write_text("\n".join(lines) + "\n")


def _plot_script(bounds_files: list[str], kinds: list[str], xlabel: str) -> str:
    panels = []
    for kind in kinds:
        col = 2 if kind == "magnitude" else 3
        series = [
            f"'trajectory.csv' skip 1 using 1:{col} with lines lw 2 title '{kind}'"
        ]
        for bf in bounds_files:
            series.append(
                f"\"{bf}\" skip 1 using 1:(strcol(2) eq '{kind}' ? column(3) : NaN) "
                f"with lines dt 2 lc rgb '#888888' title '{kind} lower'"
            )
            series.append(
                f"\"{bf}\" skip 1 using 1:(strcol(2) eq '{kind}' ? column(4) : NaN) "
                f"with lines dt 3 lc rgb '#888888' title '{kind} upper'"
            )
        panels.append((kind, ", \\\n     ".join(series)))
    out = [
        "# generated by reluflow; render with: gnuplot plot.gp",
        "set datafile separator ','",
        "set terminal svg size 960,540 background rgb 'white'",
        "set output 'figure.svg'",
        f"set xlabel '{xlabel}'",
        "set key outside right",
    ]
    if len(panels) > 1:
        out.append(f"set multiplot layout 1,{len(panels)}")
    for kind, series in panels:
        out.append(f"set ylabel '{kind}'")
        out.append("plot " + series)
    if len(panels) > 1:
        out.append("unset multiplot")
    return "\n".join(out) + "\n"


def _check(name: str, ok: bool, margin: float) -> dict:
    return {"name": name, "pass": bool(ok), "margin": float(margin)}


def _advisory(name: str, margin: float) -> dict:
    return {"name": f"{name}_advisory", "pass": True, "margin": float(margin)}


@dataclass(frozen=True)
class ExperimentResult:
    """Where a run wrote its artifacts and whether every check passed."""

    output_dir: Path
    report: dict
    passed: bool
    files: tuple[str, ...] = field(default_factory=tuple)


def _finalize(
    outdir: Path, experiment: str, seed: int, checks: list[dict], t0: float
) -> ExperimentResult:
    report = {
        "experiment": experiment,
        "seed": int(seed),
        "checks": checks,
        "runtime_seconds": time.monotonic() - t0,
    }
    (outdir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    files = tuple(sorted(p.name for p in outdir.iterdir()))
    return ExperimentResult(
        output_dir=outdir,
        report=report,
        passed=all(c["pass"] for c in checks),
        files=files,
    )


# ---------------------------------------------------------------------------
# problem setup shared by the single-neuron experiments

def _resolve_scales(cfg: RunConfig) -> tuple[int, int, int]:
    base = _PAPER if cfg.paper_scale else _DESK
    d = cfg.d if cfg.d is not None else base["d"]
    n = cfg.n if cfg.n is not None else base["n"]
    steps = cfg.steps if cfg.steps is not None else base["steps"]
    return d, n, steps


def _teacher_variance(cfg: RunConfig, base_kstar: float, d: int) -> float:
    if cfg.target_scale is not None:
        return cfg.target_scale
    # Keep E||target||^2 = d * k at its full-scale value on smaller d.
    return base_kstar * (_PAPER["d"] / d)


def _init_variance(cfg: RunConfig, kstar: float) -> tuple[float, str]:
    scale = cfg.init_scale if cfg.init_scale is not None else "small"
    if isinstance(scale, str):
        return _SCALE_RATIO[scale] * kstar, scale
    ratio = scale / kstar
    label = "small" if ratio < 0.5 else ("middle" if ratio <= 1.5 else "large")
    return float(scale), label


def _draw_problem(
    cfg: RunConfig, d: int, m: int, kstar: float, k: float
) -> tuple[NeuronConfig, WeightState]:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    target = rng.normal(0.0, math.sqrt(kstar), d)
    w0 = rng.normal(0.0, math.sqrt(k), d)
    config = NeuronConfig(d=d, m=m, target_w=target)
    norm0 = float(np.linalg.norm(w0))
    return config, WeightState(w0, (norm0,) * m)


def _rr_recipe(label: str, v0: float, tnorm: float) -> tuple[float, float, list[dict]]:
    """Published magnitude-bracket recipe per init scale, with a safe widening
    (recorded as an advisory) if a random draw makes it degenerate."""
    if label == "small":
        r, R = v0, tnorm
    elif label == "middle":
        r, R = tnorm / 2.0, max(v0, tnorm)
    else:
        r, R = tnorm / 2.0, v0
    checks: list[dict] = []
    if not r < R:
        checks.append(_advisory("rR_recipe_degenerate", r - R))
        r, R = 0.5 * min(v0, tnorm), 1.001 * max(v0, tnorm)
    return r, R, checks


def _out_dir(cfg: RunConfig, *tags: str) -> Path:
    if cfg.output_dir is not None:
        out = Path(cfg.output_dir)
    else:
        parts = [cfg.experiment, *tags, f"seed{cfg.seed}"]
        out = Path("runs") / "-".join(parts)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _envelope_range_slack(lowers: np.ndarray, uppers: np.ndarray) -> float:
    return 0.02 * float(np.max(uppers) - np.min(lowers))


# ---------------------------------------------------------------------------
# experiment runners

def _run_flow(cfg: RunConfig) -> ExperimentResult:
    t0 = time.monotonic()
    m = int(cfg.m)
    d, _, _ = _resolve_scales(cfg)
    kstar = _teacher_variance(cfg, _FIG_KSTAR.get(m, 1.0), d)
    k, label = _init_variance(cfg, kstar)
    config, init = _draw_problem(cfg, d, m, kstar, k)
    polar0 = polar_of(config, init)
    tnorm = config.target_norm

    t_end = cfg.t_end if cfg.t_end is not None else min(
        20.0, convergence_horizon(m, tnorm, polar0.magnitude, polar0.angle)
    )
    dt = cfg.dt if cfg.dt is not None else 1e-3
    spec = FlowSpec(m=m, target_norm=tnorm, initial=polar0, t_end=t_end, dt=dt)
    n_steps = max(1, round(t_end / dt))
    traj = integrate_polar(spec, sample_every=max(1, n_steps // 400))

    outdir = _out_dir(cfg, f"m{m}", label)
    checks: list[dict] = []
    r, R, checks_rr = _rr_recipe(label, polar0.magnitude, tnorm)
    checks += checks_rr

    mag_env = BoundEnvelope("magnitude", m, tnorm, polar0.angle, polar0.magnitude)
    ang_env = BoundEnvelope("angle", m, tnorm, polar0.angle, polar0.magnitude, r=r, R=R)
    slack = 1e-6
    mag_rep = check_envelope(traj, mag_env, slack)
    ang_rep = check_envelope(traj, ang_env, slack)

    vmin, vmax = float(np.min(traj.magnitudes)), float(np.max(traj.magnitudes))
    bracket_ok = r <= vmin and vmax <= R
    checks.append(_advisory("magnitude_bracket", min(vmin - r, R - vmax)))
    checks.append(_check("magnitude_envelope", mag_rep.passed, slack - mag_rep.worst_margin))
    if bracket_ok:
        checks.append(_check("angle_envelope", ang_rep.passed, slack - ang_rep.worst_margin))
    else:
        checks.append(_advisory("angle_envelope", slack - ang_rep.worst_margin))

    _write_trajectory(outdir, _trajectory_rows(traj))
    _write_bounds(
        outdir,
        {
            "magnitude": (mag_rep.times, mag_rep.lowers, mag_rep.uppers),
            "angle": (ang_rep.times, ang_rep.lowers, ang_rep.uppers),
        },
    )
    (outdir / "plot.gp").write_text(
        _plot_script(["bounds.csv"], ["magnitude", "angle"], "time")
    )
    return _finalize(outdir, cfg.experiment, cfg.seed, checks, t0)


def _descent_run(cfg: RunConfig) -> tuple[
    NeuronConfig, WeightState, PolarState, Trajectory, str, float, int, DescentConfig
]:
    m = int(cfg.m)
    d, n, steps = _resolve_scales(cfg)
    kstar = _teacher_variance(cfg, _FIG_KSTAR.get(m, 1.0), d)
    k, label = _init_variance(cfg, kstar)
    config, init = _draw_problem(cfg, d, m, kstar, k)
    eta = cfg.eta if cfg.eta is not None else _FIG_ETA.get(m)
    if eta is None:
        raise ConfigError(f"no default step size for m={m}; set eta explicitly")
    dc = DescentConfig(
        eta=eta,
        steps=steps,
        mode="empirical",
        n_samples=n,
        seed=cfg.seed,
        record_every=max(1, steps // 400),
    )
    traj = run_gd(config, init, dc)
    return config, init, polar_of(config, init), traj, label, eta, steps, dc


def _band_checks(
    traj: Trajectory,
    env: BoundEnvelope,
    eta: float,
    name: str,
    enforce: bool,
) -> tuple[dict, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    rep = check_envelope(traj, env, 0.0, bounds_fn=gd_envelope_curve(env, eta))
    slack = _envelope_range_slack(rep.lowers, rep.uppers)
    ok = rep.worst_margin <= slack
    margin = slack - rep.worst_margin
    check = _check(name, ok, margin) if enforce else _advisory(name, margin)
    return check, (rep.times, rep.lowers, rep.uppers)


def _run_descent_figure(cfg: RunConfig, kinds: list[str]) -> ExperimentResult:
    t0 = time.monotonic()
    m = int(cfg.m)
    if "magnitude" in kinds and m >= 2:
        raise ConfigError("descent-side magnitude bands exist for m <= 1 only")
    config, init, polar0, traj, label, eta, steps, _ = _descent_run(cfg)
    tnorm = config.target_norm
    outdir = _out_dir(cfg, f"m{m}", label)
    checks: list[dict] = []
    r, R, checks_rr = _rr_recipe(label, polar0.magnitude, tnorm)
    checks += checks_rr

    vmin, vmax = float(np.min(traj.magnitudes)), float(np.max(traj.magnitudes))
    bracket_ok = r <= vmin and vmax <= R
    checks.append(_advisory("magnitude_bracket", min(vmin - r, R - vmax)))

    bounds_data: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    for kind in kinds:
        if kind == "magnitude":
            env = BoundEnvelope("magnitude", m, tnorm, polar0.angle, polar0.magnitude)
            enforce = True
        else:
            env = BoundEnvelope(
                "angle", m, tnorm, polar0.angle, polar0.magnitude, r=r, R=R
            )
            enforce = bracket_ok
        check, data = _band_checks(traj, env, eta, f"{kind}_envelope", enforce)
        checks.append(check)
        bounds_data[kind] = data

    thr = eta_threshold(
        BoundEnvelope("angle", m, tnorm, polar0.angle, polar0.magnitude, r=r, R=R)
    )
    checks.append(_check("eta_regime", eta <= 0.1 * thr, 0.1 * thr - eta))

    _write_trajectory(outdir, _trajectory_rows(traj))
    _write_bounds(outdir, bounds_data)
    (outdir / "plot.gp").write_text(_plot_script(["bounds.csv"], kinds, "step"))
    return _finalize(outdir, cfg.experiment, cfg.seed, checks, t0)


def _run_gd_generic(cfg: RunConfig) -> ExperimentResult:
    kinds = ["magnitude", "angle"] if int(cfg.m) <= 1 else ["angle"]
    return _run_descent_figure(cfg, kinds)


def reanchor_experiment(
    cfg: RunConfig, anchor_steps: tuple[int, ...] | None = None
) -> ExperimentResult:
    """Descent run whose magnitude band is re-anchored at the given steps.

    Each anchor writes its own bounds CSV; the bands must all hold and each
    later anchor must have strictly smaller worst margin over its window.
    """
    t0 = time.monotonic()
    m = int(cfg.m)
    if m not in _REANCHOR:
        raise ConfigError("re-anchored magnitude bands exist for m in {0, 1} only")
    defaults = _REANCHOR[m]
    anchors = anchor_steps or cfg.anchors or defaults["anchors"]
    anchors = tuple(sorted(int(a) for a in anchors))
    if anchors[0] < 0:
        raise ConfigError("anchors must be non-negative steps")

    d, n, _ = _resolve_scales(cfg)
    steps = cfg.steps if cfg.steps is not None else defaults["steps"]
    if anchors[-1] >= steps:
        raise ConfigError(f"anchors {anchors} must precede the run length {steps}")
    eta = cfg.eta if cfg.eta is not None else defaults["eta"]
    kstar = _teacher_variance(cfg, _REANCHOR_KSTAR, d)
    k, label = _init_variance(cfg, kstar)
    config, init = _draw_problem(cfg, d, m, kstar, k)

    # Sample stride must divide every anchor so each anchor lands on a sample;
    # among those strides take the largest giving >= ~400 samples.
    g = math.gcd(steps, *(a for a in anchors if a > 0)) if any(anchors) else steps
    target = max(1, steps // 400)
    record = max(s for s in range(1, g + 1) if g % s == 0 and s <= target)
    dc = DescentConfig(
        eta=eta, steps=steps, mode="empirical", n_samples=n, seed=cfg.seed,
        record_every=record,
    )
    traj = run_gd(config, init, dc)
    polar0 = polar_of(config, init)
    tnorm = config.target_norm

    outdir = _out_dir(cfg, f"m{m}", label)
    checks: list[dict] = []
    base_env = BoundEnvelope("magnitude", m, tnorm, polar0.angle, polar0.magnitude)
    worst_slacks: list[float] = []
    bounds_files: list[str] = []
    times_list = list(traj.times)
    for anchor in anchors:
        idx = times_list.index(float(anchor))
        env = reanchored(base_env, traj, idx) if anchor else base_env
        rep = check_envelope(traj, env, 0.0, bounds_fn=gd_envelope_curve(env, eta))
        slack = _envelope_range_slack(rep.lowers, rep.uppers)
        checks.append(
            _check(f"magnitude_envelope_anchor_{anchor}",
                   rep.worst_margin <= slack, slack - rep.worst_margin)
        )
        # How far the band ever sits from the trajectory: the later the
        # anchor, the tighter this must get ("latest bounds are tightest").
        worst_slacks.append(max(
            float(np.max(rep.uppers - rep.values)),
            float(np.max(rep.values - rep.lowers)),
        ))
        fname = f"bounds_anchor_{anchor}.csv"
        _write_bounds(outdir, {"magnitude": (rep.times, rep.lowers, rep.uppers)}, fname)
        bounds_files.append(fname)

    tighten = all(b < a for a, b in zip(worst_slacks, worst_slacks[1:]))
    gaps = [a - b for a, b in zip(worst_slacks, worst_slacks[1:])]
    checks.append(_check("anchors_tighten", tighten, min(gaps) if gaps else 0.0))

    _write_trajectory(outdir, _trajectory_rows(traj))
    (outdir / "plot.gp").write_text(_plot_script(bounds_files, ["magnitude"], "step"))
    return _finalize(outdir, cfg.experiment, cfg.seed, checks, t0)


def _zmax(estimate_value: np.ndarray, closed: np.ndarray, stderr: np.ndarray) -> float:
    err = np.abs(np.asarray(estimate_value) - np.asarray(closed))
    return float(np.max(err / np.maximum(np.asarray(stderr), 1e-300)))


def _run_lemma_verify(cfg: RunConfig) -> ExperimentResult:
    t0 = time.monotonic()
    d = cfg.d if cfg.d is not None else 5
    n = cfg.n if cfg.n is not None else 1_000_000
    # Independent child streams for the direction draw and each estimator.
    kids = [int(c.generate_state(1)[0])
            for c in np.random.SeedSequence(cfg.seed).spawn(7)]
    rng = np.random.default_rng(np.random.SeedSequence(kids[0]))
    while True:
        u = rng.standard_normal(d)
        v = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        try:
            wedge = double_wedge_second_moment(u, v)
            break
        except DegenerateAngleError:  # pragma: no cover - measure zero
            continue
    theta = math.acos(float(np.clip(u @ v, -1.0, 1.0)))
    half = half_space_second_moment(u)
    prod = relu_product_moment(theta)

    checks = []
    cases = [
        ("half_space_gaussian", mc_half_space_moment(u, n, kids[1]), half),
        ("double_wedge_gaussian", mc_double_wedge_moment(u, v, n, kids[2]), wedge),
        ("relu_product_gaussian", mc_relu_product(u, v, n, kids[3]), prod),
        ("half_space_sphere",
         mc_half_space_moment(u, n, kids[4], dist="sphere"), half / d),
        ("double_wedge_sphere",
         mc_double_wedge_moment(u, v, n, kids[5], dist="sphere"), wedge / d),
    ]
    for name, est, closed in cases:
        z = _zmax(est.value, closed, est.stderr)
        checks.append(_check(name, z <= 3.0, 3.0 - z))
    frac, bound = angle_concentration(100, 0.3, 100_000, kids[6])
    checks.append(_check("angle_concentration", frac >= bound, frac - bound))

    outdir = _out_dir(cfg, f"d{d}")
    return _finalize(outdir, cfg.experiment, cfg.seed, checks, t0)


def _run_error_scaling(cfg: RunConfig) -> ExperimentResult:
    t0 = time.monotonic()
    horizon = cfg.t_end if cfg.t_end is not None else 8.0
    etas = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
    v0 = 0.5
    # Frozen-gap flow at m = 1 with unit teacher: du/dt = -(1/2) u (u^2 - 1),
    # whose substitution form is g(x) = 1/sqrt(1 - (1 - 1/v0^2) x) at rate 1.
    form = ExpFlowForm(1.0, lambda x: math.sqrt(1.0 / (1.0 - (1.0 - 1.0 / (v0 * v0)) * x)))
    pairs = gd_error_scaling(form, lambda w: -0.5 * w * (w * w - 1.0), etas, horizon)

    outdir = _out_dir(cfg)
    lines = ["eta,max_error"] + [f"{_fmt(e)},{_fmt(err)}" for e, err in pairs]
    (outdir / "errors.csv").write_text("\n".join(lines) + "\n")

    checks = []
    ratios = [a[1] / b[1] for a, b in zip(pairs, pairs[1:])]
    for (eta, _), ratio in zip(pairs, ratios):
        ok = 1.6 <= ratio <= 2.4
        checks.append(_check(f"halving_ratio_eta_{eta:g}", ok, min(ratio - 1.6, 2.4 - ratio)))
    slope = float(np.polyfit(np.log([p[0] for p in pairs]), np.log([p[1] for p in pairs]), 1)[0])
    checks.append(_check("log_log_slope", 0.8 <= slope <= 1.2, 0.2 - abs(slope - 1.0)))
    return _finalize(outdir, cfg.experiment, cfg.seed, checks, t0)


def _run_stopping_time(cfg: RunConfig) -> ExperimentResult:
    t0 = time.monotonic()
    m = int(cfg.m) if cfg.m is not None else 1
    d, _, _ = _resolve_scales(cfg)
    kstar = _teacher_variance(cfg, _FIG_KSTAR.get(m, 1.0), d)
    cfg_scale = cfg.init_scale if cfg.init_scale is not None else "middle"
    k, label = _init_variance(replace(cfg, init_scale=cfg_scale), kstar)
    config, init = _draw_problem(cfg, d, m, kstar, k)
    polar0 = polar_of(config, init)
    tnorm = config.target_norm
    r, R, checks = _rr_recipe(label, polar0.magnitude, tnorm)

    env = BoundEnvelope("angle", m, tnorm, polar0.angle, polar0.magnitude, r=r, R=R)
    eps = cfg.eps if cfg.eps is not None else 1e-2
    eta = cfg.eta if cfg.eta is not None else 0.005 * eta_threshold(env)
    T = stopping_time(env, eta, eps)

    dc = DescentConfig(eta=eta, steps=T, mode="population",
                       record_every=max(1, T // 400) if T else 1)
    traj = run_gd(config, init, dc)
    final_angle = traj.states[-1].angle
    vmin = float(np.min(traj.magnitudes))
    vmax = float(np.max(traj.magnitudes))
    checks.append(_advisory("magnitude_bracket", min(vmin - r, R - vmax)))
    checks.append(
        _check("angle_beats_target", final_angle > math.pi - eps,
               final_angle - (math.pi - eps))
    )

    outdir = _out_dir(cfg, f"m{m}", label)
    _write_trajectory(outdir, _trajectory_rows(traj))
    rep = check_envelope(traj, env, 0.0, bounds_fn=gd_envelope_curve(env, eta))
    _write_bounds(outdir, {"angle": (rep.times, rep.lowers, rep.uppers)})
    (outdir / "plot.gp").write_text(_plot_script(["bounds.csv"], ["angle"], "step"))
    return _finalize(outdir, cfg.experiment, cfg.seed, checks, t0)


# --- general deep network ---------------------------------------------------

def _mlp_forward_backward(
    weights: list[np.ndarray], x: np.ndarray, y: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    acts = [x]
    pres = []
    h = x
    for w in weights[:-1]:
        z = h @ w
        pres.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    out = (h @ weights[-1])[:, 0]
    n = x.shape[0]
    e = (out - y) / n
    grads: list[np.ndarray] = [None] * len(weights)  # type: ignore[list-item]
    grads[-1] = acts[-1].T @ e[:, None]
    g = e[:, None] @ weights[-1].T
    for i in range(len(weights) - 2, -1, -1):
        g = g * (pres[i] > 0.0)
        grads[i] = acts[i].T @ g
        if i:
            g = g @ weights[i].T
    loss = 0.5 * float(np.mean((out - y) ** 2))
    return loss, grads


def _run_deep_general(cfg: RunConfig) -> ExperimentResult:
    t0 = time.monotonic()
    label = cfg.init_scale if isinstance(cfg.init_scale, str) else None
    if label not in ("small", "large"):
        raise ConfigError("deep-general needs init_scale small or large")
    scale = "paper" if cfg.paper_scale else "desk"
    preset = _DEEP[label][scale]
    sizes = _DEEP_DIMS[scale]
    d = cfg.d if cfg.d is not None else sizes["d"]
    n = cfg.n if cfg.n is not None else sizes["n"]
    steps = cfg.steps if cfg.steps is not None else preset["steps"]
    eta = cfg.eta if cfg.eta is not None else preset["eta"]
    k = cfg.target_scale if cfg.target_scale is not None else preset["k"]

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    dims = [d] + [sizes["width"]] * (_DEEP_DEPTH - 1) + [1]
    teacher = [
        rng.normal(0.0, math.sqrt(_DEEP_TARGET_K), (a, b))
        for a, b in zip(dims, dims[1:])
    ]
    weights = [rng.normal(0.0, math.sqrt(k), (a, b)) for a, b in zip(dims, dims[1:])]
    x = rng.standard_normal((n, d))
    h = x
    for w in teacher[:-1]:
        h = np.maximum(h @ w, 0.0)
    y = (h @ teacher[-1])[:, 0]

    record_every = max(1, steps // 400)
    norms = []
    losses = []
    times = []

    def theta_norm() -> float:
        return math.sqrt(sum(float(np.sum(w * w)) for w in weights))

    loss0, _ = _mlp_forward_backward(weights, x, y)
    times.append(0.0)
    norms.append(theta_norm())
    losses.append(loss0)
    for step in range(steps):
        loss, grads = _mlp_forward_backward(weights, x, y)
        for w, g in zip(weights, grads):
            w -= eta * g
        if (step + 1) % record_every == 0 or step + 1 == steps:
            nrm = theta_norm()
            if not math.isfinite(nrm) or nrm > 1e12:
                raise ConfigError(f"deep run blew up at step {step + 1}")
            times.append(float(step + 1))
            norms.append(nrm)
            losses.append(_mlp_forward_backward(weights, x, y)[0])

    burn = max(1, math.ceil(0.01 * steps))
    recorded = np.array(norms)
    rec_times = np.array(times)
    after = recorded[rec_times >= burn]
    diffs = np.diff(after)
    tol = 1e-9 * float(np.max(recorded))
    if label == "small":
        worst = float(np.min(diffs)) if len(diffs) else 0.0
        ok = worst >= -tol
        margin = worst + tol
    else:
        worst = float(np.max(diffs)) if len(diffs) else 0.0
        ok = worst <= tol
        margin = tol - worst
    checks = [
        _check("norm_monotone_after_burn_in", ok, margin),
        _check("loss_decreased", losses[-1] < losses[0], losses[0] - losses[-1]),
    ]

    outdir = _out_dir(cfg, label)
    rows = [(t, nr, math.nan, ls) for t, nr, ls in zip(times, norms, losses)]
    _write_trajectory(outdir, rows)
    (outdir / "plot.gp").write_text(_plot_script([], ["magnitude"], "step"))
    return _finalize(outdir, cfg.experiment, cfg.seed, checks, t0)


# ---------------------------------------------------------------------------

def run_experiment(cfg: RunConfig) -> ExperimentResult:
    """Run one experiment to completion and write its artifacts."""
    if cfg.experiment == "flow":
        return _run_flow(cfg)
    if cfg.experiment == "gd":
        return _run_gd_generic(cfg)
    if cfg.experiment == "figure-angle":
        return _run_descent_figure(cfg, ["angle"])
    if cfg.experiment == "figure-magnitude":
        return _run_descent_figure(cfg, ["magnitude"])
    if cfg.experiment == "reanchor":
        return reanchor_experiment(cfg)
    if cfg.experiment == "lemma-verify":
        return _run_lemma_verify(cfg)
    if cfg.experiment == "error-scaling":
        return _run_error_scaling(cfg)
    if cfg.experiment == "stopping-time":
        return _run_stopping_time(cfg)
    if cfg.experiment == "deep-general":
        return _run_deep_general(cfg)
    raise ConfigError(f"unknown experiment {cfg.experiment!r}")  # pragma: no cover
