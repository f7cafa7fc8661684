"""End-to-end synthesis: target moduli curve -> piecewise-constant control.

The chain is: truncation rank, odd fit of the rotation-angle curve,
bracket program, pulse train of the auxiliary two-level system, one
averaging stage per train segment (followed by a free-evolution pause
that realigns the eigenphases), then an ensemble simulation of the
concatenated control.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from math import ceil, pi
from pathlib import Path

import numpy as np

from .averaging import (
    DEFAULT_STEPS_PER_PERIOD,
    compute_constants,
    design_periodic_pulse,
    error_bound,
    find_phase_alignment,
    rotation_stage,
)
from .errors import AssumptionError, BudgetExhausted, ToleranceUnreachable
from .galerkin import (
    EnsembleReport,
    PiecewiseControl,
    block_moduli,
    ensemble_propagate,
    target_moduli,
)
from .linalg import matrix_exp, operator_norm
from .rotor import build_planar_rotor, smoothstep_modulus
from .spectral import (
    SpectralModel,
    TruncatedSystem,
    load_model,
    model_from_dict,
    tail_norm,
    truncate,
    truncation_rank,
    validate_assumptions,
)
from .su2 import (
    OddAngleCurve,
    PulseTrain,
    aux_pair,
    fit_odd_angle_curve,
    program_from_curve,
    synthesize_pulse_train,
)

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    model: dict = field(default_factory=lambda: {"preset": "planar_rotor", "dimension": 9})
    N: int | None = None
    target: dict = field(default_factory=lambda: {"kind": "identity"})
    epsilon: float = 0.05
    delta: float = 1.0
    alpha_points: int = 21
    fit_points: int = 201
    degree_cap: int = 9
    fit_tolerance: float = 1e-3
    fit_best_effort: bool = False
    horizon: float = 1.0
    split_n: int = 8
    averaging_n: float = 8.0
    pulse_shape: str = "cosine"
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD
    whole_periods: bool = True
    phase_epsilon: float = 1e-6
    phase_horizon: float | None = None
    max_segments: int = 5_000_000
    max_duration: float = 1e7
    max_stages: int = 200_000
    budget_scales: list = field(default_factory=list)
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if self.epsilon <= 0 or self.delta <= 0:
            raise ValueError("epsilon and delta must be positive")
        if self.degree_cap < 1 or self.degree_cap % 2 == 0:
            raise ValueError("degree_cap must be odd")
        if self.alpha_points < 2:
            raise ValueError("alpha grid needs at least two points")

    @property
    def alpha_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.alpha_points)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            doc = json.load(fh)
        cfg = cls.from_dict(doc)
        # relative paths are resolved against the config's directory
        out = Path(cfg.output_dir)
        if not out.is_absolute():
            cfg.output_dir = str(Path(path).parent / out)
        if "file" in cfg.model:
            p = Path(cfg.model["file"])
            if not p.is_absolute():
                cfg.model = {**cfg.model, "file": str(Path(path).parent / p)}
        return cfg

    def scaled(self, k: float) -> "PipelineConfig":
        doc = asdict(self)
        doc["split_n"] = int(round(self.split_n * k))
        doc["averaging_n"] = self.averaging_n * k
        doc["budget_scales"] = []
        return PipelineConfig(**doc)


def build_model(doc: dict) -> SpectralModel:
    if "preset" in doc:
        if doc["preset"] != "planar_rotor":
            raise ValueError(f"unknown preset {doc['preset']!r}")
        return build_planar_rotor(int(doc.get("dimension", 9)))
    if "file" in doc:
        return load_model(doc["file"])
    return model_from_dict(doc)


def target_curve(doc: dict):
    """Modulus target m(alpha) as a vectorised callable."""
    kind = doc.get("kind", "identity")
    if kind == "identity":
        return lambda a: np.ones_like(np.asarray(a, dtype=float))
    if kind == "cosine":
        c = float(doc["c"])
        return lambda a: np.abs(np.cos(c * np.asarray(a, dtype=float)))
    if kind == "orientation":
        lo = np.sin(doc.get("keep_below", pi / 6))
        hi = np.sin(doc.get("transfer_above", pi / 3))
        return lambda a: smoothstep_modulus(a, lo, hi)
    if kind == "table":
        xs = np.asarray(doc["alpha"], dtype=float)
        ys = np.asarray(doc["modulus"], dtype=float)
        return lambda a: np.interp(a, xs, ys)
    raise ValueError(f"unknown target kind {kind!r}")


def fit_target(m, cfg: PipelineConfig) -> tuple[OddAngleCurve, list[dict]]:
    """Lowest odd degree meeting the tolerance, up to the cap."""
    a = np.linspace(0.0, 1.0, cfg.fit_points)
    rho = np.arccos(np.clip(m(a), -1.0, 1.0))
    if abs(rho[0]) > 1e-12:
        raise ValueError("target must be the identity at alpha = 0")
    samples = list(zip(a, rho))
    history = []
    chosen = None
    curve = None
    # every degree up to the cap is fitted so the summary shows the floor per degree
    for degree in range(1, cfg.degree_cap + 1, 2):
        curve = fit_odd_angle_curve(samples, degree, cfg.fit_tolerance)
        floor = np.max(np.abs(np.abs(np.cos(curve(a))) - np.clip(m(a), 0.0, 1.0)))
        history.append({"degree": degree, "sup_error": curve.sup_error,
                        "modulus_floor": float(floor)})
        if chosen is None and curve.converged:
            chosen = curve
    if chosen is not None:
        return chosen, history
    if cfg.fit_best_effort:
        return curve, history
    raise ToleranceUnreachable(
        f"odd fit of degree <= {cfg.degree_cap} reaches {curve.sup_error:.3g} "
        f"> tolerance {cfg.fit_tolerance:.3g}"
    )


@dataclass
class Stage:
    nu: float
    rotation: float
    n: float
    duration: float
    pause: float
    control: PiecewiseControl
    bound: float
    phase_defect: float
    measured: float | None = None

    @property
    def key(self):
        return (self.nu, self.rotation)

    def full_control(self) -> PiecewiseControl:
        return self.control + PiecewiseControl.pause(self.pause)


def _wrap(x: float) -> float:
    return float((x + pi) % (2 * pi) - pi)


@dataclass
class Synthesis:
    config: PipelineConfig
    model: SpectralModel
    system: TruncatedSystem
    curve: OddAngleCurve
    fit_history: list
    program: object
    train: PulseTrain
    stages: dict
    order: list
    control: PiecewiseControl
    summary: dict


class _StageBuilder:
    def __init__(self, system: TruncatedSystem, cfg: PipelineConfig):
        self.system = system
        self.cfg = cfg
        self.normB = operator_norm(system.B)
        self._pulses: dict = {}
        self.stages: dict = {}
        self.n_min = max(cfg.averaging_n, 1.0 / cfg.delta)

    def _pulse(self, nu: float):
        if nu not in self._pulses:
            pulse = design_periodic_pulse(self.system, nu, self.cfg.pulse_shape)
            self._pulses[nu] = (pulse, compute_constants(self.system, pulse))
        return self._pulses[nu]

    def stage(self, nu: float, r: float) -> Stage:
        key = (nu, r)
        if key in self.stages:
            return self.stages[key]
        cfg = self.cfg
        pulse, const = self._pulse(nu)
        n, duration, ctrl = rotation_stage(
            self.system, pulse, const, r, self.n_min, cfg.steps_per_period,
            whole_periods=cfg.whole_periods,
        )
        horizon = cfg.phase_horizon or 1000.0 * pulse.period
        rstar = pulse.period / cfg.steps_per_period
        align = find_phase_alignment(
            self.system.lambdas, rstar, cfg.phase_epsilon, horizon, offset=duration
        )
        st = Stage(
            nu=nu,
            rotation=r,
            n=n,
            duration=duration,
            pause=align.s,
            control=ctrl,
            bound=error_bound(const, self.normB, n),
            phase_defect=align.max_defect,
        )
        self.stages[key] = st
        return st


def _stage_keys(train: PulseTrain, b12: complex) -> list[tuple[float, float]]:
    """Each train segment becomes one or more (nu, r) rotations, r |b12| <= pi/2."""
    base = {"X": pi / 2, "Y": 0.0}
    limit = pi / (2 * abs(b12))
    keys = []
    for tag, d in train.segments:
        if d == 0:
            continue
        nu = base[tag] if d > 0 else _wrap(base[tag] + pi)
        r = abs(d)
        pieces = max(1, ceil(r / limit - 1e-12))
        keys.extend([(nu, r / pieces)] * pieces)
    return keys


def pipeline_dimension(cfg: PipelineConfig, model: SpectralModel) -> tuple[int, int, float]:
    """(N, N from the tail criterion, largest stage rotation)."""
    r_max = pi / (2 * abs(model.b12))
    N_rank = truncation_rank(model, cfg.epsilon, r_max)
    return max(N_rank, cfg.N or 2), N_rank, r_max


def synthesize(cfg: PipelineConfig) -> Synthesis:
    model = build_model(cfg.model)
    report = validate_assumptions(model)
    if not report.passed:
        raise AssumptionError(report)
    b12 = model.b12
    N, N_rank, r_max = pipeline_dimension(cfg, model)
    system = truncate(model, N)

    m = target_curve(cfg.target)
    curve, history = fit_target(m, cfg)
    X, Y = aux_pair(b12)
    program = program_from_curve(curve, X, Y, cfg.horizon)
    train = synthesize_pulse_train(program, cfg.split_n)
    keys = _stage_keys(train, b12)
    if len(keys) > cfg.max_stages:
        raise BudgetExhausted(f"{len(keys)} averaging stages exceed the cap {cfg.max_stages}")

    builder = _StageBuilder(system, cfg)
    total_segments = 0
    total_time = 0.0
    for key in keys:
        st = builder.stage(*key)
        total_segments += len(st.control) + (st.pause > 0)
        total_time += st.duration + st.pause
        if total_segments > cfg.max_segments or total_time > cfg.max_duration:
            raise BudgetExhausted(
                f"control exceeds budget ({total_segments} segments, duration {total_time:.6g})"
            )
    control = PiecewiseControl.concatenate(builder.stages[k].full_control() for k in keys)
    if control.max_amplitude > cfg.delta * (1 + 1e-12):
        raise BudgetExhausted("emitted control violates the amplitude bound")

    try:
        K0 = compute_constants(system, design_periodic_pulse(system, 0.0, cfg.pulse_shape)).K
    except ValueError:
        K0 = None
    summary = {
        "model": model.name,
        "N": N,
        "N_from_tail": N_rank,
        "epsilon": cfg.epsilon,
        "delta": cfg.delta,
        "thresholds": {
            "tail_5eps_over_2r": 5 * cfg.epsilon / (2 * r_max),
            "tail_eps_over_K": None if K0 is None else cfg.epsilon / K0,
            "r_used": r_max,
        },
        "tail_norm_pi2": tail_norm(model, N) if N < model.dimension else 0.0,
        "fit": {
            "degree": curve.degree,
            "coefficients": list(curve.coefficients),
            "sup_error": curve.sup_error,
            "converged": curve.converged,
            "history": history,
        },
        "program": [{"beta": t.beta, "word": t.word, "length": t.length} for t in program.terms],
        "split_n": cfg.split_n,
        "train_segments": len(train),
        "stages": len(keys),
        "unique_stages": len(builder.stages),
        "control_segments": len(control),
        "control_duration": control.total_duration,
        "max_amplitude": control.max_amplitude,
        "averaging_n_min": builder.n_min,
        "averaging_constants": {
            f"{nu:.6f}": const.as_dict() for nu, (_, const) in builder._pulses.items()
        },
        "control_reading": "u_n = u*/n with real n >= averaging_n; stages span whole periods"
        if cfg.whole_periods else "u_n = u*/n",
    }
    return Synthesis(cfg, model, system, curve, history, program, train,
                     builder.stages, keys, control, summary)


def _stage_propagators(syn: Synthesis, alphas: np.ndarray) -> dict:
    """Per unique stage: propagator incl. pause, and measured tracking error."""
    out = {}
    sysm = syn.system
    for key, st in syn.stages.items():
        U = ensemble_propagate(sysm, st.control, alphas)
        if st.control is not None and len(st.control):
            pulse = design_periodic_pulse(sysm, st.nu, syn.config.pulse_shape)
            const = compute_constants(sysm, pulse)
            v = pulse.abs_integral(st.duration) / st.n
            phase = np.exp(st.duration * np.diag(sysm.A))
            errs = [
                operator_norm(U[i] - phase[:, None] * matrix_exp(v * a * const.Mdagger))
                for i, a in enumerate(alphas)
            ]
            st.measured = float(max(errs))
        if st.pause > 0:
            U = np.exp(st.pause * np.diag(sysm.A))[None, :, None] * U
        out[key] = U
    return out


def simulate_synthesis(syn: Synthesis, alphas=None) -> tuple[EnsembleReport, np.ndarray]:
    """Ensemble simulation reusing the propagator of each distinct stage."""
    a = syn.config.alpha_grid if alphas is None else np.asarray(alphas, dtype=float)
    props = _stage_propagators(syn, a)
    N = syn.system.N
    U = np.broadcast_to(np.eye(N, dtype=complex), (a.size, N, N)).copy()
    for key in syn.order:
        U = props[key] @ U
    m = target_curve(syn.config.target)
    return EnsembleReport(a, block_moduli(U), target_moduli(m(a))), U


def certified_slack(syn: Synthesis, report: EnsembleReport) -> float:
    """Grid-to-continuum slack: Lipschitz constants of simulated and target moduli
    in alpha times half the grid spacing."""
    a = report.alpha_grid
    h = float(np.max(np.diff(a))) if a.size > 1 else 1.0
    lip_sim = operator_norm(syn.system.B) * syn.control.abs_integral()
    dense = np.linspace(0, 1, 2001)
    tm = target_moduli(target_curve(syn.config.target)(dense))
    lip_tgt = float(np.max(np.abs(np.diff(tm, axis=0))) / (dense[1] - dense[0]))
    return (lip_sim + lip_tgt) * h / 2


def run_pipeline(cfg: PipelineConfig, write: bool = True) -> tuple[EnsembleReport, dict]:
    syn = synthesize(cfg)
    report, _ = simulate_synthesis(syn)
    summary = dict(syn.summary)
    summary["sup_error"] = report.sup_error
    summary["certified_slack"] = certified_slack(syn, report)
    summary["fit_floor_modulus"] = _fit_floor(syn)
    summary["stage_table"] = [
        {
            "nu": st.nu,
            "rotation": st.rotation,
            "n": st.n,
            "duration": st.duration,
            "pause": st.pause,
            "phase_defect": st.phase_defect,
            "bound": st.bound,
            "measured": st.measured,
        }
        for st in syn.stages.values()
    ]
    if cfg.budget_scales:
        trend = []
        for k in cfg.budget_scales:
            sub = cfg.scaled(k)
            r_k, s_k = run_pipeline(sub, write=False)
            trend.append({
                "scale": k,
                "split_n": sub.split_n,
                "averaging_n": sub.averaging_n,
                "sup_error": r_k.sup_error,
                "control_duration": s_k["control_duration"],
            })
        summary["trend"] = trend
    if write:
        write_outputs(cfg.output_dir, syn, report, summary)
    return report, summary


def _fit_floor(syn: Synthesis) -> float:
    """Sup moduli error of the exact fitted rotation, i.e. with perfect synthesis."""
    a = syn.config.alpha_grid
    m = target_curve(syn.config.target)(a)
    achieved = np.abs(np.cos(syn.curve(a)))
    return float(np.max(np.abs(target_moduli(achieved) - target_moduli(m))))


def write_outputs(outdir, syn: Synthesis, report: EnsembleReport, summary: dict) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "control.csv").write_text(syn.control.to_csv())
    (out / "pulse_train.json").write_text(syn.train.to_json())
    (out / "report.csv").write_text(report.to_csv())
    (out / "summary.json").write_text(json.dumps(summary, indent=1, default=jsonable))


def jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"cannot serialise {type(x)}")
