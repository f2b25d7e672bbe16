"""Command-line front end: simulate, classify, infer, sweep, models list.

Experiments are described by a YAML config (sections for model, params,
lyapunov, target, inference, ...) with ``--set key=value`` overrides; flags
win over the file.  Every command writes a RunManifest next to its outputs,
and identical manifest inputs reproduce output files byte for byte: all
randomness flows from the single config seed through spawned counter-based
generators.

Exit codes: 0 success/converged, 1 validation, 2 numerical failure,
3 non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__, backend, dsl
from .errors import (
    CovarianceError,
    DivergenceError,
    ModelLookupError,
    QualdynError,
    RegimeLostError,
    StiffnessError,
    ValidationError,
)
from .lyapunov import (
    DELTA_TOL_DEFAULT,
    OSC_TOL_DEFAULT,
    LEConfig,
    classify,
    estimate_spectrum,
    kaplan_yorke_dimension,
    spectrum_record,
)
from .models import ConstraintMap, ModelSystem, builtin, zoo_names
from .odeint import IntegratorConfig, integrate
from .qualinf import (
    InferenceConfig,
    TargetSpec,
    best_run,
    run_multi_start,
    sweep,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_NO_CONVERGENCE = 3

_CIRCUIT_CONSTANTS = ("epsilon", "b", "c")


# --------------------------------------------------------------------------
# Config assembly
# --------------------------------------------------------------------------

@dataclass
class ParamSpec:
    name: str
    free: bool = False
    init: float | None = None
    lo: float | None = None
    hi: float | None = None
    dist: str = "uniform"  # uniform | loguniform over (lo, hi)


@dataclass
class ExperimentConfig:
    """Validated experiment description shared by all commands."""

    raw: dict
    model: ModelSystem
    model_def: dsl.ModelDef | None
    params: list[ParamSpec]
    initial_state: np.ndarray
    integrator: IntegratorConfig
    le_config: LEConfig
    delta_tol: float
    osc_tol: float
    target: TargetSpec | None
    inference: dict
    simulate: dict
    sweep_opts: dict
    outdir: Path
    seed: int
    workers: int
    config_path: Path | None
    model_file: Path | None

    @property
    def free_specs(self) -> list[ParamSpec]:
        return [p for p in self.params if p.free]

    @property
    def free_indices(self) -> list[int]:
        names = list(self.model.param_names)
        return [names.index(p.name) for p in self.free_specs]

    def theta_init(self) -> np.ndarray:
        return np.array([p.init for p in self.params], dtype=float)


def _expect_mapping(value, path: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ValidationError("expected a mapping", field=path)
    return value


def _get_number(section: dict, key: str, path: str, default=None):
    if key not in section or section[key] is None:
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError("expected a number", field=f"{path}.{key}")
    return float(value)


def _get_int(section: dict, key: str, path: str, default=None):
    value = _get_number(section, key, path, default)
    if value is None:
        return None
    if value != int(value):
        raise ValidationError("expected an integer", field=f"{path}.{key}")
    return int(value)


def _build_model(cfg: dict, model_file: Path | None):
    name = cfg.get("model")
    file_entry = cfg.get("model_file") or model_file
    if name and file_entry:
        raise ValidationError("give either a zoo model or a model file, "
                              "not both", field="model")
    constants = _expect_mapping(cfg.get("constants"), "constants")
    if file_entry:
        path = Path(file_entry)
        if not path.exists():
            raise ValidationError(f"model file not found: {path}",
                                  field="model_file")
        model_def = dsl.parse_model(path.read_text(encoding="utf-8"))
        model = dsl.to_model_system(model_def, name=path.stem)
        return model, model_def, path
    if not name:
        raise ValidationError("a model (or model_file) is required",
                              field="model")
    if name == "circuit":
        missing = [k for k in _CIRCUIT_CONSTANTS if k not in constants]
        if missing:
            raise ValidationError(
                "circuit requires constants "
                + ", ".join(f"constants.{k}" for k in missing),
                field="constants")
    try:
        model = builtin(name, **constants)
    except ModelLookupError as exc:
        raise ValidationError(str(exc), field="model") from exc
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc), field="constants") from exc
    return model, None, None


def _build_params(cfg: dict, model: ModelSystem, need_defaults: bool
                  ) -> list[ParamSpec]:
    section = _expect_mapping(cfg.get("params"), "params")
    known = set(model.param_names)
    for key in section:
        if key not in known:
            raise ValidationError(
                f"unknown parameter (model has: {', '.join(model.param_names)})",
                field=f"params.{key}")
    specs = []
    for i, name in enumerate(model.param_names):
        entry = section.get(name)
        path = f"params.{name}"
        default = float(model.default_params[i]) if need_defaults else None
        if entry is None:
            if default is None:
                raise ValidationError("parameter must be assigned",
                                      field=path)
            specs.append(ParamSpec(name, free=False, init=default))
            continue
        if isinstance(entry, (int, float)) and not isinstance(entry, bool):
            specs.append(ParamSpec(name, free=False, init=float(entry)))
            continue
        entry = _expect_mapping(entry, path)
        extra = set(entry) - {"free", "fixed", "init", "range", "draw"}
        if extra:
            raise ValidationError(f"unknown keys {sorted(extra)}", field=path)
        if "fixed" in entry and "free" in entry:
            raise ValidationError("give either fixed or free", field=path)
        if "fixed" in entry:
            specs.append(ParamSpec(name, free=False,
                                   init=float(entry["fixed"])))
            continue
        free = bool(entry.get("free", False))
        init = _get_number(entry, "init", path, None)
        lo = hi = None
        dist = "uniform"
        if "range" in entry:
            rng = entry["range"]
            if not (isinstance(rng, (list, tuple)) and len(rng) == 2):
                raise ValidationError("range must be [lo, hi]",
                                      field=f"{path}.range")
            lo, hi = float(rng[0]), float(rng[1])
        if "draw" in entry:
            draw = _expect_mapping(entry["draw"], f"{path}.draw")
            dist = draw.get("dist", "uniform")
            if dist not in ("uniform", "loguniform"):
                raise ValidationError("dist must be uniform or loguniform",
                                      field=f"{path}.draw.dist")
            lo = _get_number(draw, "lo", f"{path}.draw", lo)
            hi = _get_number(draw, "hi", f"{path}.draw", hi)
        if lo is not None and hi is not None and hi < lo:
            raise ValidationError("range hi must be >= lo", field=path)
        if dist == "loguniform" and (lo is None or lo <= 0):
            raise ValidationError("loguniform needs lo > 0",
                                  field=f"{path}.draw")
        if init is None:
            init = default
        if init is None and lo is not None and hi is not None:
            init = 0.5 * (lo + hi)
        if init is None:
            raise ValidationError("parameter needs an init, a range, "
                                  "or a model default", field=path)
        specs.append(ParamSpec(name, free=free, init=init, lo=lo, hi=hi,
                               dist=dist))
    return specs


def _build_target(cfg: dict, model: ModelSystem, delta_tol: float
                  ) -> TargetSpec | None:
    section = cfg.get("target")
    if section is None:
        return None
    section = _expect_mapping(section, "target")
    kind = section.get("kind")
    try:
        if kind == "oscillation":
            return TargetSpec.oscillation(delta_tol)
        if kind == "chaos":
            d = _get_number(section, "value", "target", None)
            if d is None:
                if model.name == "lorenz":
                    d = 0.9  # canonical scale for this system
                else:
                    raise ValidationError(
                        "chaos target needs an explicit value",
                        field="target.value")
            return TargetSpec.chaos(d, delta_tol)
        if kind in ("full_spectrum", "leading_exponents"):
            values = section.get("values")
            if not isinstance(values, (list, tuple)) or not values:
                raise ValidationError("values list required",
                                      field="target.values")
            if kind == "full_spectrum":
                if len(values) != model.dim:
                    raise ValidationError(
                        f"full spectrum needs {model.dim} values",
                        field="target.values")
                return TargetSpec.full_spectrum(values, delta_tol)
            return TargetSpec.leading_exponents(values, delta_tol)
        if kind == "ky_dimension":
            value = _get_number(section, "value", "target", None)
            if value is None:
                raise ValidationError("ky_dimension target needs value",
                                      field="target.value")
            return TargetSpec.ky_dimension(value, delta_tol)
        if kind == "hyperchaos":
            lam1 = _get_number(section, "lam1_min", "target", None)
            lam2 = _get_number(section, "lam2_min", "target", None)
            if lam1 is None or lam2 is None:
                raise ValidationError("hyperchaos needs lam1_min and lam2_min",
                                      field="target")
            t1 = _get_number(section, "lam1_target", "target", None)
            t2 = _get_number(section, "lam2_target", "target", None)
            targets = (t1, t2) if t1 is not None and t2 is not None else None
            return TargetSpec.hyperchaos(lam1, lam2, targets, delta_tol)
    except ValueError as exc:
        raise ValidationError(str(exc), field="target") from exc
    raise ValidationError(
        "kind must be one of oscillation, chaos, full_spectrum, "
        "leading_exponents, ky_dimension, hyperchaos",
        field="target.kind")


def load_experiment(cfg: dict, *, config_path: Path | None = None,
                    command: str = "") -> ExperimentConfig:
    model, model_def, model_file = _build_model(cfg, None)
    need_defaults = model_def is None
    params = _build_params(cfg, model, need_defaults)

    lyap = _expect_mapping(cfg.get("lyapunov"), "lyapunov")
    try:
        le_config = LEConfig(
            burn_in_steps=_get_int(lyap, "burn_in_steps", "lyapunov", 1000),
            estimation_steps=_get_int(lyap, "estimation_steps", "lyapunov",
                                      10000),
            renorm_interval=_get_int(lyap, "renorm_interval", "lyapunov", 1),
            dt=_get_number(lyap, "dt", "lyapunov", None),
            k_exponents=_get_int(lyap, "k_exponents", "lyapunov", None),
        )
    except ValueError as exc:
        raise ValidationError(str(exc), field="lyapunov") from exc
    delta_tol = _get_number(lyap, "delta_tol", "lyapunov", DELTA_TOL_DEFAULT)
    osc_tol = _get_number(lyap, "osc_tol", "lyapunov", OSC_TOL_DEFAULT)

    integ = _expect_mapping(cfg.get("integrator"), "integrator")
    try:
        integrator = IntegratorConfig(
            method=integ.get("method", "rk4"),
            dt=_get_number(integ, "dt", "integrator", None)
            or model.default_dt,
            abs_tol=_get_number(integ, "abs_tol", "integrator", 1e-9),
            rel_tol=_get_number(integ, "rel_tol", "integrator", 1e-9),
            max_step_growth=_get_number(integ, "max_step_growth",
                                        "integrator", 5.0),
        )
    except ValueError as exc:
        raise ValidationError(str(exc), field="integrator") from exc

    if cfg.get("initial_state") is not None:
        y0 = np.asarray(cfg["initial_state"], dtype=float)
        if y0.shape != (model.dim,):
            raise ValidationError(f"needs {model.dim} components",
                                  field="initial_state")
    elif model_def is not None:
        raise ValidationError("model files need an explicit initial_state",
                              field="initial_state")
    else:
        y0 = model.default_initial_state

    target = _build_target(cfg, model, delta_tol)
    inference = _expect_mapping(cfg.get("inference"), "inference")
    simulate = _expect_mapping(cfg.get("simulate"), "simulate")
    sweep_opts = _expect_mapping(cfg.get("sweep"), "sweep")

    seed = _get_int(cfg, "seed", "", 0)
    workers = cfg.get("workers")
    if workers is None:
        workers = int(os.environ.get("QUALDYN_WORKERS", "1"))
    workers = max(1, int(workers))

    outdir = Path(cfg.get("out", "qualdyn_out"))
    return ExperimentConfig(
        raw=cfg, model=model, model_def=model_def, params=params,
        initial_state=y0, integrator=integrator, le_config=le_config,
        delta_tol=delta_tol, osc_tol=osc_tol, target=target,
        inference=inference, simulate=simulate, sweep_opts=sweep_opts,
        outdir=outdir, seed=seed, workers=workers,
        config_path=config_path, model_file=model_file)


# --------------------------------------------------------------------------
# Run manifest
# --------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    workers: int
    outdir: Path
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    status: str = "running"
    created_utc: str = ""
    finished_utc: str = ""

    @classmethod
    def start(cls, command: str, exp: ExperimentConfig) -> "RunManifest":
        inputs = {}
        for label, path in (("config_file", exp.config_path),
                            ("model_file", exp.model_file)):
            if path is not None:
                inputs[label] = {"path": str(path), "sha256": _sha256(path)}
        manifest = cls(command=command, config=exp.raw, seed=exp.seed,
                       workers=exp.workers, outdir=exp.outdir, inputs=inputs,
                       created_utc=datetime.now(timezone.utc).isoformat())
        manifest.write()
        return manifest

    def finish(self, status: str, outputs: list) -> None:
        self.status = status
        self.outputs = [str(o) for o in outputs]
        self.finished_utc = datetime.now(timezone.utc).isoformat()
        self.write()

    def write(self) -> None:
        self.outdir.mkdir(parents=True, exist_ok=True)
        payload = {
            "tool": "qualdyn",
            "version": __version__,
            "backend": backend.active_backend(),
            "command": self.command,
            "status": self.status,
            "created_utc": self.created_utc,
            "finished_utc": self.finished_utc,
            "seed": self.seed,
            "workers": self.workers,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "config": self.config,
        }
        with open(self.outdir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_simulate(exp: ExperimentConfig) -> int:
    manifest = RunManifest.start("simulate", exp)
    steps = _get_int(exp.simulate, "steps", "simulate", 10000)
    t0 = _get_number(exp.simulate, "t0", "simulate", 0.0)
    t1 = _get_number(exp.simulate, "t1", "simulate", None)
    sample_every = _get_int(exp.simulate, "sample_every", "simulate", 1)
    if t1 is None:
        t1 = t0 + steps * exp.integrator.dt
    theta = exp.theta_init()
    try:
        traj = integrate(exp.model, exp.initial_state, theta, t0, t1,
                         exp.integrator, sample_every)
    except (DivergenceError, StiffnessError) as exc:
        manifest.finish("failed", [])
        when = getattr(exc, "time", None)
        print(f"error: integration failed ({exc})"
              + (f" at t={when}" if when is not None else ""),
              file=sys.stderr)
        return EXIT_NUMERICAL
    csv_path = exp.outdir / "trajectory.csv"
    traj.write_csv(csv_path)
    summary = {
        "model": exp.model.name,
        "rows": len(traj),
        "steps": steps,
        "t0": t0,
        "t1": float(traj.t[-1]),
        "dt": exp.integrator.dt,
        "method": exp.integrator.method,
        "bounds": {
            name: [float(traj.y[:, i].min()), float(traj.y[:, i].max())]
            for i, name in enumerate(exp.model.state_names)
        },
    }
    summary_path = exp.outdir / "summary.json"
    _write_json(summary_path, summary)
    manifest.finish("completed", [csv_path, summary_path])
    print(f"wrote {csv_path} ({len(traj)} rows)")
    return EXIT_OK


def cmd_classify(exp: ExperimentConfig) -> int:
    manifest = RunManifest.start("classify", exp)
    theta = exp.theta_init()
    le_config = exp.le_config
    if le_config.dt is None:
        le_config = LEConfig(le_config.burn_in_steps,
                             le_config.estimation_steps,
                             le_config.renorm_interval,
                             exp.model.default_dt, le_config.k_exponents)
    spectrum = estimate_spectrum(exp.model, theta, y0=exp.initial_state,
                                 config=le_config)
    record = spectrum_record(spectrum, exp.delta_tol, exp.osc_tol)
    path = exp.outdir / "spectrum.json"
    _write_json(path, record)
    manifest.finish("completed", [path])
    if record["exponents"] is None:
        print("exponents: diverged")
    else:
        print("exponents:", "  ".join(f"{v:.6g}" for v in record["exponents"]))
    print("class:", record["class"],
          "(low confidence)" if record["low_confidence"] else "")
    print("ky_dimension:", record["ky_dimension"])
    return EXIT_OK


def _constraint_for(exp: ExperimentConfig) -> ConstraintMap | None:
    kind = exp.inference.get("constraint", "auto")
    mode = exp.inference.get("box_mode", "reflect")
    free = exp.free_specs
    if kind == "identity":
        return ConstraintMap.identity(len(free))
    if kind == "absolute_value":
        return ConstraintMap.absolute_value(len(free))
    ranged = [p for p in free if p.lo is not None and p.hi is not None]
    if kind == "box" or (kind == "auto" and len(ranged) == len(free)):
        if len(ranged) != len(free):
            missing = [p.name for p in free if p not in ranged]
            raise ValidationError(
                "box constraint needs ranges for: " + ", ".join(missing),
                field="inference.constraint")
        lo = [p.lo for p in free]
        hi = [p.hi for p in free]
        return ConstraintMap.box(lo, hi, mode=mode)
    if kind == "auto":
        return ConstraintMap.identity(len(free))
    raise ValidationError("constraint must be auto, identity, "
                          "absolute_value or box",
                          field="inference.constraint")


def _draw_theta(exp: ExperimentConfig, rng: np.random.Generator,
                use_inits: bool) -> np.ndarray:
    theta = exp.theta_init()
    names = list(exp.model.param_names)
    for spec in exp.free_specs:
        if use_inits and spec.init is not None:
            continue
        if spec.lo is None or spec.hi is None:
            raise ValidationError(
                "restarts need a range or draw for every free parameter",
                field=f"params.{spec.name}")
        if spec.dist == "loguniform":
            value = float(np.exp(rng.uniform(np.log(spec.lo),
                                             np.log(spec.hi))))
        else:
            value = float(rng.uniform(spec.lo, spec.hi))
        theta[names.index(spec.name)] = value
    return theta


def cmd_infer(exp: ExperimentConfig) -> int:
    if exp.target is None:
        raise ValidationError("infer needs a target section", field="target")
    if not exp.free_specs:
        raise ValidationError("infer needs at least one free parameter",
                              field="params")
    manifest = RunManifest.start("infer", exp)
    inf = exp.inference
    constraint = _constraint_for(exp)
    try:
        config = InferenceConfig(
            max_iterations=_get_int(inf, "max_iterations", "inference", 200),
            sse_stop=_get_number(inf, "sse_stop", "inference", None),
            le_config=exp.le_config,
            constraint=constraint,
            infer_initial_conditions=bool(
                inf.get("infer_initial_conditions", False)),
            process_scale=_get_number(inf, "process_scale", "inference", 0.5),
            measurement_scale=_get_number(inf, "measurement_scale",
                                          "inference", None),
            alpha=_get_number(inf, "alpha", "inference", 0.3),
            beta=_get_number(inf, "beta", "inference", 2.0),
            kappa=_get_number(inf, "kappa", "inference", 0.0),
            seed=exp.seed,
            workers=exp.workers,
        )
    except ValueError as exc:
        raise ValidationError(str(exc), field="inference") from exc
    restarts = _get_int(inf, "restarts", "inference", 1)
    explicit_inits = all(
        isinstance(exp.raw.get("params", {}).get(p.name), dict)
        and exp.raw["params"][p.name].get("init") is not None
        for p in exp.free_specs)

    seq = np.random.SeedSequence(exp.seed)
    children = seq.spawn(restarts)
    draws = []
    for r in range(restarts):
        rng = np.random.Generator(np.random.Philox(children[r]))
        draws.append(_draw_theta(exp, rng, use_inits=(r == 0
                                                      and explicit_inits)))

    free_idx = exp.free_indices
    p0_scale = _get_number(inf, "p0_scale", "inference", 1.0)

    outputs = []
    try:
        results = []
        for r, theta0 in enumerate(draws):
            free0 = theta0[free_idx]
            P0 = np.diag(p0_scale
                         * np.maximum(np.abs(free0), 1e-3))
            try:
                results.append(run_multi_start(
                    exp.model, exp.target, [theta0], P0, config,
                    free_indices=free_idx)[0])
            except CovarianceError as exc:
                results.append(None)
                print(f"restart {r}: covariance failure ({exc})",
                      file=sys.stderr)
    except QualdynError as exc:
        manifest.finish("failed", outputs)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    idx = best_run(results)
    if idx is None:
        manifest.finish("failed", [])
        print("error: every restart lost the regime (all-penalty iterations)",
              file=sys.stderr)
        return EXIT_NUMERICAL
    state, trace = results[idx]

    names = [exp.model.param_names[i] for i in free_idx]
    if config.infer_initial_conditions:
        names += [f"y0_{s}" for s in exp.model.state_names]
    jsonl = exp.outdir / "trace.jsonl"
    csv = exp.outdir / "trace.csv"
    trace.write_jsonl(jsonl)
    trace.write_csv(csv, names)
    outputs += [jsonl, csv]

    rec = trace.final
    final = {
        "restart": idx,
        "restarts": restarts,
        "converged": trace.converged,
        "stop_reason": trace.stop_reason,
        "iterations": len(trace),
        "free_parameters": names,
        "theta": [float(v) for v in rec.theta],
        "theta_constrained": [float(v) for v in rec.theta_constrained],
        "P_diag": [float(v) for v in rec.p_diag],
        "exponents": (None if rec.spectrum.diverged else
                      [float(v) for v in rec.spectrum.exponents]),
        "sse": rec.sse,
        "sse_weighted": rec.sse_weighted,
        "class": rec.attractor,
    }
    final_path = exp.outdir / "final.json"
    _write_json(final_path, final)
    outputs.append(final_path)
    manifest.finish("completed", outputs)
    print(f"restart {idx}: {'converged' if trace.converged else 'stopped'} "
          f"after {len(trace)} iterations, sse={rec.sse:.3g}, "
          f"class={rec.attractor}")
    print("theta:", "  ".join(f"{n}={v:.6g}" for n, v in
                              zip(names, rec.theta_constrained)))
    return EXIT_OK if trace.converged else EXIT_NO_CONVERGENCE


def cmd_sweep(exp: ExperimentConfig) -> int:
    free = exp.free_specs
    if not free:
        raise ValidationError("sweep needs free parameters with ranges",
                              field="params")
    for p in free:
        if p.lo is None or p.hi is None:
            raise ValidationError("sweep needs a range",
                                  field=f"params.{p.name}")
    manifest = RunManifest.start("sweep", exp)
    sampler = exp.sweep_opts.get("sampler", "sobol")
    n_samples = _get_int(exp.sweep_opts, "n_samples", "sweep", 64)
    region = np.array([[p.lo, p.hi] for p in free])
    records = sweep(exp.model, region, sampler, n_samples, exp.le_config,
                    free_indices=exp.free_indices,
                    theta_base=exp.theta_init(), seed=exp.seed,
                    workers=exp.workers, delta_tol=exp.delta_tol)
    path = exp.outdir / "regime_map.csv"
    k_exp = len(records[0].spectrum) if records else 0
    header = [f"theta_{n}" for n in exp.model.param_names] \
        + [f"lambda_{i + 1}" for i in range(k_exp)] \
        + ["class", "low_confidence", "ky_dimension"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for rec in records:
            lams = (["nan"] * k_exp if rec.spectrum.diverged
                    else [repr(float(v)) for v in rec.spectrum.exponents])
            ky = "" if rec.ky_dimension is None else repr(rec.ky_dimension)
            row = [repr(float(v)) for v in rec.theta] + lams \
                + [rec.attractor, str(rec.low_confidence).lower(), ky]
            fh.write(",".join(row) + "\n")
    manifest.finish("completed", [path])
    counts: dict[str, int] = {}
    for rec in records:
        counts[rec.attractor] = counts.get(rec.attractor, 0) + 1
    print(f"wrote {path} ({len(records)} samples)")
    for cls in sorted(counts):
        print(f"  {cls:20s} {counts[cls]}")
    return EXIT_OK


def cmd_models_list() -> int:
    for name in zoo_names():
        if name == "circuit":
            model = builtin(name, epsilon=1.0, b=1.0, c=1.0)
            extra = " [constants: epsilon, b, c required]"
        else:
            model = builtin(name)
            extra = (" [constants: " + ", ".join(
                f"{k}={v:g}" for k, v in model.constants.items()) + "]"
                if model.constants else "")
        print(f"{name}: dim={model.dim} "
              f"states=({', '.join(model.state_names)}) "
              f"params=({', '.join(model.param_names)}){extra}")
    return EXIT_OK


# --------------------------------------------------------------------------
# Argument handling
# --------------------------------------------------------------------------

def _set_by_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        nxt = node.get(key)
        if not isinstance(nxt, dict):
            nxt = {}
            node[key] = nxt
        node = nxt
    node[keys[-1]] = value


def _merge_args(args) -> dict:
    cfg: dict = {}
    config_path = None
    if args.config:
        config_path = Path(args.config)
        if not config_path.exists():
            raise ValidationError(f"config file not found: {config_path}",
                                  field="config")
        loaded = yaml.safe_load(config_path.read_text(encoding="utf-8"))
        cfg = _expect_mapping(loaded, "config")
    for item in args.set or []:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}",
                                  field="set")
        key, _, raw = item.partition("=")
        _set_by_path(cfg, key.strip(), yaml.safe_load(raw))
    if args.model:
        cfg["model"] = args.model
    if args.model_file:
        cfg["model_file"] = args.model_file
    if args.out:
        cfg["out"] = args.out
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.workers is not None:
        cfg["workers"] = args.workers
    return cfg, config_path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qualdyn",
        description="Lyapunov spectra and qualitative attractor design "
                    "for ODE models")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--model", help="zoo model name")
        p.add_argument("--model-file", dest="model_file",
                       help="path to a model definition file")
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry (dotted path)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--workers", type=int,
                       help="worker threads (default $QUALDYN_WORKERS or 1)")

    for name in ("simulate", "classify", "infer", "sweep"):
        add_common(sub.add_parser(name))
    models = sub.add_parser("models")
    models_sub = models.add_subparsers(dest="models_command", required=True)
    models_sub.add_parser("list")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "models":
        return cmd_models_list()
    try:
        cfg, config_path = _merge_args(args)
        exp = load_experiment(cfg, config_path=config_path,
                              command=args.command)
        if args.command == "simulate":
            return cmd_simulate(exp)
        if args.command == "classify":
            return cmd_classify(exp)
        if args.command == "infer":
            return cmd_infer(exp)
        return cmd_sweep(exp)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RegimeLostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DivergenceError, StiffnessError, CovarianceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
