"""JSON run configuration: strict parsing, defaults, round-trip serialization.

Unknown keys are rejected so typos cannot silently fall back to
defaults.  Defaults exist only for the ``grid`` and ``control`` sections;
every model quantity and the Monte Carlo block must be spelled out.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .grid import GridSpec
from .model import ClaimLaw, ModelParams, PremiumSpec, UtilitySpec
from .solver import SolveControl

__all__ = ["ConfigError", "MCSpec", "RunSpec", "load_config", "parse_config", "serialize"]

KNOWN_ARTIFACTS = ("figures", "fields", "barriers", "check_report")


class ConfigError(ValueError):
    """A config document is malformed; the message names the offending key."""


@dataclass(frozen=True)
class MCSpec:
    n_paths: int
    seed: int


@dataclass(frozen=True)
class RunSpec:
    model: ModelParams
    grid: GridSpec
    control: SolveControl
    mc: MCSpec
    outputs: tuple[str, ...]
    output_dir: str


def _section(doc: dict, name: str, required: bool) -> dict:
    if name not in doc:
        if required:
            raise ConfigError(f"missing required section `{name}`")
        return {}
    sec = doc[name]
    if not isinstance(sec, dict):
        raise ConfigError(f"section `{name}` must be a JSON object")
    return dict(sec)


def _pop_number(sec: dict, section: str, key: str) -> float:
    if key not in sec:
        raise ConfigError(f"missing required key `{section}.{key}`")
    val = sec.pop(key)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"`{section}.{key}` must be a number, got {val!r}")
    return float(val)


def _pop_optional_number(sec: dict, section: str, key: str, default):
    if key not in sec:
        return default
    val = sec.pop(key)
    if val is None:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"`{section}.{key}` must be a number, got {val!r}")
    return float(val)


def _reject_unknown(sec: dict, section: str) -> None:
    if sec:
        key = sorted(sec)[0]
        raise ConfigError(f"unknown key `{section}.{key}`")


def _parse_premium(sec: dict, section: str, key: str) -> PremiumSpec:
    if key not in sec:
        raise ConfigError(f"missing required key `{section}.{key}`")
    val = sec.pop(key)
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        return PremiumSpec.constant(float(val))
    if isinstance(val, dict):
        obj = dict(val)
        kind = obj.pop("kind", "affine")
        if kind == "constant":
            rate = obj.pop("rate", None)
            if rate is None:
                raise ConfigError(f"`{section}.{key}.rate` required for constant premium")
            spec = PremiumSpec.constant(float(rate))
        elif kind == "affine":
            if "intercept" not in obj or "slope" not in obj:
                raise ConfigError(
                    f"`{section}.{key}` affine premium needs `intercept` and `slope`")
            spec = PremiumSpec.affine(float(obj.pop("intercept")), float(obj.pop("slope")))
        else:
            raise ConfigError(f"`{section}.{key}.kind` must be 'affine' or 'constant'")
        if obj:
            raise ConfigError(f"unknown key `{section}.{key}.{sorted(obj)[0]}`")
        return spec
    raise ConfigError(f"`{section}.{key}` must be a number or premium object")


def _parse_model(sec: dict) -> ModelParams:
    params = ModelParams(
        horizon_T=_pop_number(sec, "model", "T"),
        class2_reset_S=_pop_number(sec, "model", "S"),
        intensity_lambda=_pop_number(sec, "model", "lambda"),
        claim_law=ClaimLaw(mean=_pop_number(sec, "model", "mu")),
        deductible_m1=_pop_number(sec, "model", "m1"),
        deductible_m2=_pop_number(sec, "model", "m2"),
        premium1=_parse_premium(sec, "model", "pi1"),
        premium2=_parse_premium(sec, "model", "pi2"),
        income_c=_pop_number(sec, "model", "c"),
        utility=UtilitySpec(
            gamma=_pop_number(sec, "model", "gamma"),
            floor=_pop_number(sec, "model", "floor"),
        ),
    )
    _reject_unknown(sec, "model")
    return params


def _parse_grid(sec: dict) -> GridSpec:
    spec = GridSpec(
        h_t=_pop_optional_number(sec, "grid", "h_t", 0.025),
        h_x=_pop_optional_number(sec, "grid", "h_x", 0.0625),
        x_lo=_pop_optional_number(sec, "grid", "x_lo", 0.0),
        x_hi=_pop_optional_number(sec, "grid", "x_hi", 5.0),
        tail_eps=_pop_optional_number(sec, "grid", "tail_eps", 1.0e-8),
        barrier_step=_pop_optional_number(sec, "grid", "barrier_step", None),
    )
    _reject_unknown(sec, "grid")
    return spec


def _parse_control(sec: dict) -> SolveControl:
    mode = sec.pop("mode", "optimize")
    if mode not in ("optimize", "fixed"):
        raise ConfigError("`control.mode` must be 'optimize' or 'fixed'")
    fixed_barrier = None
    if "fixed_barrier" in sec:
        raw = sec.pop("fixed_barrier")
        if raw == "inf":
            fixed_barrier = math.inf
        elif isinstance(raw, (int, float)) and not isinstance(raw, bool):
            fixed_barrier = float(raw)
        else:
            raise ConfigError("`control.fixed_barrier` must be a number or \"inf\"")
    iterations = sec.pop("iterations", None)
    if iterations is not None and (isinstance(iterations, bool)
                                   or not isinstance(iterations, int) or iterations < 0):
        raise ConfigError("`control.iterations` must be a nonnegative integer")
    tol = _pop_optional_number(sec, "control", "tol",
                               1.0e-6 if iterations is None else None)
    paper_mode = sec.pop("paper_mode", False)
    if not isinstance(paper_mode, bool):
        raise ConfigError("`control.paper_mode` must be a boolean")
    max_iterations = sec.pop("max_iterations", 200)
    _reject_unknown(sec, "control")
    try:
        return SolveControl(mode=mode, fixed_barrier=fixed_barrier,
                            iterations=iterations, tol=tol,
                            paper_mode=paper_mode, max_iterations=int(max_iterations))
    except ValueError as exc:
        raise ConfigError(f"invalid `control` section: {exc}") from exc


def _parse_mc(sec: dict) -> MCSpec:
    n_paths = sec.pop("n_paths", None)
    seed = sec.pop("seed", None)
    for name, val in (("n_paths", n_paths), ("seed", seed)):
        if val is None:
            raise ConfigError(f"missing required key `mc.{name}`")
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"`mc.{name}` must be an integer")
    if n_paths < 2:
        raise ConfigError("`mc.n_paths` must be at least 2")
    _reject_unknown(sec, "mc")
    return MCSpec(n_paths=n_paths, seed=seed)


def _parse_outputs(sec: dict) -> tuple[tuple[str, ...], str]:
    out_dir = sec.pop("dir", "out")
    if not isinstance(out_dir, str):
        raise ConfigError("`outputs.dir` must be a string")
    artifacts = sec.pop("artifacts", ["figures"])
    if not isinstance(artifacts, list) or not all(isinstance(a, str) for a in artifacts):
        raise ConfigError("`outputs.artifacts` must be a list of strings")
    for a in artifacts:
        if a not in KNOWN_ARTIFACTS:
            raise ConfigError(f"unknown artifact `outputs.artifacts: {a}` "
                              f"(known: {', '.join(KNOWN_ARTIFACTS)})")
    _reject_unknown(sec, "outputs")
    return tuple(artifacts), out_dir


def parse_config(doc: dict) -> RunSpec:
    """Build a RunSpec from an already-decoded JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    doc = dict(doc)
    model_sec = _section(doc, "model", required=True)
    grid_sec = _section(doc, "grid", required=False)
    control_sec = _section(doc, "control", required=False)
    mc_sec = _section(doc, "mc", required=True)
    outputs_sec = _section(doc, "outputs", required=False)
    for key in ("model", "grid", "control", "mc", "outputs"):
        doc.pop(key, None)
    _reject_unknown(doc, "top level")

    try:
        model = _parse_model(model_sec)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid `model` section: {exc}") from exc
    artifacts, out_dir = _parse_outputs(outputs_sec)
    return RunSpec(
        model=model,
        grid=_parse_grid(grid_sec),
        control=_parse_control(control_sec),
        mc=_parse_mc(mc_sec),
        outputs=artifacts,
        output_dir=out_dir,
    )


def load_config(path) -> RunSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(doc)


def _num(x: float):
    """12-significant-digit JSON-safe number."""
    if isinstance(x, int):
        return x
    out = float(f"{x:.12g}")
    return int(out) if out.is_integer() and abs(out) < 1e15 else out


def _premium_doc(spec: PremiumSpec):
    if spec.slope == 0.0:
        return _num(spec.intercept)
    return {"kind": "affine", "intercept": _num(spec.intercept), "slope": _num(spec.slope)}


def serialize(spec: RunSpec) -> str:
    """Render a RunSpec back to config JSON (parses to an equivalent spec)."""
    m, g, c = spec.model, spec.grid, spec.control
    doc = {
        "model": {
            "T": _num(m.horizon_T), "S": _num(m.class2_reset_S),
            "lambda": _num(m.intensity_lambda), "mu": _num(m.claim_law.mean),
            "m1": _num(m.deductible_m1), "m2": _num(m.deductible_m2),
            "pi1": _premium_doc(m.premium1), "pi2": _premium_doc(m.premium2),
            "c": _num(m.income_c), "gamma": _num(m.utility.gamma),
            "floor": _num(m.utility.floor),
        },
        "grid": {
            "h_t": _num(g.h_t), "h_x": _num(g.h_x),
            "x_lo": _num(g.x_lo), "x_hi": _num(g.x_hi),
            "tail_eps": _num(g.tail_eps),
        },
        "control": {"mode": c.mode, "paper_mode": c.paper_mode,
                    "max_iterations": c.max_iterations},
        "mc": {"n_paths": spec.mc.n_paths, "seed": spec.mc.seed},
        "outputs": {"dir": spec.output_dir, "artifacts": list(spec.outputs)},
    }
    if g.barrier_step is not None:
        doc["grid"]["barrier_step"] = _num(g.barrier_step)
    if c.fixed_barrier is not None:
        doc["control"]["fixed_barrier"] = (
            "inf" if math.isinf(c.fixed_barrier) else _num(c.fixed_barrier))
    if c.iterations is not None:
        doc["control"]["iterations"] = c.iterations
    if c.tol is not None:
        doc["control"]["tol"] = _num(c.tol)
    return json.dumps(doc, indent=2)
