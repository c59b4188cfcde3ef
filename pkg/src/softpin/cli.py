"""Batch command-line front end.

Subcommands
-----------
free-energy     annealed (optionally quenched Monte Carlo) free-energy ladders
critical-curve  annealed critical heights across a beta grid, with optional
                rescaled lower bound and quenched Monte Carlo brackets
localize        excursion-sum localization criterion at one phase point
bessel-check    walk diagnostics: return-law mass, local-limit ratios,
                transition-density normalizations
scaling         weak-coupling ladder N * F_ann and expansion coefficients
continuum       continuum closed forms and Monte Carlo free energy

Configuration
-------------
One YAML document per run (``--config PATH``)::

    seed: 12345                  # optional, default 0; --seed overrides
    model:                       # lattice subcommands only
      walk: {alpha: 0.5, epsilon_corr: 0.0, l_max: null}
      potential: {kind: pinning, amplitude: 1.0}
        # kinds: pinning | copolymer | power_tail (needs theta)
        #        | table (mapping height -> value)
      charges: {law: gaussian}   # gaussian | bernoulli_pm1 (default gaussian)
    task: {...}                  # subcommand parameters, see below
    numerics: {m_max: 4096, l: null, tol: 0.001, n_points: 6}  # optional
    output: {dir: ".", format: csv, prefix: null}              # optional

Task blocks::

    free-energy:    {beta, h, n_max, quenched: {n_samples}?}
    critical-curve: {beta_grid: [..], lower_bound: false,
                     quenched: {n_samples, n_max, detect, tol}?}
    localize:       {beta, h, kappa: 1.0, return_mass: 1.0}
    bessel-check:   {alpha, n, ks: [0..4], n_probe: 4*n?, epsilon_corr: 0.0}
    scaling:        {alpha, theta, beta_hat, h_hat, n_ladder: [..],
                     m_mult: 48, cstar_phi: null, cstar_phi2: null,
                     k_weights: 64, n_probe: 4096, series: {k: 1, T: 1.0}?}
    continuum:      {alpha, theta, c_tail: 1.0, beta_hat, h_hat,
                     cstar_phi: null, cstar_phi2: null,
                     ztilde: {mu, T}?, mc: {T, n_paths, dt?, eps?}?}

``bessel-check`` and ``continuum`` read everything from their task block
and need no model block.

Reproducibility
---------------
Outputs depend only on the effective config (the YAML after flag
overrides): re-running the same config and seed reproduces every file byte
for byte, at any ``--threads`` level.  Job j of a run draws its seed as the
first 64-bit word of ``numpy.random.SeedSequence(seed, spawn_key=(j,))``;
jobs are numbered in task order (grid position first), so adding workers
reorders execution but never the streams.  CSV files open with comment
lines carrying the SHA-256 of the numeric config blocks (seed, model,
task, numerics) and the toolkit version; JSON files carry the same fields
in a leading ``_meta`` object.

Exit codes: 0 success; 2 invalid config, unknown subcommand, or unwritable
output; 3 numeric non-convergence (divergence flags, failed brackets,
flagged Monte Carlo estimates).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml
from jsonschema import Draft202012Validator
from scipy.integrate import quad

from . import __version__
from .continuum import (
    ContinuumParams,
    ContinuumPhasePoint,
    bessel_density,
    continuum_critical_curve,
    continuum_free_energy_mc,
    continuum_free_energy_short,
    critical_exponent,
    mc_record,
    sharp_constant,
    ztilde_growth_rate,
)
from .lattice import folded_kernel
from .localization import (
    CURVE_COLUMNS,
    annealed_critical_h,
    excursion_sum,
    rescaled_lower_bound,
    quenched_critical_h,
    transient_criterion,
)
from .model import (
    ChargeModel,
    PotentialSpec,
    WalkSpec,
    estimate_c_weights,
    return_law,
)
from .scaling import (
    SCALED_COLUMNS,
    SERIES_COLUMNS,
    ScalingSchedule,
    compare_to_continuum,
    scaled_free_energy,
)
from .transfer import (
    LADDER_COLUMNS,
    annealed_free_energy,
    ladder_csv_rows,
    quenched_free_energy,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SUBCOMMANDS = (
    "free-energy",
    "critical-curve",
    "localize",
    "bessel-check",
    "scaling",
    "continuum",
)

MODEL_FREE = {"bessel-check", "continuum"}  # read the task block only


class ConfigError(Exception):
    """Invalid configuration: wrong schema, file problems, bad values."""


# ------------------------------------------------------------------- schema

def _num(minimum=None, exclusive=None):
    out = {"type": "number"}
    if minimum is not None:
        out["minimum"] = minimum
    if exclusive is not None:
        out["exclusiveMinimum"] = exclusive
    return out


def _int(minimum=None):
    out = {"type": "integer"}
    if minimum is not None:
        out["minimum"] = minimum
    return out


def _int_list(minimum=1):
    return {"type": "array", "items": _int(minimum), "minItems": 1}


_WALK = {
    "type": "object",
    "properties": {
        "alpha": _num(exclusive=0.0),
        "epsilon_corr": _num(minimum=0.0),
        "l_max": {"type": ["integer", "null"], "minimum": 1},
    },
    "required": ["alpha"],
    "additionalProperties": False,
}

_POTENTIAL = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["pinning", "copolymer", "power_tail", "table"]},
        "amplitude": _num(exclusive=0.0),
        "theta": {"type": ["number", "null"]},
        "table": {"type": "object"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_CHARGES = {
    "type": "object",
    "properties": {"law": {"enum": ["gaussian", "bernoulli_pm1"]}},
    "additionalProperties": False,
}

_MODEL = {
    "type": "object",
    "properties": {"walk": _WALK, "potential": _POTENTIAL, "charges": _CHARGES},
    "required": ["walk", "potential"],
    "additionalProperties": False,
}

_NUMERICS = {
    "type": "object",
    "properties": {
        "m_max": _int(8),
        "l": {"type": ["integer", "null"], "minimum": 1},
        "tol": _num(exclusive=0.0),
        "n_points": _int(2),
    },
    "additionalProperties": False,
}

_OUTPUT = {
    "type": "object",
    "properties": {
        "dir": {"type": "string"},
        "format": {"enum": ["csv", "json"]},
        "prefix": {"type": ["string", "null"]},
    },
    "additionalProperties": False,
}

_TASKS = {
    "free-energy": {
        "type": "object",
        "properties": {
            "beta": _num(minimum=0.0),
            "h": _num(),
            "n_max": _int(16),
            "quenched": {
                "type": "object",
                "properties": {"n_samples": _int(1)},
                "required": ["n_samples"],
                "additionalProperties": False,
            },
        },
        "required": ["beta", "h", "n_max"],
        "additionalProperties": False,
    },
    "critical-curve": {
        "type": "object",
        "properties": {
            "beta_grid": {"type": "array", "items": _num(minimum=0.0),
                          "minItems": 1},
            "lower_bound": {"type": "boolean"},
            "quenched": {
                "type": "object",
                "properties": {
                    "n_samples": _int(1),
                    "n_max": _int(16),
                    "detect": _num(exclusive=0.0),
                    "tol": _num(exclusive=0.0),
                },
                "required": ["n_samples", "n_max"],
                "additionalProperties": False,
            },
        },
        "required": ["beta_grid"],
        "additionalProperties": False,
    },
    "localize": {
        "type": "object",
        "properties": {
            "beta": _num(minimum=0.0),
            "h": _num(),
            "kappa": _num(exclusive=0.0),
            "return_mass": _num(exclusive=0.0),
        },
        "required": ["beta", "h"],
        "additionalProperties": False,
    },
    "bessel-check": {
        "type": "object",
        "properties": {
            "alpha": _num(exclusive=0.0),
            "n": _int(4),
            "ks": _int_list(minimum=0),
            "n_probe": _int(4),
            "epsilon_corr": _num(minimum=0.0),
        },
        "required": ["alpha", "n"],
        "additionalProperties": False,
    },
    "scaling": {
        "type": "object",
        "properties": {
            "alpha": _num(exclusive=0.0),
            "theta": _num(exclusive=0.0),
            "beta_hat": _num(exclusive=0.0),
            "h_hat": _num(exclusive=0.0),
            "n_ladder": _int_list(minimum=2),
            "m_mult": _int(4),
            "cstar_phi": {"type": ["number", "null"]},
            "cstar_phi2": {"type": ["number", "null"]},
            "k_weights": _int(1),
            "n_probe": _int(4),
            "series": {
                "type": "object",
                "properties": {"k": _int(1), "T": _num(exclusive=0.0)},
                "additionalProperties": False,
            },
        },
        "required": ["alpha", "theta", "beta_hat", "h_hat", "n_ladder"],
        "additionalProperties": False,
    },
    "continuum": {
        "type": "object",
        "properties": {
            "alpha": _num(exclusive=0.0),
            "theta": _num(exclusive=0.0),
            "c_tail": _num(exclusive=0.0),
            "beta_hat": _num(exclusive=0.0),
            "h_hat": _num(exclusive=0.0),
            "cstar_phi": {"type": ["number", "null"]},
            "cstar_phi2": {"type": ["number", "null"]},
            "ztilde": {
                "type": "object",
                "properties": {"mu": _num(exclusive=0.0),
                               "T": _num(exclusive=0.0)},
                "required": ["mu", "T"],
                "additionalProperties": False,
            },
            "mc": {
                "type": "object",
                "properties": {
                    "T": _num(exclusive=0.0),
                    "n_paths": _int(2),
                    "dt": _num(exclusive=0.0),
                    "eps": _num(exclusive=0.0),
                    "n_bootstrap": _int(2),
                },
                "required": ["T", "n_paths"],
                "additionalProperties": False,
            },
        },
        "required": ["alpha", "theta", "beta_hat", "h_hat"],
        "additionalProperties": False,
    },
}

_BASE = {
    "type": "object",
    "properties": {
        "seed": _int(0),
        "model": _MODEL,
        "task": {"type": "object"},
        "numerics": _NUMERICS,
        "output": _OUTPUT,
    },
    "required": ["task"],
    "additionalProperties": False,
}


def _validate(config: dict, subcommand: str) -> None:
    if not isinstance(config, dict):
        raise ConfigError("config must be a mapping")
    for err in Draft202012Validator(_BASE).iter_errors(config):
        raise ConfigError(f"config{_err_path(err)}: {err.message}")
    if subcommand not in MODEL_FREE and "model" not in config:
        raise ConfigError(f"config: {subcommand} needs a model block")
    for err in Draft202012Validator(_TASKS[subcommand]).iter_errors(
        config["task"]
    ):
        raise ConfigError(f"config task{_err_path(err)}: {err.message}")


def _err_path(err) -> str:
    return "".join(f".{p}" if isinstance(p, str) else f"[{p}]"
                   for p in err.absolute_path)


# ----------------------------------------------------------- config plumbing

def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if loaded is None:
        raise ConfigError("config file is empty")
    return loaded


def _canonical(obj):
    """Nested structure with string keys only, for stable hashing."""
    if isinstance(obj, dict):
        return {str(k): _canonical(obj[k]) for k in sorted(obj, key=str)}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    return obj


def config_digest(config: dict, seed: int) -> str:
    """SHA-256 over the blocks that determine the numbers (not output paths)."""
    payload = _canonical({
        "seed": seed,
        "model": config.get("model", {}),
        "task": config.get("task", {}),
        "numerics": config.get("numerics", {}),
    })
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def job_seed(root: int, j: int) -> int:
    """Seed of job j: first 64-bit word of SeedSequence(root, spawn_key=(j,))."""
    ss = np.random.SeedSequence(root, spawn_key=(j,))
    return int(ss.generate_state(1, np.uint64)[0])


def _build_model(config: dict):
    m = config["model"]
    walk = WalkSpec(**m["walk"])
    pot = dict(m["potential"])
    if pot.get("table") is not None:
        pot["table"] = {int(k): float(v) for k, v in pot["table"].items()}
    kwargs = {k: v for k, v in pot.items() if v is not None}
    spec = PotentialSpec(**kwargs)
    charges = ChargeModel(m.get("charges", {}).get("law", "gaussian"))
    return walk, spec, charges


@dataclass
class RunContext:
    seed: int
    out_dir: str
    fmt: str
    prefix: str
    threads: int
    meta: dict
    numerics: dict = field(default_factory=dict)

    @property
    def header_lines(self) -> tuple[str, ...]:
        return (
            f"config sha256 {self.meta['config_sha256']}",
            f"softpin {self.meta['version']}",
            f"subcommand {self.meta['subcommand']}",
        )

    def path(self, stem: str) -> str:
        ext = "csv" if self.fmt == "csv" else "json"
        return os.path.join(self.out_dir, f"{self.prefix}{stem}.{ext}")


def _plain(v):
    """Collapse numpy scalars so CSV repr and JSON encoding stay canonical."""
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def _cell(v) -> str:
    v = _plain(v)
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _emit(ctx: RunContext, stem: str, columns, rows: list[dict]) -> str:
    path = ctx.path(stem)
    if ctx.fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in ctx.header_lines:
                fh.write(f"# {line}\n")
            fh.write(",".join(columns) + "\n")
            for r in rows:
                fh.write(",".join(_cell(r.get(c)) for c in columns) + "\n")
    else:
        payload = {
            "_meta": ctx.meta,
            "columns": list(columns),
            "rows": [{c: _plain(r.get(c)) for c in columns} for r in rows],
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return path


def _pmap(fn, items, threads: int) -> list:
    """Order-preserving map over independent jobs."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ------------------------------------------------------------------ handlers

def _run_free_energy(config, ctx: RunContext) -> int:
    walk, spec, charges = _build_model(config)
    task = config["task"]
    num = ctx.numerics
    ann = annealed_free_energy(
        walk, spec, charges, task["beta"], task["h"], task["n_max"],
        n_points=num["n_points"], l=num["l"],
    )
    _emit(ctx, "free_energy_ladder", LADDER_COLUMNS, ladder_csv_rows(ann))
    summary = {
        "beta": task["beta"], "h": task["h"], "n_max": task["n_max"],
        "f_annealed": ann.value, "annealed_error": ann.error,
        "annealed_converged": ann.converged,
        "f_quenched": None, "quenched_error": None, "n_samples": None,
        "quenched_converged": None,
    }
    code = EXIT_OK if ann.converged else EXIT_NUMERIC
    if "quenched" in task:
        que = quenched_free_energy(
            walk, spec, charges, task["beta"], task["h"], task["n_max"],
            n_samples=task["quenched"]["n_samples"],
            seed=job_seed(ctx.seed, 0), n_points=num["n_points"], l=num["l"],
        )
        cols = list(LADDER_COLUMNS) + ["sample", "seed"]
        _emit(ctx, "free_energy_quenched", cols, ladder_csv_rows(que))
        summary.update(
            f_quenched=que.value, quenched_error=que.error,
            n_samples=que.n_samples, quenched_converged=que.converged,
        )
        if not que.converged:
            code = EXIT_NUMERIC
    _emit(ctx, "free_energy_summary", tuple(summary), [summary])
    return code


def _run_critical_curve(config, ctx: RunContext) -> int:
    walk, spec, charges = _build_model(config)
    task = config["task"]
    num = ctx.numerics
    que = task.get("quenched")

    def one(job):
        j, beta = job
        ann = annealed_critical_h(
            walk, spec, charges, beta, tol=num["tol"], m_max=num["m_max"],
            l=num["l"],
        )
        row = {
            "beta": beta, "hc_ann_lo": ann.lo, "hc_ann_hi": ann.hi,
            "hc_lower_bound": None, "hc_que_lo": None, "hc_que_hi": None,
            "confidence": None,
        }
        if task.get("lower_bound", False):
            row["hc_lower_bound"] = rescaled_lower_bound(
                walk, spec, charges, beta, tol=num["tol"], m_max=num["m_max"],
                l=num["l"],
            ).lo
        if que is not None:
            q = quenched_critical_h(
                walk, spec, charges, beta, n_max=que["n_max"],
                n_samples=que["n_samples"], seed=job_seed(ctx.seed, j),
                tol=que.get("tol", 5e-3), detect=que.get("detect", 3.0),
            )
            row.update(hc_que_lo=q.lo, hc_que_hi=q.hi,
                       confidence=q.confidence)
        return row

    rows = _pmap(one, enumerate(task["beta_grid"]), ctx.threads)
    _emit(ctx, "critical_curve", CURVE_COLUMNS, rows)
    return EXIT_OK


def _run_localize(config, ctx: RunContext) -> int:
    walk, spec, charges = _build_model(config)
    task = config["task"]
    num = ctx.numerics
    kwargs = dict(m_max=num["m_max"], kappa=task.get("kappa", 1.0), l=num["l"])
    r = task.get("return_mass", 1.0)
    if r == 1.0:
        cv = excursion_sum(walk, spec, charges, task["beta"], task["h"],
                           **kwargs)
    else:
        cv = transient_criterion(walk, spec, charges, task["beta"], task["h"],
                                 r, **kwargs)
    row = {
        "beta": task["beta"], "h": task["h"], "kappa": cv.kappa,
        "m_max": cv.m_max, "partial_sum": cv.value,
        "tail_bound": cv.tail_bound, "estimate": cv.estimate,
        "threshold": cv.threshold, "localized": cv.verdict,
        "diverged": cv.diverged,
    }
    _emit(ctx, "localize", tuple(row), [row])
    return EXIT_OK


def _half_line_integral(alpha: float, t: float, x: float) -> float:
    lo, _ = quad(lambda y: bessel_density(alpha, t, x, y), 0.0, 1.0)
    hi, _ = quad(lambda y: bessel_density(alpha, t, x, y), 1.0, np.inf)
    return lo + hi


def _run_bessel_check(config, ctx: RunContext) -> int:
    task = config["task"]
    walk = WalkSpec(alpha=task["alpha"],
                    epsilon_corr=task.get("epsilon_corr", 0.0))
    n = task["n"]
    ks = task.get("ks", [0, 1, 2, 3, 4])
    rows = []

    mass = float(return_law(walk, n).sum())
    rows.append({"check": "return_mass", "param": n, "value": mass,
                 "target": 1.0, "ratio": mass})

    # height distribution after n steps, against the local-limit shape;
    # the reference weights come from a longer probe so the ratio is a
    # genuine consistency check, not an identity
    l = walk.resolve_l(n)
    ker = folded_kernel(walk.drift, l)
    v = np.zeros(l + 1)
    v[0] = 1.0
    out = np.zeros_like(v)
    for _ in range(n):
        v, out = ker.step(v, out), v
    cw = estimate_c_weights(walk, k_max=max(ks),
                            n_probe=task.get("n_probe", 4 * n))
    for k in ks:
        if (n - k) % 2 != 0 or k > l:
            rows.append({"check": "local_limit", "param": k, "value": 0.0,
                         "target": None, "ratio": None})
            continue
        ratio = n ** (1.0 - walk.alpha) * float(v[k]) / (2.0 * cw[k])
        rows.append({"check": "local_limit", "param": k,
                     "value": float(v[k]), "target": 1.0, "ratio": ratio})

    for x in (0.0, 0.7):
        integral = _half_line_integral(walk.alpha, 1.0, x)
        rows.append({"check": "density_norm", "param": x, "value": integral,
                     "target": 1.0, "ratio": integral})

    _emit(ctx, "bessel_check", ("check", "param", "value", "target", "ratio"),
          rows)
    finite = all(
        r["ratio"] is None or math.isfinite(r["ratio"]) for r in rows
    )
    return EXIT_OK if finite else EXIT_NUMERIC


def _run_scaling(config, ctx: RunContext) -> int:
    walk, spec, charges = _build_model(config)
    task = config["task"]
    params = ContinuumParams(alpha=task["alpha"], theta=task["theta"])
    schedule = ScalingSchedule(
        params=params, beta_hat=task["beta_hat"], h_hat=task["h_hat"],
        n_ladder=tuple(task["n_ladder"]),
    )
    kwargs = dict(
        cstar_phi=task.get("cstar_phi"), cstar_phi2=task.get("cstar_phi2"),
        k_weights=task.get("k_weights", 64), n_probe=task.get("n_probe", 4096),
    )
    points = scaled_free_energy(
        schedule, walk, charges, spec, m_mult=task.get("m_mult", 48),
        l=ctx.numerics["l"], **kwargs,
    )
    _emit(ctx, "scaling_ladder", SCALED_COLUMNS + ("localized", "diverged"), [
        {
            "N": p.n, "beta_N": p.beta_n, "h_N": p.h_n,
            "N_times_F": p.n_times_f, "continuum_target": p.continuum_target,
            "rel_gap": p.rel_gap, "localized": p.localized,
            "diverged": p.diverged,
        }
        for p in points
    ])
    if "series" in task:
        series = task["series"]
        rows = compare_to_continuum(
            schedule, walk, charges, spec, T=series.get("T", 1.0),
            k=series.get("k", 1), l=ctx.numerics["l"], **kwargs,
        )
        _emit(ctx, "scaling_series", SERIES_COLUMNS + ("rel_gap",), [
            {
                "N": r.n, "k": r.k, "C_TNk": r.c_tnk,
                "hatC_gamma_ak": r.hat_gamma_ak,
                "hatC_gamma_ak_plus1": r.hat_gamma_ak_plus1,
                "rel_gap": r.rel_gap,
            }
            for r in rows
        ])
    return EXIT_NUMERIC if any(p.diverged for p in points) else EXIT_OK


def _run_continuum(config, ctx: RunContext) -> int:
    task = config["task"]
    params = ContinuumParams(alpha=task["alpha"], theta=task["theta"],
                             c_tail=task.get("c_tail", 1.0))
    cp = ContinuumPhasePoint(task["beta_hat"], task["h_hat"])
    rows = [
        {"name": "regime", "value": params.regime},
        {"name": "critical_exponent",
         "value": critical_exponent(params.alpha, params.theta)},
        {"name": "sharp_constant", "value": sharp_constant(params.alpha)},
    ]
    cs1, cs2 = task.get("cstar_phi"), task.get("cstar_phi2")
    if params.regime == "short_range" and cs1 is not None and cs2 is not None:
        rows.append({
            "name": "free_energy",
            "value": continuum_free_energy_short(params, cp, cs1, cs2),
        })
        rows.append({
            "name": "critical_h",
            "value": continuum_critical_curve(params, cs1, cs2, cp.beta_hat),
        })
    if "ztilde" in task:
        zt = task["ztilde"]
        rows.append({
            "name": "ztilde_growth_rate",
            "value": ztilde_growth_rate(zt["mu"], params.alpha, zt["T"]),
        })
        rows.append({
            "name": "ztilde_growth_target",
            "value": (zt["mu"] * math.gamma(params.alpha))
            ** (1.0 / params.alpha),
        })
    _emit(ctx, "continuum", ("name", "value"), rows)
    code = EXIT_OK
    if "mc" in task:
        mc = task["mc"]
        est = continuum_free_energy_mc(
            params, cp, T=mc["T"], dt=mc.get("dt"), n_paths=mc["n_paths"],
            seed=job_seed(ctx.seed, 0), eps=mc.get("eps"),
            n_bootstrap=mc.get("n_bootstrap", 200),
        )
        _emit(ctx, "continuum_mc", tuple(mc_record(params, cp, est)),
              [mc_record(params, cp, est)])
        if est.flagged:
            code = EXIT_NUMERIC
    return code


_HANDLERS = {
    "free-energy": _run_free_energy,
    "critical-curve": _run_critical_curve,
    "localize": _run_localize,
    "bessel-check": _run_bessel_check,
    "scaling": _run_scaling,
    "continuum": _run_continuum,
}


# ---------------------------------------------------------------- entry point

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="softpin",
        description="Pinning-model numerics: free energies, critical curves, "
                    "localization criteria, and continuum limits.",
    )
    parser.add_argument("--version", action="version",
                        version=f"softpin {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True,
                                metavar="{" + ",".join(SUBCOMMANDS) + "}")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} task")
        sp.add_argument("--config", required=True,
                        help="YAML run configuration")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed (unsigned 64-bit)")
        sp.add_argument("--out", default=None,
                        help="override the output directory")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker-pool size (never changes the numbers)")
        sp.add_argument("--format", choices=("csv", "json"), default=None,
                        help="override the output format")
    return parser


def run(subcommand: str, config: dict, *, seed: int | None = None,
        out: str | None = None, fmt: str | None = None,
        threads: int = 1) -> int:
    """Validate and execute one subcommand; returns the process exit code."""
    try:
        _validate(config, subcommand)
        output = config.get("output", {})
        eff_seed = seed if seed is not None else config.get("seed", 0)
        if not 0 <= eff_seed < 2 ** 64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        out_dir = out if out is not None else output.get("dir", ".")
        eff_fmt = fmt if fmt is not None else output.get("format", "csv")
        prefix = output.get("prefix") or ""
        if prefix and not prefix.endswith("_"):
            prefix += "_"
        numerics = {
            "m_max": 4096, "l": None, "tol": 1e-3, "n_points": 6,
            **config.get("numerics", {}),
        }
        ctx = RunContext(
            seed=eff_seed, out_dir=out_dir, fmt=eff_fmt, prefix=prefix,
            threads=max(1, threads),
            meta={
                "config_sha256": config_digest(config, eff_seed),
                "version": __version__,
                "subcommand": subcommand,
            },
            numerics=numerics,
        )
        try:
            os.makedirs(out_dir, exist_ok=True)
            probe = os.path.join(out_dir, ".softpin_write_probe")
            with open(probe, "w", encoding="utf-8"):
                pass
            os.remove(probe)
        except OSError as exc:
            raise ConfigError(f"output directory not writable: {exc}") from None
        return _HANDLERS[subcommand](config, ctx)
    except ConfigError as exc:
        print(f"softpin: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"softpin: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"softpin: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"softpin: numerics did not converge: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = _load_config(args.config)
    except ConfigError as exc:
        print(f"softpin: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(
        args.subcommand, config, seed=args.seed, out=args.out,
        fmt=args.format, threads=args.threads,
    )


if __name__ == "__main__":
    raise SystemExit(main())
