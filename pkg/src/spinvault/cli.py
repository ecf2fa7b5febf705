"""Command-line driver: flat JSON config in, CSV traces and report.json out.

    spinvault run --config cfg.json [--out DIR] [--threads N]
    spinvault validate --config cfg.json

All frequencies are in units of the spread sigma and all times in 1/sigma.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import EnsembleMoments, sample_explicit
from .errors import (ConfigError, InsufficientData, MissingRequired, NonDecayingTrace,
                     OutputUnwritable, ParseError, SpinvaultError, UnknownKey)
from .evolve import FidelityTrace, propagate_reduced
from .krylov import chain_survival, full_space_survival, gaussian_chain, lanczos_chain
from .optimize import (GridSpec, Objective, ObjectiveKind, fit_lifetime, grid_search,
                       improvement_factor, local_maxima)
from .protocol import free_spins, symmetric_protocol, unmodulated
from .qubit import encode, parity_phases, pauli_states, pauli_suite, retrieval_fidelity

log = logging.getLogger("spinvault")

MAGIC = "# spinvault v1"
TRACE_COLUMNS = ("time", "f_bright", "f_target", "p_G", "p_photon", "p_dark")
EXPERIMENTS = ("FreeDynamics", "Unmodulated", "Modulated", "GridTon", "GridT0",
               "PauliSuite", "OracleCheck")
DISSIPATIVE = {"Unmodulated", "Modulated", "PauliSuite"}

EXIT_CODES = {"ConfigInvalid": 2, "OutputUnwritable": 3, "NumericalFailure": 4}


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    g_eff_over_sigma: float | None = None
    gamma_over_sigma: float | None = None
    delta_over_sigma: float = math.inf
    m: int = 128
    t_on_over_tpi: float = 1.0
    t0_over_Tsigma: float = 0.1
    n_periods: int = 10
    samples_per_period: int = 20
    seed: int = 1
    output_dir: str = "out"
    input_state: str = "z+"
    raw_fidelity: bool = False
    # grid experiments
    objective: str | None = None
    objective_n: int = 5
    grid_points: int | None = None
    t_on_grid_min_over_tpi: float = 0.1
    t_on_grid_max_over_tpi: float = 4.0
    t0_grid_min_over_Tsigma: float = 0.01
    t0_grid_max_over_Tsigma: float = 0.3
    # oracle check
    n_spins: int = 10_000
    oracle_t_max: float = 5.0
    oracle_points: int = 201

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["delta_over_sigma"] = _float_out(self.delta_over_sigma)
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_INTS = {"m", "n_periods", "samples_per_period", "seed", "objective_n", "grid_points",
         "n_spins", "oracle_points"}
_STRS = {"experiment", "output_dir", "input_state", "objective"}


def _float_out(x):
    return "inf" if math.isinf(x) else x


def _as_float(key, v):
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {v!r}")
    return float(v)


def _as_int(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    return int(v)


def _reject_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ConfigError(f"duplicate key {k!r}")
        seen[k] = v
    return seen


def validate_config(raw: str) -> RunConfig:
    """Parse a flat JSON object into a RunConfig with defaults filled in."""
    try:
        data = json.loads(raw, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno, e.colno) from None
    if not isinstance(data, dict):
        raise ParseError("config must be a JSON object", 1, 1)
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise UnknownKey(f"unknown key(s): {', '.join(unknown)}")

    vals = {}
    for key, v in data.items():
        if isinstance(v, (dict, list)):
            raise ConfigError(f"{key}: nested values are not allowed")
        if v is None:
            continue
        if key in _STRS:
            if not isinstance(v, str):
                raise ConfigError(f"{key}: expected a string, got {v!r}")
            vals[key] = v
        elif key in _INTS:
            vals[key] = _as_int(key, v)
        elif key == "raw_fidelity":
            if not isinstance(v, bool):
                raise ConfigError(f"raw_fidelity: expected true/false, got {v!r}")
            vals[key] = v
        else:
            vals[key] = _as_float(key, v)

    exp = vals.get("experiment")
    if exp is None:
        raise MissingRequired("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}, got {exp!r}")
    if "g_eff_over_sigma" not in vals:
        raise MissingRequired("g_eff_over_sigma")
    if exp in DISSIPATIVE and "gamma_over_sigma" not in vals:
        raise MissingRequired("gamma_over_sigma")

    if exp == "GridTon":
        vals.setdefault("objective", ObjectiveKind.FLOQUET_F1.value)
        vals.setdefault("grid_points", 79)
    elif exp == "GridT0":
        vals.setdefault("objective", ObjectiveKind.LINDBLAD_RATE.value)
        vals.setdefault("grid_points", 60)
    cfg = RunConfig(**vals)
    _check(cfg)
    return cfg


def _check(cfg: RunConfig):
    if not cfg.g_eff_over_sigma > 0 or math.isinf(cfg.g_eff_over_sigma):
        raise ConfigError("g_eff_over_sigma must be finite and > 0")
    for key in ("gamma_over_sigma", "delta_over_sigma"):
        v = getattr(cfg, key)
        if v is not None and not v >= 0:
            raise ConfigError(f"{key} must be >= 0")
    if cfg.gamma_over_sigma is not None and math.isinf(cfg.gamma_over_sigma):
        raise ConfigError("gamma_over_sigma must be finite")
    if cfg.m < 2:
        raise ConfigError("m must be >= 2")
    for key in ("t_on_over_tpi", "t0_over_Tsigma", "oracle_t_max"):
        v = getattr(cfg, key)
        if not (v > 0 and math.isfinite(v)):
            raise ConfigError(f"{key} must be finite and > 0")
    for key in ("n_periods", "samples_per_period", "objective_n", "n_spins", "oracle_points"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{key} must be >= 1")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    if cfg.input_state not in pauli_states():
        raise ConfigError(f"input_state must be one of {', '.join(pauli_states())}")
    if cfg.grid_points is not None and cfg.grid_points < 1:
        raise ConfigError("grid_points must be >= 1")
    if cfg.objective is not None:
        try:
            ObjectiveKind(cfg.objective)
        except ValueError:
            raise ConfigError(f"unknown objective {cfg.objective!r}") from None
    if not 0 < cfg.t_on_grid_min_over_tpi < cfg.t_on_grid_max_over_tpi:
        raise ConfigError("t_on grid bounds must satisfy 0 < min < max")
    if not 0 < cfg.t0_grid_min_over_Tsigma < cfg.t0_grid_max_over_Tsigma:
        raise ConfigError("t_0 grid bounds must satisfy 0 < min < max")


# ---------------------------------------------------------------- output


def _fmt(x):
    return repr(float(x))


def write_csv(path: Path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(MAGIC + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    except OSError as e:
        raise OutputUnwritable(f"cannot write {path}: {e}") from None


def write_json(path: Path, obj):
    try:
        with open(path, "w", newline="") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as e:
        raise OutputUnwritable(f"cannot write {path}: {e}") from None


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.integer):
        return int(x)
    return x


def _prepare_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputUnwritable(f"cannot create {out}: {e}") from None
    if not os.access(out, os.W_OK):
        raise OutputUnwritable(f"{out} is not writable")
    return out


# ---------------------------------------------------------------- experiments


def _derived(cfg: RunConfig):
    mom = EnsembleMoments(0.0, cfg.g_eff_over_sigma, 1.0)
    t_on = cfg.t_on_over_tpi * mom.t_pi
    t_0 = cfg.t0_over_Tsigma * mom.t_sigma
    return mom, t_on, t_0


def _lifetime(trace: FidelityTrace, gamma):
    try:
        fit = fit_lifetime(trace.stroboscopic())
    except (InsufficientData, NonDecayingTrace) as e:
        return {"tau": None, "tau_over_T": None, "reason": str(e)}, None
    T = trace.period
    res = {"tau": fit.tau, "tau_over_T": fit.tau / T, "amplitude": fit.amplitude,
           "residual": fit.residual, "n_points": fit.n_points}
    imp = improvement_factor(fit.tau, 1.0, gamma or 0.0)
    return res, imp


def _trace_experiment(cfg, out: Path, schedule_kind):
    mom, t_on, t_0 = _derived(cfg)
    T = t_on + t_0
    if schedule_kind == "Modulated":
        schedule = symmetric_protocol(t_0, t_on, cfg.delta_over_sigma)
    elif schedule_kind == "Unmodulated":
        schedule = unmodulated(T)
    else:
        schedule = free_spins(T)
    gamma = cfg.gamma_over_sigma or 0.0
    chain = gaussian_chain(mom, cfg.m)
    q = pauli_states()[cfg.input_state]
    samples = propagate_reduced(chain, schedule, gamma, encode(q, cfg.m), cfg.n_periods,
                                cfg.samples_per_period)
    if cfg.raw_fidelity:
        phases = np.ones(len(samples))
    else:
        _, phases = parity_phases(mom.g_eff, schedule, cfg.n_periods, cfg.samples_per_period)

    rows = []
    for (t, s), p in zip(samples, phases):
        ex = s.ex_amps
        rows.append((t, abs(ex[1]) ** 2, retrieval_fidelity(q, s, p), s.p_G,
                     abs(ex[0]) ** 2, float(np.sum(np.abs(ex[2:]) ** 2))))
    write_csv(out / "trace.csv", TRACE_COLUMNS, rows)

    times = np.array([r[0] for r in rows])
    f_target = np.array([r[2] for r in rows])
    trace = FidelityTrace(times, f_target, T)
    lifetime, imp = _lifetime(trace, gamma)
    strobe = trace.stroboscopic()
    below = times[f_target < 0.5]
    return {
        "schedule": {"kind": schedule.kind.value,
                     "segments": [[d, _float_out(x)] for d, x in schedule.segments]},
        "lifetime": lifetime,
        "improvement_factor": imp,
        "stroboscopic_fidelity": [float(v) for v in strobe.values],
        "first_time_below_half": float(below[0]) if below.size else None,
    }


def _grid_experiment(cfg, out: Path, axis, threads):
    mom, t_on, t_0 = _derived(cfg)
    kind = ObjectiveKind(cfg.objective)
    objective = Objective(kind, cfg.objective_n, cfg.gamma_over_sigma or 0.0)
    if kind in (ObjectiveKind.LINDBLAD_FN, ObjectiveKind.LINDBLAD_RATE) \
            and cfg.gamma_over_sigma is None:
        raise MissingRequired("gamma_over_sigma")
    if axis == "t_on":
        ton = np.linspace(cfg.t_on_grid_min_over_tpi, cfg.t_on_grid_max_over_tpi,
                          cfg.grid_points) * mom.t_pi
        t0s = np.array([t_0])
    else:
        ton = np.array([t_on])
        t0s = np.linspace(cfg.t0_grid_min_over_Tsigma, cfg.t0_grid_max_over_Tsigma,
                          cfg.grid_points) * mom.t_sigma
    grid = GridSpec(ton, t0s, objective, cfg.delta_over_sigma)
    res = grid_search(gaussian_chain(mom, cfg.m), grid, threads)
    write_csv(out / "surface.csv", ("t_on", "t_0", "fidelity"), res.rows())
    line = res.surface[0] if axis == "t_on" else res.surface[:, 0]
    values = ton if axis == "t_on" else t0s
    peaks = [float(values[k]) for k in local_maxima(line)]
    return {
        "objective": {"kind": kind.value, "n": objective.n, "gamma": objective.gamma},
        "best_t_on": res.best_t_on,
        "best_t_0": res.best_t_0,
        "best_t_on_over_tpi": res.best_t_on / mom.t_pi,
        "best_t0_over_Tsigma": res.best_t_0 / mom.t_sigma,
        "best_fidelity": res.best_fidelity,
        "local_maxima": peaks,
        "local_maxima_over_tpi" if axis == "t_on" else "local_maxima_over_Tsigma":
            [p / (mom.t_pi if axis == "t_on" else mom.t_sigma) for p in peaks],
    }


def _pauli_experiment(cfg, out: Path, threads):
    mom, t_on, t_0 = _derived(cfg)
    schedule = symmetric_protocol(t_0, t_on, cfg.delta_over_sigma)
    gamma = cfg.gamma_over_sigma
    chain = gaussian_chain(mom, cfg.m)
    suite = pauli_suite(chain, schedule, gamma, cfg.n_periods,
                        samples_per_period=cfg.samples_per_period, raw=cfg.raw_fidelity,
                        threads=threads)
    summary = {}
    for label, tr in suite.items():
        name = {"+": "plus", "-": "minus"}[label[1]]
        rows = zip(tr.modulated.times, tr.modulated.values, tr.unmodulated.values)
        write_csv(out / f"pauli_{label[0]}_{name}.csv",
                  ("time", "fidelity_modulated", "fidelity_unmodulated"), rows)
        mod_fit, _ = _lifetime(tr.modulated, gamma)
        unm_fit, _ = _lifetime(tr.unmodulated, gamma)
        summary[label] = {"lifetime_modulated": mod_fit, "lifetime_unmodulated": unm_fit,
                          "final_modulated": float(tr.modulated.values[-1]),
                          "final_unmodulated": float(tr.unmodulated.values[-1])}
    write_json(out / "pauli_summary.json", summary)
    return {"states": summary}


def _oracle_experiment(cfg, out: Path):
    spec = sample_explicit(0.0, 1.0, cfg.g_eff_over_sigma, cfg.n_spins, cfg.seed)
    chain = lanczos_chain(spec, cfg.m)
    times = np.linspace(0.0, cfg.oracle_t_max, cfg.oracle_points)
    delta = 0.0 if math.isinf(cfg.delta_over_sigma) else cfg.delta_over_sigma
    a_chain = chain_survival(chain, times, delta)
    a_full = full_space_survival(spec, times, delta)
    f_chain, f_full = np.abs(a_chain) ** 2, np.abs(a_full) ** 2
    write_csv(out / "oracle.csv", ("time", "f_chain", "f_full", "abs_error"),
              zip(times, f_chain, f_full, np.abs(f_chain - f_full)))
    return {
        "chain_m": chain.m,
        "max_abs_fidelity_error": float(np.max(np.abs(f_chain - f_full))),
        "max_abs_amplitude_error": float(np.max(np.abs(a_chain - a_full))),
        "sample_sigma": chain.sigma,
    }


def run(cfg: RunConfig, out_dir=None, threads=None) -> dict:
    """Execute one experiment; returns the report that is also written to report.json."""
    out = _prepare_dir(out_dir or cfg.output_dir)
    start = time.perf_counter()
    mom, t_on, t_0 = _derived(cfg)
    exp = cfg.experiment
    if exp in ("FreeDynamics", "Unmodulated", "Modulated"):
        result = _trace_experiment(cfg, out, exp)
    elif exp == "GridTon":
        result = _grid_experiment(cfg, out, "t_on", threads)
    elif exp == "GridT0":
        result = _grid_experiment(cfg, out, "t_0", threads)
    elif exp == "PauliSuite":
        result = _pauli_experiment(cfg, out, threads)
    else:
        result = _oracle_experiment(cfg, out)
    report = {
        "version": __version__,
        "config": cfg.to_dict(),
        "derived": {"T": t_on + t_0, "t_on": t_on, "t_0": t_0, "t_pi": mom.t_pi,
                    "T_sigma": mom.t_sigma},
        "result": result,
        "lifetime": result.get("lifetime"),
        "improvement_factor": result.get("improvement_factor"),
        "timing": {"wall_seconds": time.perf_counter() - start},
    }
    write_json(out / "report.json", report)
    return report


# ---------------------------------------------------------------- entry point


def _read_config(path):
    try:
        return Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None


def _fail(err: SpinvaultError):
    body = {"error": err.category, "type": type(err).__name__, "message": str(err)}
    if isinstance(err, ParseError):
        body.update(line=err.line, column=err.offset)
    diag = getattr(err, "diagnostics", None)
    if diag:
        body["diagnostics"] = {k: (str(v) if isinstance(v, complex) else v) for k, v in diag.items()}
    print(json.dumps(_jsonable(body)), file=sys.stderr)
    return EXIT_CODES.get(err.category, 1)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="spinvault", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", help="output directory (overrides output_dir)")
    p_run.add_argument("--threads", type=int, help="worker threads (default: $SPINVAULT_THREADS or 1)")
    p_val = sub.add_parser("validate", help="check a config and print it with defaults")
    p_val.add_argument("--config", required=True)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        cfg = validate_config(_read_config(args.config))
        if args.cmd == "validate":
            print(json.dumps(_jsonable(cfg.to_dict()), indent=2, sort_keys=True))
            return 0
        report = run(cfg, args.out, args.threads)
    except SpinvaultError as e:
        return _fail(e)
    log.info("done in %.2fs", report["timing"]["wall_seconds"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
