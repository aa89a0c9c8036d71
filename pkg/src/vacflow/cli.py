"""Command line runner: ``vacflow <command> [--config PATH] [--out DIR] [--seed N]``.

Exit codes: 0 success or certified, 1 certificate failed, 2 configuration
error, 3 numerical failure.
"""

import argparse
import csv
from dataclasses import dataclass, fields
import math
import os
import sys

import numpy as np

from . import scenarios
from .defects import compatibility_check, estimate_numerical_defect, psd_check, write_defect_csv
from .errors import ConfigError, VacflowError
from .relenergy import epsilon_shift, gronwall_monitor, rei_terms, write_certificate_csv
from .solver1d import Grid1D, energy_inequality_residual, run, transport_run, write_trajectory_csv
from .transport import (
    DensityProfile,
    VelocityFieldSpec,
    continuity_residual,
    decay_propagation_check,
    density_from_characteristics,
    mass_criterion,
    mass_threshold,
)
from .constitutive import PressureLaw

__all__ = ["ExperimentConfig", "parse_config", "run_scenario", "main", "COMMANDS"]

COMMANDS = ("simulate", "characteristics", "rel-energy", "certify", "sweep", "predicates")

EXIT_OK, EXIT_CERT_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


@dataclass
class ExperimentConfig:
    scenario: str = "smooth-pulse"
    a: float = 1.0
    gamma: float = 1.5
    nu: float = 0.1
    x_min: float = 0.0
    x_max: float = 1.0
    n_cells: int = 50
    cfl: float = 0.4
    dt: float = 0.0  # 0 selects equal steps at half the initial CFL step
    t_end: float = 0.5
    reference: str = "fine-solver"
    epsilons: tuple = ()  # empty selects the automatic ladder
    perturbation: float = 0.0
    ladder: int = 3
    alpha: float = 3.0
    output: str = "vacflow-out"
    seed: int = 0

    def case(self, n_cells=None):
        return scenarios.build_case(
            self.scenario, self.a, self.gamma, self.nu, self.x_min, self.x_max,
            n_cells or self.n_cells, self.t_end, self.alpha,
        )

    def as_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(f"{e:.17g}" for e in v)
            elif isinstance(v, float):
                v = f"{v:.17g}"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


# key -> (parser, check, description of the allowed range)
def _positive(v):
    return v > 0


_RULES = {
    "scenario": (str, lambda v: v in scenarios.SCENARIOS, "one of " + ", ".join(scenarios.SCENARIOS)),
    "a": (float, _positive, "a > 0"),
    "gamma": (float, lambda v: 1.0 < v <= 2.0, "gamma in (1, 2]"),
    "nu": (float, _positive, "nu > 0"),
    "x_min": (float, math.isfinite, "finite"),
    "x_max": (float, math.isfinite, "finite and > x_min"),
    "n_cells": (int, lambda v: v >= 4, "n_cells >= 4"),
    "cfl": (float, lambda v: 0.0 < v <= 1.0, "cfl in (0, 1]"),
    "dt": (float, lambda v: v >= 0.0, "dt >= 0 (0 = automatic)"),
    "t_end": (float, _positive, "t_end > 0"),
    "reference": (str, lambda v: v in ("fine-solver", "characteristics"), "fine-solver or characteristics"),
    "epsilons": (None, lambda v: all(e > 0 for e in v) and (len(v) == 0 or len(v) >= 3),
                 "comma-separated positive numbers, at least 3 (empty = automatic)"),
    "perturbation": (float, lambda v: v >= 0.0, "perturbation >= 0"),
    "ladder": (int, lambda v: 2 <= v <= 6, "ladder in [2, 6]"),
    "alpha": (float, lambda v: v > 1.0, "alpha > 1"),
    "output": (str, lambda v: len(v) > 0, "non-empty path"),
    "seed": (int, lambda v: v >= 0, "seed >= 0"),
}


def _parse_value(key, raw):
    kind = _RULES[key][0]
    try:
        if kind is None:
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            return tuple(float(p) for p in parts)
        if kind is int:
            return int(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} (allowed: {_RULES[key][2]})") from None


def parse_config(text):
    """Parse ``key = value`` lines (``#`` starts a comment) into a validated config."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _RULES:
            raise ConfigError(f"unknown key {key!r}; allowed keys: {', '.join(sorted(_RULES))}")
        values[key] = _parse_value(key, raw)
    cfg = ExperimentConfig(**values)
    for key, (_, check, allowed) in _RULES.items():
        if not check(getattr(cfg, key)):
            raise ConfigError(f"{key} = {getattr(cfg, key)!r} is out of range (allowed: {allowed})")
    if not cfg.x_max > cfg.x_min:
        raise ConfigError(f"x_max = {cfg.x_max} is out of range (allowed: {_RULES['x_max'][2]})")
    return cfg


# --------------------------------------------------------------------------
# commands


def _fmt(v):
    return f"{v:.17g}" if isinstance(v, (float, np.floating)) else str(v)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _n_steps(cfg, case, grid=None):
    if cfg.dt > 0:
        return max(1, math.ceil(case.t_end / cfg.dt - 1e-9))
    return scenarios.fixed_step_count(case, grid, cfg.cfl)


def _cmd_simulate(cfg, out, log):
    case = cfg.case()
    traj, ledger = run(case.initial_state(), case.bc, case.law, case.nu, case.t_end,
                       n_steps=_n_steps(cfg, case), cfl=cfg.cfl)
    write_trajectory_csv(traj, os.path.join(out, "trajectory.csv"))
    arr = ledger.as_arrays()
    keys = ["times", "energy", "mass", "mass_inflow", "boundary_energy", "dissipation", "work", "defect"]
    _write_rows(os.path.join(out, "ledger.csv"), ["t"] + keys[1:], zip(*(arr[k] for k in keys)))
    E, R = estimate_numerical_defect(ledger, dim=1)
    write_defect_csv(E, R, os.path.join(out, "defects.csv"))
    series = energy_inequality_residual(traj, ledger, case.bc, case.law)
    log(f"SIMULATE {cfg.scenario} steps={len(traj.times) - 1} mass_change={ledger.mass[-1] - ledger.mass[0]:.3e} "
        f"defect={ledger.defect[-1]:.6g} negative_part={series.negative_part:.3e} "
        f"psd={'yes' if psd_check(R) else 'no'} compatible={'yes' if compatibility_check(E, R, 1, 1) else 'no'}")
    return EXIT_OK


def _cmd_characteristics(cfg, out, log):
    grid = Grid1D(cfg.x_min, cfg.x_max, cfg.n_cells)
    mid = 0.5 * (cfg.x_min + cfg.x_max)
    L = grid.length
    spec = VelocityFieldSpec.compact_bump(0.5, radius=0.25 * L)
    shifted = VelocityFieldSpec.from_1d(lambda t, x: spec.u1(t, x - mid), lambda t, x: spec.ux1(t, x - mid))
    rho0 = DensityProfile(lambda x: np.exp(-((x - mid) / (0.1 * L)) ** 2))
    x = grid.centers
    rho_char = density_from_characteristics(rho0, None, shifted, cfg.t_end, x)
    rho_fv = transport_run(rho0, grid, shifted, cfg.t_end, cfl=cfg.cfl)
    rho_fn = lambda t, y: density_from_characteristics(rho0, None, shifted, t, y)
    h = min(1e-3, 0.5 * cfg.t_end)
    res = continuity_residual(rho_fn, shifted, x, cfg.t_end, h)
    _write_rows(os.path.join(out, "characteristics.csv"), ["x_center", "rho_characteristics", "rho_finite_volume"],
                zip(x, rho_char, rho_fv))
    l1 = float(np.sum(np.abs(rho_char - rho_fv)) * grid.dx)
    log(f"CHARACTERISTICS t={cfg.t_end:.6g} continuity_residual={res:.3e} l1_vs_finite_volume={l1:.3e}")
    return EXIT_OK


def _trace_for(cfg, n_cells=None, perturbation=None):
    case = cfg.case(n_cells)
    pert = cfg.perturbation if perturbation is None else perturbation
    n_steps = _n_steps(cfg, case)
    if cfg.reference == "fine-solver":
        traj, ledger, ref = scenarios.weak_strong_run(case, case.grid.n_cells, n_steps, perturbation=pert)
    else:
        ref, _ = scenarios.characteristics_reference(case)
        every = max(1, n_steps // 20)
        state = case.initial_state()
        if pert:
            s = (case.grid.centers - case.grid.x_min) / case.grid.length
            state.mom = state.rho * (state.u + pert * np.sin(2.0 * np.pi * s))
            state.vel = state.u.copy()
        traj, ledger = run(state, case.bc, case.law, case.nu, case.t_end, n_steps=n_steps, save_every=every)
    rho_ref = ref.rho(0.0, traj.grid.centers)
    if np.any(rho_ref <= 0) and case.law.gamma < 2:
        ref = epsilon_shift(ref, float(scenarios.auto_epsilons(rho_ref)[-1]))
    return rei_terms(traj, ref, case.law, bc=case.bc)


def _write_trace(trace, path):
    _write_rows(path, ["tau", "E", "lhs", "rhs", "violation", "chi", "residual_rate"],
                zip(trace.times, trace.E, trace.lhs, trace.rhs, trace.violation, trace.chi, trace.residual_rate))


def _cmd_rel_energy(cfg, out, log):
    trace = _trace_for(cfg)
    _write_trace(trace, os.path.join(out, "rel_energy.csv"))
    cert = gronwall_monitor(trace)
    write_certificate_csv(cert, os.path.join(out, "certificate.csv"))
    log(f"REL-ENERGY {cfg.scenario} sup_E={trace.E.max():.6g} max_violation={trace.max_violation:.3e} "
        f"reference={trace.provenance}")
    return EXIT_OK


def _cmd_certify(cfg, out, log):
    trace = _trace_for(cfg)
    cert = gronwall_monitor(trace)
    write_certificate_csv(cert, os.path.join(out, "certificate.csv"))
    log(cert.summary(cfg.scenario))
    return EXIT_OK if cert.passed else EXIT_CERT_FAILED


def _order(prev, cur):
    if prev is None or prev <= 0 or cur <= 0:
        return float("nan")
    return math.log2(prev / cur)


def _cmd_sweep(cfg, out, log):
    rows = []
    prev_E = prev_v = prev_d = None
    for k in range(cfg.ladder):
        n = cfg.n_cells * 2**k
        trace = _trace_for(cfg, n_cells=n)
        case = cfg.case(n)
        traj, ledger = run(case.initial_state(), case.bc, case.law, case.nu, case.t_end,
                           n_steps=_n_steps(cfg, case))
        supE = float(trace.E.max())
        viol = trace.max_violation
        defect = float(np.max(np.abs(ledger.defect)))
        rows.append((n, case.grid.dx, supE, _order(prev_E, supE), viol, _order(prev_v, viol),
                     defect, _order(prev_d, defect)))
        prev_E, prev_v, prev_d = supE, viol, defect
    _write_rows(os.path.join(out, "sweep.csv"),
                ["n_cells", "dx", "sup_E", "order_E", "max_violation", "order_violation",
                 "energy_defect", "order_energy_defect"], rows)
    for r in rows:
        log("SWEEP " + " ".join(_fmt(v) for v in r))
    return EXIT_OK


def _cmd_predicates(cfg, out, log):
    gammas = sorted({1.1, 1.5, 2.0, cfg.gamma})
    rows = [(g, mass_threshold(g), cfg.alpha, mass_criterion(cfg.alpha, g)) for g in gammas]
    _write_rows(os.path.join(out, "mass_criterion.csv"), ["gamma", "threshold", "alpha", "admissible"], rows)
    for g, thr, a, ok in rows:
        log(f"THRESHOLD gamma={g:g} threshold={thr:g} alpha={a:g} admissible={ok}")
    decay_rows = []
    spec = VelocityFieldSpec.compact_bump(0.5, radius=1.0)
    for alpha, gamma in sorted({(3.0, 1.5), (4.0, 1.5), (3.0, 2.0), (cfg.alpha, cfg.gamma)}):
        law = PressureLaw(cfg.a, gamma)
        rep = decay_propagation_check(DensityProfile.polynomial_decay(alpha, gamma), spec, law, cfg.t_end)
        decay_rows.append((alpha, gamma, rep.beta_expected, rep.beta_fit, rep.rel_error, rep.passed))
    _write_rows(os.path.join(out, "decay.csv"),
                ["alpha", "gamma", "beta_expected", "beta_fit", "rel_error", "passed"], decay_rows)
    return EXIT_OK


_DISPATCH = {
    "simulate": _cmd_simulate,
    "characteristics": _cmd_characteristics,
    "rel-energy": _cmd_rel_energy,
    "certify": _cmd_certify,
    "sweep": _cmd_sweep,
    "predicates": _cmd_predicates,
}


def run_scenario(config, command, out_dir=None, log=print):
    """Run ``command`` with a parsed config; returns the exit code."""
    if command not in _DISPATCH:
        raise ConfigError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    out = out_dir or config.output
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.txt"), "w") as fh:
        fh.write(config.as_text())
    return _DISPATCH[command](config, out, log)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="vacflow", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--out", help="output directory (overrides the 'output' key)")
    parser.add_argument("--seed", type=int, help="seed recorded with the run (overrides the 'seed' key)")
    args = parser.parse_args(argv)
    try:
        text = ""
        if args.config:
            with open(args.config) as fh:
                text = fh.read()
        cfg = parse_config(text)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed = %d is out of range (allowed: seed >= 0)" % args.seed)
            cfg.seed = args.seed
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with np.errstate(over="raise", invalid="ignore"):
            return run_scenario(cfg, args.command, args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (VacflowError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
