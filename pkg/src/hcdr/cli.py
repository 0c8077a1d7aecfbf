"""Command-line driver: plan, simulate and verify.

Exit codes: 0 success, 1 property failure, 2 input error, 3 numeric failure
(blow-up, singular solve, infeasible tensions), 4 validation error (plan file
inconsistent with the scenario).

CSV files have a header row, time in the first column and 12 significant
digits. Column layouts are fixed by :data:`PLAN_COLUMNS` and
:data:`SIM_COLUMNS`.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import cable_tension as ct
from . import control as ctl
from . import dynamics as dyn
from . import kinematics as kin
from . import redundancy as red
from . import sim
from .config import (ConfigError, load_params, load_scenario, params_to_dict,
                     scenario_to_dict)

EXIT_OK, EXIT_PROPERTY, EXIT_INPUT, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3, 4

_Q_NAMES = ["p_mx", "p_my", "p_mz", "alpha_m", "beta_m", "gamma_m",
            "theta_p1", "theta_p2", "theta_a1", "theta_a2", "theta_a3"]
_A_NAMES = [_Q_NAMES[i] for i in kin.IDX_A]
_U_NAMES = [_Q_NAMES[i] for i in kin.IDX_U]

PLAN_COLUMNS = (["time"] + [f"q_{n}" for n in _A_NAMES] + [f"qd_{n}" for n in _A_NAMES]
                + [f"q_{n}" for n in _U_NAMES] + [f"qd_{n}" for n in _U_NAMES]
                + ["theta_p1", "theta_p2", "thetad_p1", "thetad_p2",
                   "p_ex", "p_ey", "p_ez", "residual", "cost", "clamped", "rank"])
SIM_COLUMNS = (["time"] + [f"q_{n}" for n in _Q_NAMES] + [f"qd_{n}" for n in _Q_NAMES]
               + ["u_dT3", "u_dT4", "u_tau_p1", "u_tau_p2", "u_tau_a1", "u_tau_a2", "u_tau_a3"]
               + ["T_1", "T_2", "T_3", "T_4", "p_ex", "p_ey", "p_ez",
                  "ref_ex", "ref_ey", "ref_ez", "energy"])


class CliError(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


# ---------------------------------------------------------------------------
# files


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.12g}" for v in row])


def _read_csv(path: Path):
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = np.array([[float(v) for v in row] for row in reader])
    except (OSError, StopIteration, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"cannot read plan {path}: {exc}") from None
    return header, data


def plan_rows(plan: red.PlanResult):
    return np.column_stack([plan.time, plan.q_A, plan.qd_A, plan.q_U, plan.qd_U, plan.theta_p,
                            plan.qd[:, kin.IDX_P], plan.p_e, plan.residual, plan.cost,
                            plan.clamped.astype(float), plan.rank.astype(float)])


def write_plan_csv(path, plan: red.PlanResult):
    _write_csv(Path(path), PLAN_COLUMNS, plan_rows(plan))


def read_plan_csv(path, scenario) -> red.PlanResult:
    """Rebuild a :class:`PlanResult` from ``plan.csv`` and check it against ``scenario``."""
    header, data = _read_csv(Path(path))
    if header != PLAN_COLUMNS:
        raise CliError(EXIT_VALIDATION, f"{path}: unexpected columns")
    n = int(round((scenario.t_end - scenario.t_start) / scenario.sample_time)) + 1
    if data.ndim != 2 or len(data) != n:
        raise CliError(EXIT_VALIDATION,
                       f"{path}: {len(data)} rows but the scenario horizon needs {n}")
    col = {name: i for i, name in enumerate(header)}
    q = np.zeros((n, kin.N_Q))
    qd = np.zeros((n, kin.N_Q))
    for i, name in enumerate(_Q_NAMES):
        if f"q_{name}" in col:
            q[:, i] = data[:, col[f"q_{name}"]]
            qd[:, i] = data[:, col[f"qd_{name}"]]
    q[:, kin.IDX_P] = data[:, [col["theta_p1"], col["theta_p2"]]]
    qd[:, kin.IDX_P] = data[:, [col["thetad_p1"], col["thetad_p2"]]]
    time_ = data[:, 0]
    if np.abs(np.diff(time_) - scenario.sample_time).max() > 1e-9:
        raise CliError(EXIT_VALIDATION, f"{path}: sample time differs from the scenario")
    return red.PlanResult(time_, q, qd, data[:, [col["p_ex"], col["p_ey"], col["p_ez"]]],
                          data[:, col["cost"]], data[:, col["residual"]],
                          data[:, col["clamped"]] > 0.5, data[:, col["rank"]].astype(int), "file")


def write_sim_csv(path, trace: sim.SimTrace):
    rows = np.column_stack([trace.time, trace.q, trace.qd, trace.u, trace.tensions, trace.p_e,
                            trace.p_ref, trace.energy])
    _write_csv(Path(path), SIM_COLUMNS, rows)


def _manifest(argv, params, scenario, duration, timings):
    return {
        "command": ["hcdr", *argv],
        "params_hash": _digest(params_to_dict(params)),
        "scenario_hash": _digest(scenario_to_dict(scenario)),
        "code_version": __version__,
        "duration_s": duration,
        "timings_s": timings,
    }


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n")


# ---------------------------------------------------------------------------
# commands


def _load_inputs(args, scenario_file):
    try:
        params = load_params(args.params)
        scenario = load_scenario(scenario_file)
    except ConfigError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None
    return params, scenario


def _out_dir(base, scenario_file, multiple):
    out = Path(base)
    if multiple:
        out = out / Path(scenario_file).stem
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_plan(params, scenario, method):
    try:
        return red.plan(scenario, params, method=method)
    except red.PlanningError as exc:
        raise CliError(EXIT_NUMERIC, str(exc)) from None


def plan_one(args, scenario_file, multiple=False):
    params, scenario = _load_inputs(args, scenario_file)
    out = _out_dir(args.out, scenario_file, multiple)
    t0 = time.perf_counter()
    plan = _run_plan(params, scenario, args.method)
    write_plan_csv(out / "plan.csv", plan)
    _write_json(out / "manifest.json",
                _manifest(args.argv, params, scenario, time.perf_counter() - t0, plan.timings))
    return f"{scenario.name}: {len(plan)} rows, final error " \
           f"{np.linalg.norm(plan.p_e[-1] - scenario.waypoints[-1]):.3e} m -> {out / 'plan.csv'}"


def simulate_one(args, scenario_file, multiple=False):
    params, scenario = _load_inputs(args, scenario_file)
    out = _out_dir(args.out, scenario_file, multiple)
    t0 = time.perf_counter()
    timings = {}
    if args.plan is not None:
        plan = read_plan_csv(args.plan, scenario)
    else:
        plan = _run_plan(params, scenario, args.method)
        timings["plan"] = plan.duration
    if args.control is None:
        gains = None
    else:
        gains = (ctl.ControlGains(scenario.kp, scenario.kd, scenario.ki) if args.control == "on"
                 else ctl.ControlGains.zeros())
    ff = sim.plan_feedforward(params, plan) if args.feedforward else None
    try:
        trace = sim.simulate(scenario, params, plan, gains=gains, feedforward=ff)
    except sim.SimulationBlowUp as exc:
        raise CliError(EXIT_NUMERIC, f"{exc} (step {exc.step})") from None
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, str(exc)) from None
    except (np.linalg.LinAlgError, ct.InfeasibleTensionError) as exc:
        raise CliError(EXIT_NUMERIC, str(exc)) from None
    timings.update(trace.timings)
    write_sim_csv(out / "sim.csv", trace)
    t_after = max((c.t_off for c in scenario.disturbance), default=scenario.t_start)
    err = trace.max_error
    summary = {
        "scenario": scenario.name,
        "control": "on" if (gains if gains is not None else
                            ctl.ControlGains.from_scenario(scenario)).kp.any() else "off",
        "feedforward": bool(args.feedforward),
        "max_error": err.tolist(),
        "max_error_time": trace.time[np.abs(trace.tracking_error).argmax(axis=0)].tolist(),
        "final_error": trace.tracking_error[-1].tolist(),
        "post_pulse_qd_u": sim.post_pulse_norms(trace.time, trace.qd[:, kin.IDX_U], t_after),
        "energy_range": float(np.ptp(trace.energy)),
        "steps": len(trace.time),
    }
    _write_json(out / "summary.json", summary)
    _write_json(out / "manifest.json",
                _manifest(args.argv, params, scenario, time.perf_counter() - t0, timings))
    return f"{scenario.name}: max error {np.array2string(err, precision=4)} m -> {out / 'sim.csv'}"


def _dispatch(job):
    func, args, scenario_file, multiple = job
    try:
        return EXIT_OK, func(args, scenario_file, multiple)
    except CliError as exc:
        return exc.code, f"error: {exc}"


def _run_scenarios(func, args):
    files = args.scenario
    multiple = len(files) > 1
    jobs = [(func, args, f, multiple) for f in files]
    if args.jobs > 1 and multiple:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_dispatch, jobs))
    else:
        results = [_dispatch(j) for j in jobs]
    code = EXIT_OK
    for c, msg in results:
        print(msg, file=sys.stderr if c else sys.stdout)
        code = code or c
    return code


# ---------------------------------------------------------------------------
# verify


def _property_checks(params, samples, seed):
    """Yield ``(name, worst, tol)``; a check passes when ``worst <= tol``."""
    rng = np.random.default_rng(seed)
    Q, QD = kin.random_states(rng, samples)

    worst = 0.0
    for q in Q:
        M = dyn.mass_matrix(params, q)
        asym = np.abs(M - M.T).max() / np.abs(M).max()
        worst = max(worst, asym, 1.0 if np.linalg.eigvalsh(0.5 * (M + M.T)).min() <= 0 else 0.0)
    yield "mass matrix symmetric positive definite", worst, 1e-12

    worst = 0.0
    for q, qd in zip(Q, QD):
        dM = np.einsum("kij,k->ij", dyn.mass_matrix_derivatives(params, q), qd)
        C = dyn.coriolis_matrix(params, q, qd)
        worst = max(worst, abs(qd @ (dM - 2 * C) @ qd))
    yield "skew symmetry of Mdot - 2C", worst, 1e-6

    worst = 0.0
    h = 1e-6
    for q in Q:
        G = dyn.gravity_vector(params, q)
        fd = np.array([(dyn.potential_energy(params, q + h * e) -
                        dyn.potential_energy(params, q - h * e)) / (2 * h) for e in np.eye(kin.N_Q)])
        worst = max(worst, np.abs(G - fd).max() / max(np.abs(G).max(), 1.0))
    yield "gravity vector equals potential gradient", worst, 1e-5

    worst = 0.0
    for q, qd in zip(Q, QD):
        ke = dyn.kinetic_energy(params, q, qd)
        worst = max(worst, abs(ke - 0.5 * qd @ dyn.mass_matrix(params, q) @ qd) / max(ke, 1e-12))
    yield "kinetic energy equals quadratic form", worst, 1e-9

    worst = 0.0
    h = 1e-7
    for q, qd in zip(Q, QD):
        J = kin.task_jacobian(params, q)
        p_plus = kin.end_effector(params, q + h * red._embed_a(qd[kin.IDX_A]))
        p_minus = kin.end_effector(params, q - h * red._embed_a(qd[kin.IDX_A]))
        worst = max(worst, np.abs((p_plus - p_minus) / (2 * h) - J @ qd[kin.IDX_A]).max())
    yield "task Jacobian matches finite differences", worst, 1e-5

    worst = 0.0
    for q in Q:
        J = kin.task_jacobian(params, q)
        Jp, _ = red.pseudo_inverse(J)
        P = red.null_projector(J, Jp)
        worst = max(worst, np.abs(P @ P - P).max(), np.abs(P - P.T).max(), np.abs(J @ P).max())
    yield "null-space projector identities", worst, 1e-10

    worst = 0.0
    W = ct.gravity_wrench(params)
    for x in np.linspace(-0.4, 0.4, 9):
        for y in np.linspace(-0.3, 0.3, 7):
            q = np.zeros(kin.N_Q)
            q[:2] = x, y
            try:
                sol = ct.optimal_tensions(params, q)
            except (ct.InfeasibleTensionError, ct.SingularStructureError, kin.DegenerateCableError,
                    np.linalg.LinAlgError):
                worst = np.inf
                break
            # on the symmetry line both lower groups tie at the limit
            lower = sol.T_opt[2:]
            pinned_ok = (lower[sol.saturated - 2] == params.t34_max
                         and lower.max() <= params.t34_max + 1e-9 and sol.T_opt.min() >= 0)
            balance = np.abs(sol.A_m3 @ sol.T_opt - W).max() / W[1]
            worst = max(worst, balance, 0.0 if pinned_ok else 1.0)
        if not np.isfinite(worst):
            break
    yield "tension feasibility grid", worst, 1e-9


def verify(args):
    try:
        params = load_params(args.params)
    except ConfigError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None
    failed = []
    for name, worst, tol in _property_checks(params, args.samples, args.seed):
        ok = bool(worst <= tol)
        print(f"{'PASS' if ok else 'FAIL'}  {name:45s} worst {worst:.3e}  (tol {tol:.0e})")
        if not ok:
            failed.append(name)
    if failed:
        print(f"{len(failed)} propert{'y' if len(failed) == 1 else 'ies'} failed: "
              + ", ".join(failed))
        return EXIT_PROPERTY
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="hcdr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--params", default=None, help="parameter file (default: bundled)")
        p.add_argument("--scenario", nargs="+", required=True,
                       help="scenario file(s) or bundled names (scenario1, scenario2)")
        p.add_argument("--method", choices=("toaj", "toauj"), default=None,
                       help="planner (default: the scenario's)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel scenario runs")

    p = sub.add_parser("plan", help="resolve the scenario trajectory into joint motion")
    common(p)

    p = sub.add_parser("simulate", help="track a plan with the closed-loop plant")
    common(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--plan", default=None, help="plan.csv from a previous `plan` run")
    src.add_argument("--replan", action="store_true", help="plan first (the default)")
    p.add_argument("--control", choices=("on", "off"), default=None,
                   help="controller gains (default: the scenario's)")
    p.add_argument("--feedforward", action="store_true",
                   help="add planned joint torques to the pendulum and arm inputs")

    p = sub.add_parser("verify", help="run the model property checks")
    p.add_argument("--params", default=None)
    p.add_argument("--samples", type=int, default=20, help="random states per check")
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        if args.command == "plan":
            return _run_scenarios(plan_one, args)
        if args.command == "simulate":
            return _run_scenarios(simulate_one, args)
        return verify(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
