"""Command-line front end.

Exit codes: 0 certified, 1 input error, 2 common-eigenvector assignment
infeasible, 3 no CQLF / LMI infeasible, 4 an embedded example did not
reproduce its expected verdict.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .cea import CeaOptions
from .fileio import Problem, ProblemError, dumps, encode, load_problem, problem_to_obj
from .fixtures import example_41, example_42, example_43
from .lmi import DEFAULT_FLOOR, CqlfCertificate, SynthesisCertificate, check_cqlf, realify, synthesize_lmi
from .model import SwitchedSystem, validate
from .simulate import (DEFAULT_HORIZON, RandomSwitching, adversarial_switch,
                       certified_decrease_factor, rollout)
from .triangularize import (DEFAULT_TAU_IM, DesignFailure, RealizationRefused, realize_real_gains,
                            run_algorithm1)

EXIT_OK, EXIT_INPUT, EXIT_CEA, EXIT_NO_CQLF, EXIT_EXAMPLE = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class Settings:
    eps_c: float = 1e-4
    eps_d: float = 1e-4
    multistart: int = 32
    seed: int = 0
    horizon: int = DEFAULT_HORIZON
    cert_floor: float = DEFAULT_FLOOR
    tau_im: float = DEFAULT_TAU_IM

    def cea_options(self) -> CeaOptions:
        return CeaOptions(multistart=self.multistart, seed=self.seed)


class InputError(Exception):
    pass


def env_seed() -> int:
    raw = os.environ.get("SWITCHSTAB_SEED")
    if raw is None:
        return 0
    try:
        seed = int(raw)
    except ValueError:
        raise InputError(f"SWITCHSTAB_SEED={raw!r} is not an integer") from None
    if seed < 0:
        raise InputError("SWITCHSTAB_SEED must be nonnegative")
    return seed


def resolve_settings(args, params: dict | None = None) -> Settings:
    """Flags override problem-file params, which override defaults and ``SWITCHSTAB_SEED``."""
    params = dict(params or {})
    tol = params.pop("tolerances", {})
    vals = {"seed": env_seed()}
    vals.update({k: v for k, v in params.items() if k in Settings.__dataclass_fields__})
    if "cert_floor" in tol:
        vals["cert_floor"] = tol["cert_floor"]
    if "tau_im" in tol:
        vals["tau_im"] = tol["tau_im"]
    for key in ("eps_c", "eps_d", "multistart", "seed", "horizon", "cert_floor"):
        val = getattr(args, key, None)
        if val is not None:
            vals[key] = val
    s = Settings(**vals)
    if not (0 < s.eps_c < 1 and 0 < s.eps_d < 1):
        raise InputError("eps_c and eps_d must lie in (0, 1)")
    if s.cert_floor <= 0:
        raise InputError("cert floor must be positive")
    return s


def _closed_loops(system: SwitchedSystem, gains) -> np.ndarray:
    return np.stack([m.A + np.outer(m.b, K) for m, K in zip(system.modes, np.asarray(gains))])


def _as_real_loops(Acl: np.ndarray) -> tuple[np.ndarray, bool]:
    if np.any(Acl.imag):
        return np.stack([realify(A) for A in Acl]), True
    return Acl.real, False


def certificate_obj(cert) -> dict:
    if isinstance(cert, CqlfCertificate):
        return {"type": "cqlf", "P": cert.P, "margin_pd": cert.margin_pd,
                "margins_decrease": cert.margins_decrease, "floor": cert.floor}
    if isinstance(cert, SynthesisCertificate):
        return {"type": "lmi_synthesis", "X": cert.X, "N": cert.N, "gains": cert.gains,
                "block_margins": cert.block_margins, "floor": cert.floor,
                "cqlf": certificate_obj(cert.cqlf)}
    return {"type": "infeasible", "reason": cert.reason, "best_objective": cert.best_objective,
            "iterations": cert.iterations, "heuristic": cert.heuristic,
            "best_margin": cert.best_margin}


def simulation_obj(Acl_real: np.ndarray, cert: CqlfCertificate | None, s: Settings) -> dict:
    P = cert.P if cert is not None else None
    out = {"horizon": s.horizon, "x0": "normalized all-ones"}
    runs = {"random": rollout(Acl_real, None, RandomSwitching(s.seed), s.horizon, P),
            "greedy_adversary": adversarial_switch(Acl_real, None, s.horizon, P)}
    for name, tr in runs.items():
        entry = {"final_norm": float(np.linalg.norm(tr.states[-1])), "decay_rate": tr.decay_rate}
        if P is not None:
            entry["lyapunov_strictly_decreasing"] = tr.strictly_decreasing()
        out[name] = entry
    if cert is not None:
        out["certified_decrease_factor"] = certified_decrease_factor(cert.P, cert.min_margin)
    return out


def design(problem: Problem, s: Settings) -> tuple[dict, int, str]:
    """Run the design pipeline; returns ``(report body, exit code, reason)``."""
    system = problem.system
    report = validate(system)
    if not report.ok:
        return {"validation": report.summary()}, EXIT_INPUT, f"validation: {report.summary()}"
    try:
        result = run_algorithm1(system, s.eps_c, s.eps_d, s.cea_options())
    except DesignFailure as exc:
        body = {"failure": {"level": exc.level, "reason": exc.cause.reason,
                            "best_violation": exc.cause.best_violation,
                            "starts": exc.cause.starts,
                            "grid_max_margin": exc.cause.grid_max_margin,
                            "completed_levels": len(exc.iterations)}}
        return body, EXIT_CEA, f"cea_infeasible level={exc.level} ({exc.cause.reason})"
    realization_note = None
    if system.is_real:
        try:
            result = realize_real_gains(result, system, s.tau_im)
        except RealizationRefused as exc:
            realization_note = str(exc)
    body = {"design": {
        "gains": result.gains, "U": result.U, "lambdas": result.lambdas,
        "residuals": result.residuals,
        "s2_margins": [rec.cea.s2_margins for rec in result.iterations],
        "s3_margins": [rec.cea.s3_margins for rec in result.iterations],
        "active_stability_constraint": result.active_flags,
        "lower_residual": result.lower_residual,
        "closed_loop_radii": result.closed_loop_radii,
        "realization": result.realization, "realization_refused": realization_note,
    }}
    Acl, realified = _as_real_loops(_closed_loops(system, result.gains))
    cert = check_cqlf(Acl, s.cert_floor)
    body["certificate"] = certificate_obj(cert)
    body["certificate"]["realified"] = realified
    if not isinstance(cert, CqlfCertificate):
        flag = " active_constraint" if any(result.active_flags) else ""
        return body, EXIT_NO_CQLF, f"no_cqlf ({cert.reason}){flag}"
    if s.horizon > 0:
        body["simulation"] = simulation_obj(Acl, cert, s)
    return body, EXIT_OK, "certified"


def check(problem: Problem, s: Settings) -> tuple[dict, int, str]:
    if problem.gains is None:
        raise InputError("check needs a 'gains' entry in the problem file")
    Acl, realified = _as_real_loops(_closed_loops(problem.system, problem.gains))
    cert = check_cqlf(Acl, s.cert_floor)
    body = {"certificate": certificate_obj(cert) | {"realified": realified}}
    if isinstance(cert, CqlfCertificate):
        return body, EXIT_OK, "certified"
    return body, EXIT_NO_CQLF, f"no_cqlf ({cert.reason})"


def synthesize(problem: Problem, s: Settings) -> tuple[dict, int, str]:
    system = problem.system
    report = validate(system)
    if not report.ok:
        return {"validation": report.summary()}, EXIT_INPUT, f"validation: {report.summary()}"
    if not system.is_real:
        raise InputError("LMI synthesis needs real system data")
    cert = synthesize_lmi(system, s.cert_floor)
    body = {"certificate": certificate_obj(cert)}
    if isinstance(cert, SynthesisCertificate):
        return body, EXIT_OK, "certified"
    return body, EXIT_NO_CQLF, f"lmi_infeasible ({cert.reason})"


def simulate(problem: Problem, s: Settings, trace_path: str | None = None) -> tuple[dict, int, str]:
    if problem.gains is None:
        raise InputError("simulate needs a 'gains' entry in the problem file")
    Acl, realified = _as_real_loops(_closed_loops(problem.system, problem.gains))
    cert = check_cqlf(Acl, s.cert_floor)
    cqlf = cert if isinstance(cert, CqlfCertificate) else None
    body = {"certificate": certificate_obj(cert) | {"realified": realified},
            "simulation": simulation_obj(Acl, cqlf, s)}
    if trace_path:
        tr = rollout(Acl, None, RandomSwitching(s.seed), s.horizon)
        with open(trace_path, "w", encoding="utf-8") as fh:
            fh.write(dumps({"sequence": tr.sequence, "states": tr.states}))
    return body, EXIT_OK, "simulated"


# expected design outcome -> accepted exit codes
OUTCOMES = {
    "certified": {EXIT_OK},
    "cea_infeasible": {EXIT_CEA},
    "cea_feasible": {EXIT_OK, EXIT_NO_CQLF},
    "no_cqlf": {EXIT_NO_CQLF},
}

# (name, build, eps_c, expected design outcome, expected LMI synthesis feasibility, note)
EXAMPLE_CASES = {
    "4.1": [("4.1", example_41, 1e-4, "certified", True, "")],
    "4.2": [("4.2 alpha=1.5", lambda: example_42(1.5), 1e-4, "cea_infeasible", False, ""),
            ("4.2 alpha=1.4999", lambda: example_42(1.4999), 1e-4, "cea_infeasible", True, ""),
            ("4.2 alpha=1.4999 eps_c=1e-5", lambda: example_42(1.4999), 1e-5, "cea_feasible", True,
             "tolerance-sensitive")],
    "4.3": [("4.3", example_43, 1e-4, "no_cqlf", True, "")],
}


def examples(which: str, s: Settings) -> tuple[dict, int, list[str]]:
    keys = list(EXAMPLE_CASES) if which == "all" else [which]
    results, lines, all_ok = [], [], True
    for key in keys:
        for name, build, eps_c, want, want_lmi, note in EXAMPLE_CASES[key]:
            system = build()
            si = Settings(eps_c, s.eps_d, s.multistart, s.seed, s.horizon, s.cert_floor, s.tau_im)
            body, code, reason = design(Problem(system), si)
            lmi = synthesize_lmi(system, s.cert_floor)
            lmi_ok = isinstance(lmi, SynthesisCertificate)
            ok = code in OUTCOMES[want] and lmi_ok == want_lmi
            all_ok &= ok
            results.append({"example": name, "eps_c": eps_c, "exit_code": code, "reason": reason,
                            "expected_outcome": want, "lmi_feasible": lmi_ok,
                            "expected_lmi_feasible": want_lmi, "pass": ok, "note": note,
                            "report": body})
            tag = f" [{note}]" if note else ""
            lines.append(f"{name}: {'PASS' if ok else 'FAIL'} design {reason} (expected {want}), "
                         f"lmi {'feasible' if lmi_ok else 'infeasible'} (expected "
                         f"{'feasible' if want_lmi else 'infeasible'}){tag}")
    return {"examples": results}, (EXIT_OK if all_ok else EXIT_EXAMPLE), lines


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="switchstab",
                                description="Stabilizing feedback design for switched linear systems.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, design_flags=True):
        if design_flags:
            sp.add_argument("--eps-c", type=float, dest="eps_c", help="stability margin (default 1e-4)")
            sp.add_argument("--eps-d", type=float, dest="eps_d", help="distance margin (default 1e-4)")
            sp.add_argument("--multistart", type=int, help="random starts per search (default 32)")
        sp.add_argument("--seed", type=int, help="default: $SWITCHSTAB_SEED or 0")
        sp.add_argument("--horizon", type=int, help=f"simulation steps (default {DEFAULT_HORIZON})")
        sp.add_argument("--cert-floor", type=float, dest="cert_floor",
                        help=f"certificate margin floor (default {DEFAULT_FLOOR})")
        sp.add_argument("--output", "-o", help="write the report here instead of stdout")

    for name, helptext in (("design", "assign feedback gains and check for a CQLF"),
                           ("check", "check given gains for a CQLF"),
                           ("synthesize", "LMI gain synthesis"),
                           ("simulate", "simulate given gains under switching")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("problem", help="problem file (JSON)")
        common(sp, design_flags=name == "design")
        if name == "simulate":
            sp.add_argument("--trace", help="also write a random-switching trace file here")
    sp = sub.add_parser("examples", help="reproduce the embedded example verdicts")
    sp.add_argument("which", choices=["4.1", "4.2", "4.3", "all"])
    common(sp)
    return p


def _emit(report: dict, output: str | None) -> None:
    text = dumps(report)
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        problem = None
        if args.command != "examples":
            problem = load_problem(args.problem)
        s = resolve_settings(args, problem.params if problem else None)
        if s.horizon < 0 or s.multistart < 0:
            raise InputError("horizon and multistart must be nonnegative")
        if args.command == "examples":
            body, code, lines = examples(args.which, s)
            reason = "all examples reproduced" if code == EXIT_OK else "example mismatch"
            for line in lines:
                print(line, file=sys.stderr)
        else:
            run = {"design": design, "check": check, "synthesize": synthesize}.get(args.command)
            if run is None:
                body, code, reason = simulate(problem, s, args.trace)
            else:
                body, code, reason = run(problem, s)
    except (ProblemError, InputError) as exc:
        print(f"switchstab: exit={EXIT_INPUT} reason=input_error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    report = {"tool": "switchstab", "version": __version__, "command": args.command,
              "seed": s.seed, "settings": asdict(s),
              "inputs": problem_to_obj(problem) if problem else {"which": args.which},
              **body, "status": {"exit_code": code, "reason": reason}}
    _emit(report, args.output)
    print(f"switchstab: exit={code} reason={reason}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
