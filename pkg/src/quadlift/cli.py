"""Command line interface.

    quadlift run <config.toml>          execute one scenario, write CSV
    quadlift sweep <config.toml>        full-vs-reduced stiffness sweep
    quadlift certify <config.toml>      search certified gains, print report
    quadlift list-scenarios             built-in scenario names

Exit codes: 0 success, 1 configuration/validation error, 2 numerical
failure (divergence, certification failure).  The environment variable
QUADLIFT_OUTPUT_ROOT prefixes all output directories.
"""

import argparse
import sys

import numpy as np

from .errors import CertificationError, ConfigError, NumericalBlowupError, QuadliftError
from .harness import epsilon_sweep, run_scenario
from .lyapunov import feedforward_bounds, gain_search
from .scenario import list_scenarios, load_config, scenario_config
from .trajectory import sample_trajectory


def _load(path_or_name):
    if path_or_name in list_scenarios():
        return scenario_config(path_or_name)
    return load_config(path_or_name)


def cmd_run(args):
    cfg = _load(args.config)
    report, _ = run_scenario(cfg, write_outputs=not args.no_outputs)
    sys.stdout.write(report.to_text())
    return 0


def cmd_sweep(args):
    cfg = _load(args.config)
    eps = [float(v) for v in args.eps.split(",")] if args.eps else None
    report = epsilon_sweep(cfg, eps)
    sys.stdout.write(report.to_text())
    return 0


def cmd_certify(args):
    cfg = _load(args.config)
    times = np.arange(0.0, cfg.integrator.horizon + 1e-12, 0.01)
    samples = sample_trajectory(cfg.build_trajectory(), times)
    B, C_q = feedforward_bounds(samples, cfg.params)
    lyap = cfg.lyapunov
    gains, report = gain_search(
        cfg.params, psi_q=lyap["psi_q"], psi_R=lyap["psi_R"],
        e_x_max=lyap["e_x_max"], B=B, C_q=C_q, margin=args.margin)
    sys.stdout.write(report.to_text())
    return 0


def cmd_list(args):
    for name in list_scenarios():
        sys.stdout.write(name + "\n")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="quadlift",
        description="Cooperative four-quadrotor payload transport: "
                    "simulation, geometric control and gain certification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one scenario")
    p_run.add_argument("config", help="TOML scenario file or built-in name")
    p_run.add_argument("--no-outputs", action="store_true",
                       help="skip CSV/config echo")
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="stiffness sweep vs reduced model")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--eps", default=None,
                         help="comma separated eps list (default from config)")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_cert = sub.add_parser("certify", help="search certified gains")
    p_cert.add_argument("config")
    p_cert.add_argument("--margin", type=float, default=1e-8)
    p_cert.set_defaults(fn=cmd_certify)

    p_list = sub.add_parser("list-scenarios", help="built-in scenario names")
    p_list.set_defaults(fn=cmd_list)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return 1
    except (NumericalBlowupError, CertificationError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 2
    except QuadliftError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
