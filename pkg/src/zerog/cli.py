"""Command-line entry point.

Exit status 0 on success, 1 for validation errors (bad input, rejected
scenario), 2 for runtime divergence or singularity. Errors go to stderr as
``ERROR <code>: <message>``.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import calibration as cal
from .errors import ValidationError, ZeroGError
from .harness import run_with_oracle, simulate, stability_report, write_outputs
from .scenario import MODES, load_scenario


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _scenario(args):
    sc = load_scenario(args.scenario)
    return sc.with_overrides(seed=args.seed, mode=args.mode)


def cmd_simulate(args):
    sc = _scenario(args)
    log = simulate(sc)
    write_outputs(args.out, log, sc)
    print(f"wrote {Path(args.out) / 'trajectory.csv'} ({len(log.t)} rows, {log.wall_time:.2f} s)")


def cmd_compare(args):
    sc = _scenario(args)
    log, oracle, report = run_with_oracle(sc)
    write_outputs(args.out, log, sc, oracle, report, stability_report(sc))
    print(report.to_text(), end="")


def cmd_analyze_stability(args):
    sc = _scenario(args)
    rep = stability_report(sc)
    text = rep.to_text()
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "stability.txt").write_text(text)
    print(text, end="")


def _poses_from_args(args):
    if args.data:
        return cal.read_poses_csv(args.data)
    if not args.scenario:
        raise ValidationError("either --data or --scenario is required")
    sc = _scenario(args)
    qs = cal.design_joint_poses(sc.model, sc.q0)
    return cal.arm_dataset(sc.model, qs, sc.sensor.offset, sc.test.mass, sc.c,
                           noise_std=sc.sensor.noise_std, resolution=sc.sensor.resolution,
                           n_avg=args.n_avg, seed=sc.seed)


def cmd_calibrate(args):
    poses = _poses_from_args(args)
    result = cal.calibrate(poses)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not args.data:
        cal.write_poses_csv(out / "poses.csv", poses)
    (out / "calibration.txt").write_text(result.to_text())
    cal.write_residuals_csv(out / "residuals.csv", poses, result)
    print(result.to_text(), end="")


def cmd_microg_index(args):
    poses = _poses_from_args(args)
    if args.flight_mass is not None:
        m_s = args.flight_mass
    elif args.scenario:
        m_s = load_scenario(args.scenario).flight.mass
    else:
        raise ValidationError("flight mass unknown: pass --flight-mass or --scenario")
    if not m_s > 0:
        raise ValidationError("flight mass must be positive")
    calib = (cal.read_calibration_text(args.calibration) if args.calibration
             else cal.calibrate(poses).as_sensor_calibration())
    lines = [("gamma", cal.microg_index(poses, m_s, calib)),
             ("gamma_mean_norm", cal.microg_index_mean_norm(poses, m_s, calib))]
    if np.linalg.norm(calib.c_hat) > cal.ZERO_C_TOL:
        lines.append(("gamma_rotational", cal.microg_index_rotational(poses, calib)))
    if args.resolution is not None:
        lines.append(("gamma_floor", cal.resolution_floor(args.resolution, m_s)))
    print("".join(f"{k} = {v:.17g}\n" for k, v in lines), end="")


def build_parser():
    p = _Parser(prog="zerog", description="Zero-g spacecraft emulation workbench")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scenario_required=True, out_required=True):
        sp.add_argument("--scenario", required=scenario_required, help="scenario TOML file")
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--mode", choices=MODES, default=None, help="override the stepping mode")

    sp = sub.add_parser("simulate", help="run the closed loop and log the trajectory")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="closed loop plus reference flight integration")
    common(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("analyze-stability", help="stability conditions over the workspace")
    common(sp, out_required=False)
    sp.set_defaults(func=cmd_analyze_stability)

    sp = sub.add_parser("calibrate", help="identify sensor offset and payload parameters")
    common(sp, scenario_required=False)
    sp.add_argument("--data", help="pose CSV (q..., R row-major, fx..nz)")
    sp.add_argument("--n-avg", type=int, default=100, help="samples averaged per synthetic pose")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("microg-index", help="residual-gravity quality index")
    common(sp, scenario_required=False, out_required=False)
    sp.add_argument("--data", help="pose CSV (q..., R row-major, fx..nz)")
    sp.add_argument("--n-avg", type=int, default=100)
    sp.add_argument("--flight-mass", type=float, default=None, help="kg")
    sp.add_argument("--calibration", help="calibration.txt from the calibrate command")
    sp.add_argument("--resolution", type=float, default=None, help="sensor force resolution, N")
    sp.set_defaults(func=cmd_microg_index)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except ZeroGError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return exc.exit_status
    except np.linalg.LinAlgError as exc:
        print(f"ERROR linalg: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
