"""Command-line interface: simulate datasets, calibrate, compare methods,
and run numeric self-checks.

Option precedence is CLI flag > ``--config`` JSON file > built-in default.
Every run that needs randomness takes ``--seed``; omitting it draws a seed
from system entropy and logs it to stderr so the run can be reproduced.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from armcal import kinematics, objective, optimizer, particle_filter, pipeline, simdata

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

# built-in defaults for everything configurable from the command line
DEFAULTS = {
    "n": 120,
    "sigma": 0.1,
    "outlier_rate": 0.0,
    "outlier_scale": 10.0,
    "scale_alpha": 0.005,
    "scale_a": 0.5,
    "scale_d": 0.5,
    "scale_theta": 0.005,
    "anchor": list(simdata.DEFAULT_ANCHOR_MM),
    "train_frac": 2.0 / 3.0,
    "bound_alpha": 0.02,
    "bound_a": 2.0,
    "bound_d": 2.0,
    "bound_theta": 0.02,
    "delta0": 0.1,
    "mu": 0.997,
    "m0_ratio": 0.5,
    "max_iters": 2500,
    "fitness_tol": None,
    "stall_iters": None,
    "restarts": 0,
    "particles": 500,
    "pf_steps": 50,
    "process_sigma_frac": 0.01,
    "r_sigma": None,
    "ess_threshold": 0.5,
    "seed": None,
}


def _load_config_file(path):
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise RuntimeError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise RuntimeError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise RuntimeError(f"config file {path} must contain a JSON object")
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise RuntimeError(f"config file {path} has unknown keys: {', '.join(unknown)}")
    return data


def effective_options(args) -> dict:
    """Merge defaults, the optional config file, and explicit flags."""
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        opts.update(_load_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    return opts


def resolve_seed(seed) -> int:
    """Use the given seed, or draw one from system entropy and log it."""
    if seed is not None:
        return int(seed)
    generated = int(np.random.SeedSequence().entropy % (2**63))
    print(f"seed: {generated} (generated; pass --seed {generated} to reproduce)",
          file=sys.stderr)
    return generated


def _scenario_config(opts, seed) -> simdata.ScenarioConfig:
    return simdata.ScenarioConfig(
        n_points=int(opts["n"]),
        anchor_mm=np.asarray(opts["anchor"], dtype=float),
        scale_alpha_rad=float(opts["scale_alpha"]),
        scale_a_mm=float(opts["scale_a"]),
        scale_d_mm=float(opts["scale_d"]),
        scale_theta_rad=float(opts["scale_theta"]),
        noise=simdata.NoiseModel(
            sigma=float(opts["sigma"]),
            outlier_rate=float(opts["outlier_rate"]),
            outlier_scale=float(opts["outlier_scale"]),
        ),
        seed=seed,
    )


def _calibration_config(opts, seed) -> pipeline.CalibrationConfig:
    return pipeline.CalibrationConfig(
        seed=seed,
        train_frac=float(opts["train_frac"]),
        bound_alpha_rad=float(opts["bound_alpha"]),
        bound_a_mm=float(opts["bound_a"]),
        bound_d_mm=float(opts["bound_d"]),
        bound_theta_rad=float(opts["bound_theta"]),
        delta0=float(opts["delta0"]),
        mu=float(opts["mu"]),
        m0_ratio=float(opts["m0_ratio"]),
        max_iters=int(opts["max_iters"]),
        fitness_tol=None if opts["fitness_tol"] is None else float(opts["fitness_tol"]),
        stall_iters=None if opts["stall_iters"] is None else int(opts["stall_iters"]),
        restarts=int(opts["restarts"]),
        n_particles=int(opts["particles"]),
        pf_steps=int(opts["pf_steps"]),
        process_sigma_frac=float(opts["process_sigma_frac"]),
        r_sigma=None if opts["r_sigma"] is None else float(opts["r_sigma"]),
        ess_threshold=float(opts["ess_threshold"]),
    )


def _print_metrics_table(report: pipeline.CalibrationReport) -> None:
    print(f"method: {report.method}")
    print(f"{'split':<6} {'metric':<8} {'before_mm':>12} {'after_mm':>12}")
    for split in ("train", "test"):
        before = report.metrics_before[split]
        after = report.metrics_after[split]
        for name in ("rmse_mm", "std_mm", "max_mm"):
            print(
                f"{split:<6} {name:<8} {getattr(before, name):>12.4f} "
                f"{getattr(after, name):>12.4f}"
            )
    print(f"evals: {report.eval_count}  wall_s: {report.wall_time_s:.2f}")


def cmd_simulate(args, parser) -> int:
    opts = effective_options(args)
    if opts["n"] < 1:
        parser.error(f"--n must be >= 1, got {opts['n']}")
    table = kinematics.read_dh_file(args.dh)
    seed = resolve_seed(opts["seed"])
    cfg = _scenario_config(opts, seed)
    ms, _truth = simdata.simulate_measurements(table, cfg)
    objective.write_dataset(ms, args.out)
    before = objective.metrics(
        objective.residuals(ms, table, kinematics.zero_deviation(table.n_joints))
    )
    print(f"wrote {ms.n_samples} samples to {args.out}")
    print(
        f"pre-calibration residuals: rmse {before.rmse_mm:.4f} mm, "
        f"std {before.std_mm:.4f} mm, max {before.max_mm:.4f} mm"
    )
    return EXIT_OK


def cmd_calibrate(args, parser) -> int:
    opts = effective_options(args)
    table = kinematics.read_dh_file(args.dh)
    ms = objective.read_dataset(args.data)
    seed = resolve_seed(opts["seed"])
    cfg = _calibration_config(opts, seed)
    report = pipeline.calibrate(args.method, ms, table, cfg)
    report.save(args.out, omit_timing=args.omit_timing)
    if args.trace and "search" in report.traces:
        optimizer.write_trace(report.traces["search"], args.trace)
    _print_metrics_table(report)
    print(f"report written to {args.out}")
    return EXIT_OK


def _median_summary(rows_by_method: dict) -> list:
    summary = []
    for method, rows in rows_by_method.items():
        summary.append(
            {
                "method": method,
                "rmse_mm": float(np.median([r["rmse_mm"] for r in rows])),
                "std_mm": float(np.median([r["std_mm"] for r in rows])),
                "max_mm": float(np.median([r["max_mm"] for r in rows])),
                "evals": int(np.median([r["evals"] for r in rows])),
                "wall_s": float(np.median([r["wall_s"] for r in rows])),
            }
        )
    return summary


def cmd_compare(args, parser) -> int:
    opts = effective_options(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        parser.error("--methods must name at least one method")
    for method in methods:
        if method not in pipeline.METHODS:
            parser.error(
                f"unknown method {method!r}: expected one of {', '.join(pipeline.METHODS)}"
            )
    if args.seeds < 1:
        parser.error(f"--seeds must be >= 1, got {args.seeds}")
    if args.data and args.seeds != 1:
        parser.error("--data runs on one fixed dataset; --seeds must be 1")

    table = kinematics.read_dh_file(args.dh)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_seed = resolve_seed(opts["seed"])
    scenario_seeds = [
        int(s)
        for s in np.random.SeedSequence(base_seed).generate_state(args.seeds, dtype=np.uint64)
    ]

    rows_by_method: dict = {m: [] for m in methods}
    failures: list = []
    for idx, scenario_seed in enumerate(scenario_seeds):
        if args.data:
            ms = objective.read_dataset(args.data)
        else:
            ms, _truth = simdata.simulate_measurements(
                table, _scenario_config(opts, scenario_seed)
            )
        cfg = _calibration_config(opts, scenario_seed)
        result = pipeline.compare(methods, ms, table, cfg)
        for method, report in result.reports.items():
            if report is None:
                failures.append(f"{method} (seed index {idx}): {result.errors[method]}")
                continue
            rows_by_method[method].append(pipeline.summary_row(report))
            stem = f"{method.replace('-', '_')}_seed{idx}"
            report.save(out_dir / f"{stem}.report.json", omit_timing=args.omit_timing)
            if "search" in report.traces:
                optimizer.write_trace(report.traces["search"], out_dir / f"{stem}.trace.csv")
            if "pf_ess" in report.traces:
                pf_result = particle_filter.PFResult(
                    w_est=report.w_est,
                    ess_trace=np.array(report.traces["pf_ess"]),
                    fitness_trace=np.array(report.traces["pf_fitness"]),
                )
                particle_filter.write_pf_trace(pf_result, out_dir / f"{stem}.pf_trace.csv")

    summary = _median_summary({m: rows for m, rows in rows_by_method.items() if rows})
    pipeline.write_summary_csv(summary, out_dir / "summary.csv", omit_timing=args.omit_timing)
    header = " ".join(f"{c:>10}" for c in pipeline.SUMMARY_COLUMNS)
    print(header)
    for row in summary:
        print(
            f"{row['method']:>10} {row['rmse_mm']:>10.4f} {row['std_mm']:>10.4f} "
            f"{row['max_mm']:>10.4f} {row['evals']:>10d} {row['wall_s']:>10.2f}"
        )
    print(f"summary written to {out_dir / 'summary.csv'}")
    if failures:
        for failure in failures:
            print(f"error: {failure}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _check_kinematics_hand_values() -> tuple[bool, str]:
    table = kinematics.DHTable(np.array([[1.0, 0, 0, 0], [1.0, 0, 0, 0]]))
    cases = [
        (np.array([0.0, 0.0]), np.array([2.0, 0.0, 0.0])),
        (np.array([np.pi / 2, 0.0]), np.array([0.0, 2.0, 0.0])),
        (np.array([np.pi / 2, -np.pi / 2]), np.array([1.0, 1.0, 0.0])),
    ]
    err = max(
        float(np.abs(kinematics.end_position(table, q) - expected).max())
        for q, expected in cases
    )
    return err <= 1e-12, f"max position error {err:.3e} (tol 1e-12)"


def _check_orthonormality() -> tuple[bool, str]:
    rng = np.random.default_rng(20240811)
    worst = 0.0
    for _ in range(200):
        joints = int(rng.integers(1, 7))
        params = np.column_stack(
            [
                rng.uniform(-200, 200, joints),
                rng.uniform(-200, 200, joints),
                rng.uniform(-np.pi, np.pi, joints),
                rng.uniform(-np.pi, np.pi, joints),
            ]
        )
        table = kinematics.DHTable(params)
        q = rng.uniform(-np.pi, np.pi, joints)
        T = kinematics.forward_kinematics(table, q)
        worst = max(worst, kinematics.check_transform(T, tol=1e-9))
    return worst <= 1e-9, f"max orthonormality error {worst:.3e} (tol 1e-9)"


def _check_jacobian() -> tuple[bool, str]:
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(10):
        joints = 4
        params = np.column_stack(
            [
                rng.uniform(-150, 150, joints),
                rng.uniform(-150, 150, joints),
                rng.uniform(-np.pi, np.pi, joints),
                rng.uniform(-np.pi, np.pi, joints),
            ]
        )
        table = kinematics.DHTable(params)
        q = rng.uniform(-np.pi, np.pi, joints)
        w = rng.standard_normal(4 * joints)
        w *= 1e-6 / np.linalg.norm(w)
        jac = kinematics.error_jacobian(table, q)
        dp_exact = kinematics.end_position(
            kinematics.apply_deviation(table, w), q
        ) - kinematics.end_position(table, q)
        err = float(np.linalg.norm(dp_exact - jac @ w))
        ratio = err / (1.0 + float(np.linalg.norm(dp_exact)))
        worst = max(worst, ratio)
    return worst <= 1e-9, f"max first-order mismatch {worst:.3e} (tol 1e-9)"


def _check_cubic_recovery() -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        coeffs = rng.uniform(-5, 5, 4)
        pts = rng.uniform(-3, 3, 3)
        while np.min(np.abs(np.subtract.outer(pts, pts))[~np.eye(3, dtype=bool)]) < 0.3:
            pts = rng.uniform(-3, 3, 3)

        def g(x):
            return coeffs[0] + x * (coeffs[1] + x * (coeffs[2] + x * coeffs[3]))

        slope = coeffs[1] + 2 * coeffs[2] * pts[0] + 3 * coeffs[3] * pts[0] ** 2
        fit = optimizer.cubic_fit(
            pts[0], pts[1], pts[2], g(pts[0]), g(pts[1]), g(pts[2]), slope
        )
        err = float(
            np.abs(np.array([fit.c0, fit.c1, fit.c2, fit.c3]) - coeffs).max()
        )
        worst = max(worst, err)
    return worst <= 1e-8, f"max coefficient error {worst:.3e} (tol 1e-8)"


def _check_weight_normalization() -> tuple[bool, str]:
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 200))
        raw = rng.uniform(0.0, 1.0, n) ** 4 + 1e-12
        ens = particle_filter.ParticleEnsemble(rng.standard_normal((n, 3)), raw)
        normalized = particle_filter.normalize_weights(ens)
        worst = max(worst, abs(float(normalized.weights.sum()) - 1.0))
    return worst <= 1e-9, f"max |sum - 1| {worst:.3e} (tol 1e-9)"


def cmd_check(args, parser) -> int:
    checks = [
        ("kinematics_hand_values", _check_kinematics_hand_values),
        ("rotation_orthonormality", _check_orthonormality),
        ("jacobian_first_order", _check_jacobian),
        ("cubic_exact_recovery", _check_cubic_recovery),
        ("weight_normalization", _check_weight_normalization),
    ]
    all_ok = True
    for name, fn in checks:
        ok, detail = fn()
        all_ok = all_ok and ok
        status = "PASS" if ok else "FAIL"
        if args.verbose or not ok:
            print(f"{name}: {status} ({detail})")
        else:
            print(f"{name}: {status}")
    if args.dh:
        table = kinematics.read_dh_file(args.dh)
        print(f"dh_file_valid: PASS ({args.dh}: {table.n_joints} joints)")
    return EXIT_OK if all_ok else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="armcal",
        description="Cable-length kinematic calibration for serial arms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON file of option defaults")
        p.add_argument("--seed", type=int, help=f"base RNG seed (default: generated)")

    sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    sim.add_argument("--dh", required=True, help="DH table file")
    sim.add_argument("--out", required=True, help="output dataset CSV")
    sim.add_argument("--n", type=int, help=f"sample count (default {DEFAULTS['n']})")
    sim.add_argument("--sigma", type=float, help=f"noise std, mm (default {DEFAULTS['sigma']})")
    sim.add_argument("--outlier-rate", dest="outlier_rate", type=float,
                     help=f"outlier probability (default {DEFAULTS['outlier_rate']})")
    sim.add_argument("--outlier-scale", dest="outlier_scale", type=float,
                     help=f"outlier sigma multiplier (default {DEFAULTS['outlier_scale']})")
    sim.add_argument("--scale-alpha", dest="scale_alpha", type=float,
                     help=f"twist deviation half-width, rad (default {DEFAULTS['scale_alpha']})")
    sim.add_argument("--scale-a", dest="scale_a", type=float,
                     help=f"length deviation half-width, mm (default {DEFAULTS['scale_a']})")
    sim.add_argument("--scale-d", dest="scale_d", type=float,
                     help=f"offset deviation half-width, mm (default {DEFAULTS['scale_d']})")
    sim.add_argument("--scale-theta", dest="scale_theta", type=float,
                     help=f"angle deviation half-width, rad (default {DEFAULTS['scale_theta']})")
    sim.add_argument("--anchor", type=float, nargs=3, metavar=("X", "Y", "Z"),
                     help=f"anchor position, mm (default {DEFAULTS['anchor']})")
    add_common(sim)
    sim.set_defaults(func=cmd_simulate)

    cal = sub.add_parser("calibrate", help="identify deviations from a dataset")
    cal.add_argument("--method", required=True, choices=pipeline.METHODS)
    cal.add_argument("--data", required=True, help="dataset CSV")
    cal.add_argument("--dh", required=True, help="DH table file")
    cal.add_argument("--out", default="report.json", help="report JSON path (default report.json)")
    cal.add_argument("--trace", help="optional search trace CSV path")
    cal.add_argument("--omit-timing", action="store_true",
                     help="zero wall-clock fields in outputs for byte-identical reruns")
    for flag, key, cast in [
        ("--train-frac", "train_frac", float),
        ("--bound-alpha", "bound_alpha", float),
        ("--bound-a", "bound_a", float),
        ("--bound-d", "bound_d", float),
        ("--bound-theta", "bound_theta", float),
        ("--delta0", "delta0", float),
        ("--mu", "mu", float),
        ("--m0-ratio", "m0_ratio", float),
        ("--max-iters", "max_iters", int),
        ("--fitness-tol", "fitness_tol", float),
        ("--stall-iters", "stall_iters", int),
        ("--restarts", "restarts", int),
        ("--particles", "particles", int),
        ("--pf-steps", "pf_steps", int),
        ("--process-sigma-frac", "process_sigma_frac", float),
        ("--r-sigma", "r_sigma", float),
        ("--ess-threshold", "ess_threshold", float),
    ]:
        cal.add_argument(flag, dest=key, type=cast,
                         help=f"default {DEFAULTS[key]}")
    add_common(cal)
    cal.set_defaults(func=cmd_calibrate)

    cmp_p = sub.add_parser("compare", help="run several methods on shared scenarios")
    cmp_p.add_argument("--dh", required=True, help="DH table file")
    cmp_p.add_argument("--methods", default=",".join(pipeline.METHODS),
                       help=f"comma-separated subset of {','.join(pipeline.METHODS)}")
    cmp_p.add_argument("--seeds", type=int, default=1,
                       help="number of synthetic scenarios (default 1)")
    cmp_p.add_argument("--data", help="fixed dataset CSV instead of synthetic scenarios")
    cmp_p.add_argument("--out-dir", dest="out_dir", default="compare_out",
                       help="directory for reports, traces and summary.csv")
    cmp_p.add_argument("--omit-timing", action="store_true",
                       help="zero wall-clock fields in outputs for byte-identical reruns")
    for flag, key, cast in [
        ("--n", "n", int),
        ("--sigma", "sigma", float),
        ("--outlier-rate", "outlier_rate", float),
        ("--outlier-scale", "outlier_scale", float),
        ("--max-iters", "max_iters", int),
        ("--mu", "mu", float),
        ("--particles", "particles", int),
        ("--pf-steps", "pf_steps", int),
    ]:
        cmp_p.add_argument(flag, dest=key, type=cast, help=f"default {DEFAULTS[key]}")
    add_common(cmp_p)
    cmp_p.set_defaults(func=cmd_compare)

    chk = sub.add_parser("check", help="run numeric self-tests")
    chk.add_argument("--dh", help="also validate this DH table file")
    chk.add_argument("--verbose", action="store_true", help="print per-check errors")
    chk.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
