"""Command-line behavior: exit codes, file outputs, option precedence."""

import json

import numpy as np
import pytest

from armcal.cli import DEFAULTS, build_parser, effective_options, main
from armcal.kinematics import DHTable, write_dh_file
from armcal.objective import read_dataset
from armcal.pipeline import CalibrationReport

THREE_R = DHTable(np.array([
    [50.0, 300.0, 0.0, -np.pi / 2],
    [400.0, 0.0, 0.0, 0.0],
    [350.0, 0.0, 0.0, 0.0],
]))


@pytest.fixture()
def dh_file(tmp_path):
    path = tmp_path / "arm.dh"
    write_dh_file(THREE_R, path)
    return str(path)


def simulate(dh_file, out, *extra):
    return main(["simulate", "--dh", dh_file, "--out", str(out), *extra])


# ------------------------------------------------------------------- simulate


def test_simulate_writes_dataset_and_reports_fit(dh_file, tmp_path, capsys):
    out = tmp_path / "data.csv"
    rc = simulate(dh_file, out, "--n", "25", "--seed", "3")
    captured = capsys.readouterr()
    assert rc == 0
    assert out.exists()
    assert read_dataset(out).n_samples == 25
    assert "wrote 25 samples" in captured.out
    assert "pre-calibration residuals: rmse" in captured.out


def test_simulate_rejects_nonpositive_count(dh_file, tmp_path):
    with pytest.raises(SystemExit) as exc:
        simulate(dh_file, tmp_path / "d.csv", "--n", "0", "--seed", "1")
    assert exc.value.code == 2


def test_simulate_missing_dh_is_runtime_error(tmp_path, capsys):
    rc = simulate(str(tmp_path / "nope.dh"), tmp_path / "d.csv", "--seed", "1")
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_simulate_seed_reproducibility(dh_file, tmp_path):
    a, b, c = (tmp_path / name for name in ("a.csv", "b.csv", "c.csv"))
    simulate(dh_file, a, "--n", "20", "--seed", "5")
    simulate(dh_file, b, "--n", "20", "--seed", "5")
    simulate(dh_file, c, "--n", "20", "--seed", "6")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_generated_seed_is_logged_to_stderr(dh_file, tmp_path, capsys):
    rc = simulate(dh_file, tmp_path / "d.csv", "--n", "12")
    assert rc == 0
    assert "seed:" in capsys.readouterr().err


# ---------------------------------------------------------------- config file


def test_config_file_supplies_defaults_and_flags_win(dh_file, tmp_path, capsys):
    cfg = tmp_path / "opts.json"
    cfg.write_text(json.dumps({"n": 40, "sigma": 0.0}))
    simulate(dh_file, tmp_path / "a.csv", "--config", str(cfg), "--seed", "1")
    assert "wrote 40 samples" in capsys.readouterr().out
    simulate(dh_file, tmp_path / "b.csv", "--config", str(cfg), "--n", "50", "--seed", "1")
    assert "wrote 50 samples" in capsys.readouterr().out


def test_config_file_unknown_keys_fail(dh_file, tmp_path, capsys):
    cfg = tmp_path / "opts.json"
    cfg.write_text(json.dumps({"n": 40, "bogus": 1}))
    rc = simulate(dh_file, tmp_path / "d.csv", "--config", str(cfg), "--seed", "1")
    assert rc == 1
    assert "unknown keys" in capsys.readouterr().err


def test_config_file_must_exist_and_parse(dh_file, tmp_path, capsys):
    rc = simulate(dh_file, tmp_path / "d.csv", "--config", str(tmp_path / "nope.json"),
                  "--seed", "1")
    assert rc == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = simulate(dh_file, tmp_path / "d.csv", "--config", str(bad), "--seed", "1")
    assert rc == 1
    assert "not valid JSON" in capsys.readouterr().err


def test_effective_options_merge_order(tmp_path):
    cfg = tmp_path / "opts.json"
    cfg.write_text(json.dumps({"n": 40, "mu": 0.9}))
    parser = build_parser()
    args = parser.parse_args(
        ["simulate", "--dh", "x", "--out", "y", "--config", str(cfg), "--n", "50"]
    )
    opts = effective_options(args)
    assert opts["n"] == 50          # flag beats config
    assert opts["mu"] == 0.9        # config beats default
    assert opts["sigma"] == DEFAULTS["sigma"]


# ------------------------------------------------------------------ calibrate


@pytest.fixture()
def dataset(dh_file, tmp_path):
    path = tmp_path / "data.csv"
    simulate(dh_file, path, "--n", "40", "--sigma", "0.05", "--seed", "7")
    return str(path)


def calibrate_args(dataset, dh_file, out, method="pf-cibas", *extra):
    return [
        "calibrate", "--method", method, "--data", dataset, "--dh", dh_file,
        "--out", str(out), "--seed", "11", "--max-iters", "250",
        "--particles", "100", "--pf-steps", "10", *extra,
    ]


def test_calibrate_reduces_train_error(dataset, dh_file, tmp_path, capsys):
    out = tmp_path / "rep.json"
    rc = main(calibrate_args(dataset, dh_file, out))
    captured = capsys.readouterr()
    assert rc == 0
    assert f"report written to {out}" in captured.out
    assert "method: pf-cibas" in captured.out
    report = CalibrationReport.load(out)
    assert report.metrics_after["train"].rmse_mm < report.metrics_before["train"].rmse_mm


def test_calibrate_writes_trace(dataset, dh_file, tmp_path):
    out = tmp_path / "rep.json"
    trace = tmp_path / "trace.csv"
    rc = main(calibrate_args(dataset, dh_file, out, "cibas", "--trace", str(trace)))
    assert rc == 0
    lines = trace.read_text().splitlines()
    assert lines[0] == "iter,best_f,evals"
    assert len(lines) > 1


def test_calibrate_rejects_unknown_method(dataset, dh_file, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(calibrate_args(dataset, dh_file, tmp_path / "rep.json", "sgd"))
    assert exc.value.code == 2


def test_calibrate_seed_changes_estimate_not_schema(dataset, dh_file, tmp_path):
    reps = {}
    for seed in ("11", "12"):
        out = tmp_path / f"rep{seed}.json"
        args = calibrate_args(dataset, dh_file, out, "cibas")
        args[args.index("--seed") + 1] = seed
        assert main(args) == 0
        reps[seed] = json.loads(out.read_text())
    assert set(reps["11"]) == set(reps["12"])
    assert reps["11"]["w_est"] != reps["12"]["w_est"]


def test_calibrate_omit_timing_is_bitwise_reproducible(dataset, dh_file, tmp_path):
    outs = [tmp_path / "r1.json", tmp_path / "r2.json"]
    for out in outs:
        assert main(calibrate_args(dataset, dh_file, out, "pf-cibas", "--omit-timing")) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()


def test_calibrate_too_small_dataset_is_runtime_error(dh_file, tmp_path, capsys):
    data = tmp_path / "tiny.csv"
    simulate(dh_file, data, "--n", "8", "--seed", "1")
    rc = main(["calibrate", "--method", "bas", "--data", str(data), "--dh", dh_file,
               "--out", str(tmp_path / "rep.json"), "--seed", "1"])
    assert rc == 1
    assert "too small" in capsys.readouterr().err


# -------------------------------------------------------------------- compare


def compare_args(dh_file, out_dir, *extra):
    return [
        "compare", "--dh", dh_file, "--out-dir", str(out_dir), "--seed", "9",
        "--n", "30", "--sigma", "0.05", "--max-iters", "120",
        "--particles", "80", "--pf-steps", "5", *extra,
    ]


def test_compare_outputs_and_rerun_determinism(dh_file, tmp_path, capsys):
    dirs = [tmp_path / "run1", tmp_path / "run2"]
    for out_dir in dirs:
        rc = main(compare_args(dh_file, out_dir, "--methods", "bas,cibas",
                               "--seeds", "2", "--omit-timing"))
        assert rc == 0
    captured = capsys.readouterr()
    assert "summary written to" in captured.out

    for method in ("bas", "cibas"):
        for idx in (0, 1):
            assert (dirs[0] / f"{method}_seed{idx}.report.json").exists()
            assert (dirs[0] / f"{method}_seed{idx}.trace.csv").exists()
    summary = (dirs[0] / "summary.csv").read_text().splitlines()
    assert summary[0] == "method,rmse_mm,std_mm,max_mm,evals,wall_s"
    assert len(summary) == 3

    for name in ("summary.csv", "bas_seed0.report.json", "cibas_seed1.trace.csv"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()


def test_compare_on_fixed_dataset_writes_filter_trace(dh_file, dataset, tmp_path):
    out_dir = tmp_path / "cmp"
    rc = main(compare_args(dh_file, out_dir, "--methods", "pf", "--data", dataset))
    assert rc == 0
    assert (out_dir / "pf_seed0.report.json").exists()
    assert (out_dir / "pf_seed0.pf_trace.csv").exists()
    assert not (out_dir / "pf_seed0.trace.csv").exists()
    lines = (out_dir / "pf_seed0.pf_trace.csv").read_text().splitlines()
    assert lines[0] == "step,ess,fitness_of_estimate"


def test_compare_data_with_multiple_seeds_is_usage_error(dh_file, dataset, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(compare_args(dh_file, tmp_path / "cmp", "--data", dataset, "--seeds", "2"))
    assert exc.value.code == 2


def test_compare_unknown_method_is_usage_error(dh_file, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(compare_args(dh_file, tmp_path / "cmp", "--methods", "bas,newton"))
    assert exc.value.code == 2


# ---------------------------------------------------------------------- check


def test_check_reports_all_pass(capsys):
    rc = main(["check"])
    out = capsys.readouterr().out.splitlines()
    assert rc == 0
    names = {line.split(":")[0] for line in out}
    assert names == {
        "kinematics_hand_values",
        "rotation_orthonormality",
        "jacobian_first_order",
        "cubic_exact_recovery",
        "weight_normalization",
    }
    assert all(line.endswith("PASS") for line in out)


def test_check_verbose_and_dh_validation(dh_file, capsys):
    rc = main(["check", "--verbose", "--dh", dh_file])
    out = capsys.readouterr().out
    assert rc == 0
    assert "(tol" in out
    assert "dh_file_valid: PASS" in out


def test_check_corrupt_dh_fails(tmp_path, capsys):
    bad = tmp_path / "bad.dh"
    bad.write_text("1.0, 2.0\n")
    rc = main(["check", "--dh", str(bad)])
    assert rc == 1
    assert "error:" in capsys.readouterr().err
