import subprocess
import sys

import numpy as np
import pytest

from ghostproj import cli, pnm
from ghostproj.maskgen import load_mask
from ghostproj.metrics import QualityReport
from ghostproj.planner import load_plan
from ghostproj.targets import dot, save_target_bitmap


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_generate_fractal_deterministic(tmp_path, capsys):
    argv = ["generate-mask", "--class", "fractal", "--alpha", "1", "--beta", "0", "--size", "128", "--seed", "7"]
    code, out1, _ = run(argv + ["--out", tmp_path / "a.pgm"], capsys)
    assert code == 0
    code, out2, _ = run(argv + ["--out", tmp_path / "b.pgm"], capsys)
    assert out1.split("sha256=")[1] == out2.split("sha256=")[1]
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()


def test_generate_legendre(tmp_path, capsys):
    code, _, _ = run(["generate-mask", "--class", "legendre", "--p", "127", "--feature-size", "2",
                      "--out", tmp_path / "l.pgm"], capsys)
    assert code == 0
    assert load_mask(tmp_path / "l.pgm").values.shape == (254, 254)


def test_missing_flag_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        cli.main(["generate-mask", "--class", "gaussian", "--size", "32", "--out", str(tmp_path / "g.pgm")])
    assert err.value.code == 2
    assert "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as err:
        cli.main(["generate-mask", "--size", "32"])
    assert err.value.code == 2


def test_mutually_exclusive_targets(tmp_path, capsys):
    save_target_bitmap(tmp_path / "t.pbm", dot())
    with pytest.raises(SystemExit) as err:
        cli.main(["pipeline", "--target", str(tmp_path / "t.pbm"), "--builtin-target", "dot"])
    assert err.value.code == 2


def test_validation_exit(tmp_path, capsys):
    code, _, err = run(["generate-mask", "--class", "legendre", "--p", "9", "--out", tmp_path / "x.pgm"], capsys)
    assert code == 3
    assert err.startswith("error [generate-mask]")


def test_io_exit(tmp_path, capsys):
    code, _, err = run(["capture", "--mask", tmp_path / "missing.pgm", "--window", "4x4"], capsys)
    assert code == 5
    (tmp_path / "bad.pgm").write_bytes(b"not an image")
    code, _, err = run(["capture", "--mask", tmp_path / "bad.pgm", "--window", "4x4",
                        "--out", tmp_path / "e"], capsys)
    assert code == 5 and "capture" in err


def test_numerical_exit(tmp_path, capsys):
    code, _, err = run(["pipeline", "--builtin-target", "dot", "--size", "30", "--max-iter", "1",
                        "--out", tmp_path / "run"], capsys)
    assert code == 4
    assert err.startswith("error [plan]")


def test_print_config(capsys):
    code, out, _ = run(["--print-config", "pipeline", "--builtin-target", "gp", "--seed", "3"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert "seed=3" in lines and "mask_class=binary" in lines
    assert lines == sorted(lines)


def test_staged_commands(tmp_path, capsys):
    mask = tmp_path / "mask.pgm"
    assert run(["generate-mask", "--class", "binary", "--size", "40", "--seed", "1", "--out", mask], capsys)[0] == 0
    assert run(["capture", "--mask", mask, "--window", "10x10", "--out", tmp_path / "ens"], capsys)[0] == 0
    save_target_bitmap(tmp_path / "t.pbm", dot())
    code, out, _ = run(["plan", "--ensemble", tmp_path / "ens", "--target", tmp_path / "t.pbm", "--order",
                        "--out", tmp_path / "plan.txt"], capsys)
    assert code == 0 and "N'=" in out
    plan = load_plan(tmp_path / "plan.txt")
    assert plan.n_selected > 0
    code, _, _ = run(["simulate", "--mask", mask, "--plan", tmp_path / "plan.txt", "--keep-frames",
                      "--out", tmp_path / "sim"], capsys)
    assert code == 0
    assert len(list((tmp_path / "sim" / "frames").glob("frame_*.pgm"))) == plan.n_selected
    code, out, _ = run(["score", "--projection", tmp_path / "sim" / "accumulated.pgm", "--target", tmp_path / "t.pbm",
                        "--out", tmp_path / "report.txt"], capsys)
    assert code == 0
    # 16-bit export quantization bounds the score of an exact plan
    assert QualityReport.from_text(out).snr > 1000


@pytest.fixture(scope="module")
def gp_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("gp")
    outs = []
    for name in ("a", "b"):
        code = cli.main(["pipeline", "--builtin-target", "gp", "--seed", "11", "--out", str(base / name)])
        assert code == 0
        outs.append(base / name)
    return outs


def test_pipeline_gp_snr(gp_runs):
    report = QualityReport.from_text((gp_runs[0] / "report.txt").read_text())
    assert report.snr >= 2.5
    plan = load_plan(gp_runs[0] / "plan.txt")
    assert plan.n_selected <= 1500
    assert len(list(gp_runs[0].glob("buildup_*.pgm"))) == 6


def test_pipeline_rerun_byte_identical(gp_runs):
    a, b = gp_runs
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n


def _pedestal_run(tmp_path, capsys, pedestal, target="squares"):
    out = tmp_path / f"p{pedestal}"
    code, _, _ = run(["pipeline", "--builtin-target", target, "--pedestal", pedestal, "--size", "100",
                      "--out", out], capsys)
    assert code == 0
    plan = load_plan(out / "plan.txt")
    report = QualityReport.from_text((out / "report.txt").read_text())
    return report.pedestal_measured / plan.counts_per_unit


def test_pipeline_feasible_pedestal(tmp_path, capsys):
    measured = _pedestal_run(tmp_path, capsys, 5.0)
    assert measured == pytest.approx(5.0, rel=0.05)


@pytest.mark.xfail(strict=True, reason="pedestal 0.5 is below max|I| = 1: I + 0.5 has negative pixels that "
                   "nonnegative sums of nonnegative patterns cannot reach, so the least-squares fit lifts the mean")
def test_pipeline_half_pedestal(tmp_path, capsys):
    measured = _pedestal_run(tmp_path, capsys, 0.5)
    assert measured == pytest.approx(0.5, rel=0.05)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ghostproj", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "pipeline" in proc.stdout


def test_grayscale_target(tmp_path, capsys):
    img = np.rint(dot() * 200).astype(np.uint16)
    pnm.write_pgm16(tmp_path / "t.pgm", img)
    code, out, _ = run(["pipeline", "--target", tmp_path / "t.pgm", "--size", "30", "--out", tmp_path / "r"], capsys)
    assert code == 0 and out.startswith("N'=")
