import io
import json
import math
from pathlib import Path

import numpy as np
import pytest

from hypwalk import cli, geom


def run_main(args, tmp_path):
    out = tmp_path / "runs"
    code = cli.main(list(args) + ["--out", str(out), "--no-plot"])
    dirs = sorted(out.iterdir()) if out.exists() else []
    return code, dirs


def read_rows(run_dir: Path, command: str):
    lines = (run_dir / f"{command}.csv").read_text().splitlines()
    assert lines[0].startswith(f"# {command}:")
    header = lines[1].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[2:]]


def test_selftest_passes():
    buf = io.StringIO()
    assert cli.cmd_selftest(buf) == 0
    lines = buf.getvalue().splitlines()
    assert lines and all(line.startswith("ok") for line in lines)


def test_selftest_catches_busemann_sign_flip(monkeypatch):
    original = geom.busemann
    monkeypatch.setattr(geom, "busemann", lambda theta, z: -original(theta, z))
    buf = io.StringIO()
    assert cli.cmd_selftest(buf) == 1
    assert "FAIL busemann_limit" in buf.getvalue()


@pytest.mark.parametrize("args", [
    ["nosuchcommand"],
    ["pd", "--lambda", "2.0"],
    ["pd", "--workers", "0"],
    ["pq", "--q", "6"],
    ["ra", "--r", "0"],
    ["edgeprob", "--lambda", "0"],
    ["ra", "--config", "/nonexistent/config.ini"],
])
def test_usage_errors(args, tmp_path):
    code, dirs = run_main(args, tmp_path)
    assert code == 2 and not dirs


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("colour = blue\n")
    assert run_main(["ra", "--config", str(cfg)], tmp_path)[0] == 2


def test_non_unimodular_matrix_spec(tmp_path):
    spec = tmp_path / "mats.txt"
    spec.write_text("# prob a b c d\n1.0 2 0 0 1\n")
    assert run_main(["lyap", "--spec", str(spec)], tmp_path)[0] == 2


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("r = 1.0, 6.0\nsteps = 50\ntrials = 400\nseed = 3\n")
    code, dirs = run_main(["ra", "--config", str(cfg), "--trials", "300"], tmp_path)
    assert code == 0
    manifest = json.loads((dirs[0] / "manifest.json").read_text())
    assert manifest["config"]["r"] == [1.0, 6.0]
    assert manifest["config"]["trials"] == 300 and manifest["seed"] == 3
    assert manifest["passed"] and manifest["duration_s"] > 0
    rows = read_rows(dirs[0], "ra")
    assert [float(r["r"]) for r in rows] == [1.0, 6.0]
    assert 0.45 <= float(rows[1]["speed_over_r"]) <= 0.55


def test_manifest_is_written_before_results(tmp_path, monkeypatch):
    seen = {}

    def fake(cfg):
        run_dir = next(Path(cfg.out).iterdir())
        seen["files"] = sorted(p.name for p in run_dir.iterdir())
        return cli.Table("ra", ["x", "pass"], [[1.0, 1]], passed=True)

    monkeypatch.setitem(cli.COMMANDS, "ra", fake)
    cfg = cli.RunConfig("ra", out=str(tmp_path)).resolved()
    assert cli.run(cfg, io.StringIO()) == 0
    assert seen["files"] == ["manifest.json"]


def test_floats_use_seventeen_digits():
    assert cli.format_value(0.1) == "0.10000000000000001"
    assert float(cli.format_value(math.pi)) == math.pi
    assert cli.format_value(np.int64(7)) == "7" and cli.format_value(True) == "1"


def test_svg_is_emitted(tmp_path):
    out = tmp_path / "runs"
    assert cli.main(["ra", "--r", "1,2", "--steps", "20", "--trials", "100", "--out", str(out)]) == 0
    run_dir = next(out.iterdir())
    assert (run_dir / "ra.svg").read_text().startswith("<svg")
    assert json.loads((run_dir / "manifest.json").read_text())["outputs"] == ["ra.csv", "ra.svg"]


def test_edgeprob_reports_bounds(tmp_path):
    code, dirs = run_main(["edgeprob", "--r", "1,2", "--trials", "200"], tmp_path)
    rows = read_rows(dirs[0], "edgeprob")
    for row in rows:
        lo, hi = cli.edge_bounds(1.0, float(row["r"]))
        assert float(row["lower"]) == lo and float(row["upper"]) == hi
    assert code == 0


def test_pd_single_trial_smoke_run(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("entropy_envs = 2\n")
    code, dirs = run_main(["pd", "--lambda", "1", "--trials", "1", "--steps", "3", "--config", str(cfg)], tmp_path)
    assert code in (0, 1) and len(read_rows(dirs[0], "pd")) == 1


def test_pq_ratio_trends_upward(tmp_path):
    code, dirs = run_main(["pq", "--trials", "500"], tmp_path)
    ratios = [float(r["ratio"]) for r in read_rows(dirs[0], "pq")]
    assert ratios == sorted(ratios)


@pytest.mark.parametrize("args", [
    ["ra", "--r", "1,6", "--steps", "40", "--trials", "1200", "--past-steps", "50"],
    ["edgeprob", "--r", "2", "--trials", "1100"],
    ["lyap", "--steps", "50", "--trials", "1100"],
    ["dim", "--q", "20", "--steps", "8", "--trials", "1500"],
    ["pd", "--lambda", "0.5,0.2", "--steps", "5", "--trials", "4", "--config", "ENV"],
])
def test_workers_do_not_change_results(args, tmp_path):
    if "ENV" in args:
        cfg = tmp_path / "env.ini"
        cfg.write_text("entropy_envs = 3\n")
        args = [str(cfg) if a == "ENV" else a for a in args]
    csv = []
    for workers in (1, 8):
        out = tmp_path / f"w{workers}"
        cli.main(args + ["--seed", "11", "--workers", str(workers), "--out", str(out), "--no-plot"])
        run_dir = next(out.iterdir())
        csv.append((run_dir / f"{args[0]}.csv").read_bytes())
    assert csv[0] == csv[1]
