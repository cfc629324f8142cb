import json
import textwrap

import pytest

from optstab.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, main
from optstab.config import ConfigError, parse_config

CONSTANT = """\
objective: {name: constant, params: {c: 1.0, half_width: 1.0}}
case: evolutive_discounted
lambda: 1.0
horizon: 5.0
grid: {h: 0.01}
delta_list: [0.25]
eta: 0.1
start_points: [[0.0], [0.5]]
"""


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def run(tmp_path, command, text, *extra):
    cfg = write(tmp_path, text)
    return main([command, "--config", str(cfg), *extra])


def test_solve_constant_writes_field_and_manifest(tmp_path, capsys):
    assert run(tmp_path, "solve", CONSTANT) == EXIT_OK
    out = tmp_path / "out"
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == {"field.bin", "field_final.csv", "bounds_report.json"}
    assert manifest["bounds_pass"] is True
    assert manifest["constants"]["R"] == pytest.approx(6 ** 0.5)
    assert "[PASS] bounds.value" in capsys.readouterr().out


def test_solve_stationary_records_residual(tmp_path):
    text = """\
    objective: {name: double_well_1d}
    case: stationary_discounted
    lambda: 0.1
    grid: {h: 0.02}
    tol: 1e-6
    """
    assert run(tmp_path, "solve", text) == EXIT_OK
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["field"]["residual"] < 1e-6


def test_pipeline_on_constant_objective(tmp_path):
    assert run(tmp_path, "pipeline", CONSTANT) == EXIT_OK
    out = tmp_path / "out"
    lines = (out / "summary.csv").read_text().splitlines()
    header = lines[0].split(",")
    for line in lines[1:]:
        row = dict(zip(header, line.split(",")))
        assert row["mu_0.25"] == "0.0" and row["tau"] == "0.0" and row["status"] == "pass"
    reports = json.loads((out / "reports.json").read_text())
    assert reports and all(r["pass"] for r in reports)


def test_manifest_lists_every_output_once(tmp_path):
    assert run(tmp_path, "pipeline", CONSTANT) == EXIT_OK
    out = tmp_path / "out"
    manifest = json.loads((out / "manifest.json").read_text())
    on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert set(manifest["files"]) == on_disk


def test_outputs_are_byte_identical_across_runs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = write(tmp_path, CONSTANT)
    assert main(["pipeline", "--config", str(cfg), "--output", str(a), "--threads", "2"]) == EXIT_OK
    assert main(["--config", str(cfg), "--output", str(b), "pipeline"]) == EXIT_OK
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        if n == "manifest.json":
            ma, mb = (json.loads((d / n).read_text()) for d in (a, b))
            ma["config"].pop("threads"), mb["config"].pop("threads")
            assert ma == mb
        else:
            assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_uncertified_row_skips_reachability(tmp_path):
    text = """\
    objective: {name: double_well_1d}
    case: evolutive_discounted
    lambda: 0.1
    horizon: 5.0
    grid: {h: 0.02}
    init: zero
    iters: 1
    eps_target: 0.0
    start_points: [[0.0]]
    """
    code = run(tmp_path, "check", text)
    assert code in (EXIT_OK, EXIT_CHECK)
    summary = (tmp_path / "out" / "summary.csv").read_text()
    assert "uncertified" in summary and "reachability delta=0.25 skipped" in summary
    reports = json.loads((tmp_path / "out" / "reports.json").read_text())
    assert not any(r["name"].startswith("reachability") for r in reports)


def test_dimension_cap_for_grid_solve(tmp_path, capsys):
    text = """\
    objective: {name: clipped_well_nd, params: {n: 4}}
    case: stationary_discounted
    lambda: 0.1
    """
    assert run(tmp_path, "solve", text) == EXIT_CONFIG
    assert "dimension" in capsys.readouterr().err


def test_empty_scan_list_is_config_error(tmp_path):
    text = """\
    objective: {name: double_well_1d}
    case: stationary_discounted
    lambda: 0.1
    scan: {values: []}
    """
    assert run(tmp_path, "scan", text) == EXIT_CONFIG
    with pytest.raises(ConfigError):
        parse_config(textwrap.dedent(text))


def test_scan_without_values_is_config_error(tmp_path):
    text = """\
    objective: {name: double_well_1d}
    case: stationary_discounted
    lambda: 0.1
    """
    assert run(tmp_path, "scan", text) == EXIT_CONFIG


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("objective: double_well_1d\ncase: stationary_discounted\nlambda: -1\n", 3, "lambda"),
        ("objective: double_well_1d\ncase: evolutive_discounted\nlambda: 0.1\nhorizon: 5\nbogus: 1\n", 5, "bogus"),
        ("objective: double_well_1d\ncase: case9\n", 2, "case"),
        ("objective: double_well_1d\ncase: evolutive_undiscounted\nhorizon: 4\ngrid:\n  h: abc\n", 5, "grid.h"),
        ("objective: double_well_1d\ncase: stationary_discounted\nlambda: 0.1\ndelta_list: [0.1, x]\n", 4, "delta_list"),
        ("objective: double_well_1d\ncase: evolutive_discounted\nlambda: 0.1\n", 2, "horizon"),
        ("objective: [unclosed\ncase: x\n", 2, "YAML"),
    ],
)
def test_config_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "run.yaml")
    assert info.value.line == line
    assert f"run.yaml:{line}:" in str(info.value)
    assert fragment in str(info.value)


def test_scientific_notation_is_a_number():
    cfg = parse_config("objective: double_well_1d\ncase: stationary_discounted\nlambda: 1e-2\ntol: 1e-6\n")
    assert cfg.lam == 0.01 and cfg.tol == 1e-6


def test_absolute_output_dir_rejected():
    with pytest.raises(ConfigError):
        parse_config("objective: double_well_1d\ncase: stationary_discounted\nlambda: 0.1\noutput_dir: /tmp/x\n")


def test_flags_override_file(tmp_path):
    cfg = write(tmp_path, CONSTANT)
    assert main(["pipeline", "--config", str(cfg), "--seed", "11", "--output", str(tmp_path / "o")]) == EXIT_OK
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 11


def test_missing_config_and_bad_threads(tmp_path):
    assert main(["solve"]) == EXIT_CONFIG
    assert main(["solve", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG
    cfg = write(tmp_path, CONSTANT)
    assert main(["solve", "--config", str(cfg), "--threads", "0"]) == EXIT_CONFIG
    assert main(["frobnicate", "--config", str(cfg)]) == EXIT_CONFIG


def test_unknown_benchmark_is_config_error(tmp_path):
    assert run(tmp_path, "solve", "objective: rastrigin\ncase: stationary_discounted\nlambda: 0.1\n") == EXIT_CONFIG


def test_bench_writes_table(tmp_path):
    text = CONSTANT + "bench: {h_values: [0.04, 0.02], horizon: 1.0}\n"
    assert run(tmp_path, "bench", text) == EXIT_OK
    rows = (tmp_path / "out" / "bench.csv").read_text().splitlines()
    assert rows[0] == "h,nodes,dt,value,seconds" and len(rows) == 3


def test_time_average_scan_bound_column(tmp_path):
    text = """\
    objective: {name: double_well_1d}
    case: evolutive_undiscounted
    grid: {h: 0.005}
    dt: 0.05
    cert_tol: 0.01
    threads: 3
    start_points: [[0.0]]
    scan: {values: [10, 50, 100]}
    """
    assert run(tmp_path, "scan", text) == EXIT_OK
    rows = (tmp_path / "out" / "scan_plot.csv").read_text().splitlines()
    assert rows[0] == "param,mu,bound"
    bounds = [float(r.split(",")[2]) for r in rows[1:]]
    assert bounds == pytest.approx([0.97980, 0.19596, 0.097980], abs=1e-5)
