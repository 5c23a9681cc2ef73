import csv
import io
import json

import numpy as np
import pytest

from xbsched.cli import (EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NO_INCUMBENT, EXIT_OK, _parse_counts, main,
                         preset_names)
from xbsched.core import read_instance, save_instance
from xbsched.evaluation import CSV_COLUMNS


def run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_presets_listed():
    names = preset_names()
    assert {"tiny", "desk", "division_01", "division_10"} <= set(names)


def test_generate_division_preset(tmp_path, capsys):
    rc, out, _ = run(capsys, "generate", "--preset", "division_01", "--seed", "3", "--out", str(tmp_path))
    assert rc == EXIT_OK
    inst = read_instance(out.strip())
    assert inst.num_employees == 50 and inst.scenario_counts() == [100] * 14


def test_oracle_check_reports_all_agreements(capsys):
    rc, out, _ = run(capsys, "oracle-check", "--size", "tiny", "--trials", "5")
    assert rc == EXIT_OK and out.strip() == "agreements: 5/5"


def test_unknown_preset_and_missing_file(tmp_path, capsys):
    assert run(capsys, "solve", "--preset", "nope")[0] == EXIT_CONFIG
    assert run(capsys, "solve", "--instance", str(tmp_path / "none.json"))[0] == EXIT_CONFIG
    bad = tmp_path / "bad.toml"
    bad.write_text("[generator]\nbogus = 1\n")
    assert run(capsys, "generate", "--config", str(bad))[0] == EXIT_CONFIG
    assert run(capsys, "scenario-study", "--preset", "tiny", "--counts", "0")[0] == EXIT_CONFIG


def test_json_config_accepted(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"generator": {"name": "j", "num_employees": 2, "num_days": 7, "l": 1, "k": 1}}))
    rc, out, _ = run(capsys, "generate", "--config", str(cfg), "--out", str(tmp_path))
    assert rc == EXIT_OK and out.strip().endswith("j-s0.json")


@pytest.fixture
def tiny_instance(tmp_path, capsys):
    rc, out, _ = run(capsys, "generate", "--preset", "tiny", "--seed", "4", "--out", str(tmp_path))
    assert rc == EXIT_OK
    return out.strip()


def test_infeasible_instance_exit_code(tmp_path, capsys, tiny_instance):
    inst = read_instance(tiny_instance)
    blocked = inst.replace(known_demand=np.full(inst.num_days, inst.num_employees, dtype=np.int64))
    path = tmp_path / "blocked.json"
    save_instance(blocked, path)
    assert run(capsys, "solve", "--instance", str(path), "--out", str(tmp_path))[0] == EXIT_INFEASIBLE


def test_no_incumbent_exit_code(tmp_path, capsys, tiny_instance):
    cfg = tmp_path / "limit.toml"
    cfg.write_text("[solve]\nnode_limit = 0\n")
    rc, _, err = run(capsys, "solve", "--config", str(cfg), "--instance", tiny_instance, "--out", str(tmp_path))
    assert rc == EXIT_NO_INCUMBENT and "without an incumbent" in err


def test_solve_then_evaluate_matches_vss_branch(tmp_path, capsys, tiny_instance):
    out = tmp_path / "o"
    rc, _, _ = run(capsys, "solve", "--preset", "tiny", "--instance", tiny_instance, "--out", str(out))
    assert rc == EXIT_OK
    sols = list(out.glob("*.solution.json"))
    assert len(sols) == 1
    sol = json.loads(sols[0].read_text())
    assert sol["schema"] == "xbsched.solution/1" and len(sol["assignment"]) == 3
    assert (out / sols[0].name.replace(".solution.json", ".timing.json")).is_file()

    rc, _, _ = run(capsys, "evaluate", "--preset", "tiny", "--instance", tiny_instance, "--solution", str(sols[0]),
                   "--out", str(out))
    assert rc == EXIT_OK
    text = (out / "evaluation.csv").read_text()
    stamp, body = text.split("\n", 1)
    assert stamp.startswith("# seed=") and "config_hash=" in stamp
    rows = list(csv.DictReader(io.StringIO(body)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert (out / "evaluation.md").read_text().startswith("<!-- seed=")

    rc, _, _ = run(capsys, "vss", "--preset", "tiny", "--instance", tiny_instance, "--out", str(out))
    assert rc == EXIT_OK
    vss = list(csv.DictReader(io.StringIO((out / "vss.csv").read_text().split("\n", 1)[1])))
    assert len(vss) == 2
    # the candidate row of the VSS comparison is the stochastic solution
    assert float(vss[1]["cost"]) == pytest.approx(float(rows[0]["cost"]), abs=1e-9)


def test_repeat_runs_are_byte_identical(tmp_path, capsys):
    outputs = []
    for tag in ("a", "b"):
        d = tmp_path / tag
        assert run(capsys, "evpi", "--preset", "tiny", "--seed", "2", "--out", str(d))[0] == EXIT_OK
        outputs.append({p.name: p.read_bytes() for p in sorted(d.iterdir()) if "timings" not in p.name})
    assert outputs[0] == outputs[1]


def test_parse_counts():
    assert _parse_counts("25,49,100") == [(5, 5), (7, 7), (10, 10)]
    assert _parse_counts("3") == [(3, 1)]
