import csv
import json
from pathlib import Path

import pytest

from asymdiag import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(tmp_path, command, cfg, *extra):
    if isinstance(cfg, dict):
        path = tmp_path / f"{command}_in.json"
        path.write_text(json.dumps(cfg))
    else:
        path = CONFIGS / cfg
    out = tmp_path / "out"
    code = cli.main([command, "--config", str(path), "--out", str(out), *extra])
    return code, out / f"{command}.csv"


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def explicit_bvp(V="0.01"):
    return {
        "command": "bvp",
        "grid": {"N": 256},
        "bvp": {
            "A": [["-1", "0"], ["0", "1"]],
            "V": [["0", V], [V, "0"]],
            "f": ["1", "t"],
            "P": [[1, 0], [0, 0]],
            "xi": [1, 0],
            "gamma": 0.5,
            "theta": 0.5,
        },
    }


def test_companion_trivial(tmp_path):
    code, out = run(tmp_path, "companion", "companion_trivial.json")
    assert code == 0
    rs = rows(out)
    assert len(rs) == 2 * 2 * 2
    assert all(float(r["rel_sup_error"]) <= 1e-6 for r in rs)


def test_frame_columns_within_bounds(tmp_path):
    code, out = run(tmp_path, "frame", "frame_two_atoms.json")
    assert code == 0
    (r,) = rows(out)
    for s in ("s_dev", "s_inv_dev", "s_deriv_l1", "block_residual"):
        assert float(r[f"{s}_lhs"]) <= float(r[f"{s}_rhs"]) * 1.05
    assert r["holds"] == "true"


def test_bvp_random_matches_direct(tmp_path):
    code, out = run(tmp_path, "bvp", "bvp_random.json")
    assert code == 0
    (r,) = rows(out)
    assert float(r["oracle_gap"]) <= 1e-8
    assert float(r["relative_gap"]) <= float(r["gap_bound"])
    assert float(r["contraction_factor"]) <= float(r["theta"])


def test_bvp_explicit(tmp_path):
    code, out = run(tmp_path, "bvp", explicit_bvp())
    assert code == 0
    assert float(rows(out)[0]["oracle_gap"]) <= 1e-8


def test_family(tmp_path):
    code, out = run(tmp_path, "family", "family_two_blocks.json")
    assert code == 0
    rs = rows(out)
    assert len(rs) == 2 * 2 * 4
    for r in rs:
        assert float(r["actual_gap"]) <= float(r["refined_bound"])


def test_csv_format(tmp_path):
    _, out = run(tmp_path, "bvp", "bvp_random.json")
    header, line = out.read_text().splitlines()
    assert header.split(",")[0] == "seed"
    gap = line.split(",")[-1]
    # 17 significant digits round-trip exactly; %.17g drops trailing zeros
    assert float(gap) == float(f"{float(gap):.17g}")
    assert gap == f"{float(gap):.17g}"
    mant = gap.lower().split("e")[0].replace("-", "").replace(".", "").lstrip("0")
    assert len(mant) <= 17


def test_deterministic_and_thread_independent(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    c = tmp_path / "c"
    cfg = str(CONFIGS / "companion_decay.json")
    assert cli.main(["companion", "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["companion", "--config", cfg, "--out", str(b)]) == 0
    assert cli.main(["companion", "--config", cfg, "--out", str(c), "--threads", "2"]) == 0
    ta = (a / "companion.csv").read_bytes()
    assert ta == (b / "companion.csv").read_bytes() == (c / "companion.csv").read_bytes()


@pytest.mark.parametrize(
    "command,cfg",
    [
        ("bvp", {"command": "bvp", "grid": {"N": 100}}),
        ("companion", {"command": "companion", "companion": {"n": 2, "p": ["1 +", "1"]}}),
        ("companion", {"command": "companion", "companion": {"n": 2, "p": ["t - 0.5", "1"]}}),
        ("companion", {"command": "companion", "companion": {"n": 2, "p": ["1", "1"], "k": [3]}}),
        ("frame", {"command": "bvp"}),
        ("family", {"command": "family", "family": {"blocks": [[0]], "h": [5], "V": "x"}}),
        ("bvp", {"command": "bvp", "magnitudes": [20, 10]}),
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, command, cfg):
    code, out = run(tmp_path, command, cfg)
    assert code == 2
    assert not out.exists()
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 2


def test_missing_and_invalid_files_exit_2(tmp_path):
    assert cli.main(["bvp", "--config", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["bvp", "--config", str(bad)]) == 2
    assert cli.main(["bvp"]) == 2
    assert cli.main(["bvp", "--config", str(CONFIGS / "bvp_random.json"), "--threads", "0"]) == 2


def test_numeric_precondition_exit_3(tmp_path):
    code, _ = run(tmp_path, "bvp", explicit_bvp(V="3"))
    assert code == 3
    cfg = json.loads((CONFIGS / "frame_two_atoms.json").read_text())
    cfg["frame"]["C"] = [["0", "0.02"], ["0.02", "0"]]
    code, _ = run(tmp_path, "frame", cfg)
    assert code == 3


def test_strict_violation_exit_4(tmp_path):
    cfg = json.loads((CONFIGS / "frame_two_atoms.json").read_text())
    cfg["slack"] = -0.999
    code, out = run(tmp_path, "frame", cfg, "--strict")
    assert code == 4
    assert not out.exists()
    code, out = run(tmp_path, "frame", cfg)
    assert code == 0
    assert rows(out)[0]["holds"] == "false"


def test_fmt_seventeen_digits():
    assert cli._fmt(1 / 3) == "0.33333333333333331"
    assert cli._fmt(True) == "true" and cli._fmt(False) == "false"
    assert cli._fmt(7) == "7"
    for v in (0.1, 2.0 / 7.0, 1e-300, 123456.789):
        assert float(cli._fmt(v)) == v
