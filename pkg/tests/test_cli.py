import csv

import pytest

from daol.cli import build_parser, main
from daol.config import ConfigError, build_graph, load_config, parse_lines, parse_nodes


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_parse_lines_comments_and_errors():
    cfg = parse_lines(["# comment", "T = 10  # trailing", "", "topology=ring:4"])
    assert cfg == {"T": "10", "topology": "ring:4"}
    with pytest.raises(ConfigError, match="<config>:1"):
        parse_lines(["nonsense"])


def test_load_config_precedence(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("T=7\nseed=3\n", encoding="utf-8")
    cfg = load_config(p, ["seed=4"], "simulate")
    assert cfg["T"] == "7" and cfg["seed"] == "4" and cfg["topology"] == "hypercube:4"


def test_build_graph_variants():
    assert build_graph({"topology": "hypercube", "m": "16"}).m == 16
    assert build_graph({"topology": "ring", "m": "1"}).m == 1
    with pytest.raises(ConfigError):
        build_graph({"topology": "ring:4", "m": "5"})
    assert parse_nodes("1, 3", 4) == [1, 3]
    assert parse_nodes("all", 4, exclude=2) == [0, 1, 3]
    with pytest.raises(ConfigError):
        parse_nodes("9", 4)


def test_simulate_m1(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "topology=ring", "m=1", "T=10", "--out", str(out)]) == 0
    rows = read_csv(out / "regret.csv")
    assert rows[0] == ["t", "instantaneous", "cumulative", "bound_rhs"]
    assert len(rows) == 11
    inst = [float(r[1]) for r in rows[1:]]
    cum = [float(r[2]) for r in rows[1:]]
    if all(v >= 0 for v in inst):
        assert cum == sorted(cum)
    assert (out / "manifest.cfg").read_text(encoding="utf-8").startswith("# daol")


def test_simulate_overlay_and_determinism(tmp_path):
    args = ["topology=hypercube:4", "T=100", "n_test=500", "sequential=1"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", *args, "--out", str(a)]) == 0
    assert main(["simulate", str(a / "manifest.cfg"), "--out", str(b)]) == 0
    for name in ("regret.csv", "testerror.csv", "summary.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = read_csv(a / "testerror.csv")
    assert rows[0] == ["learner", "examples_seen", "rounds", "error_rate"]
    learners = {r[0] for r in rows[1:]}
    assert learners == {"distributed", "sequential"}
    assert b"\r\n" not in (a / "regret.csv").read_bytes()


def test_simulate_trace_dump(tmp_path):
    out = tmp_path / "t"
    assert main(["simulate", "topology=ring:4", "T=3", "dim=2", "dump_trace=1", "--out", str(out)]) == 0
    rows = read_csv(out / "trace.csv")
    assert rows[0] == ["t", "node", "coord", "eta", "w", "g", "r_next"]
    assert len(rows) == 1 + 3 * 4 * 2


def test_simulate_invalid_config(tmp_path, capsys):
    assert main(["simulate", "topology=bogus:3", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["simulate", "domain=sphere", "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("topology,verdict", [("grid:3x3", "privacy-preserving"),
                                              ("clique:4", "not-privacy-preserving"),
                                              ("star:5", "not-privacy-preserving")])
def test_privacy_command(tmp_path, topology, verdict):
    out = tmp_path / "p"
    assert main(["privacy", f"topology={topology}", "--out", str(out)]) == 0
    rows = read_csv(out / "privacy_report.csv")
    assert rows[0] == ["M", "N_set", "cond_i", "cond_ii", "structural", "numerical", "kappa", "verdict"]
    assert all(r[-1] == verdict for r in rows[1:])
    flagged = {r[0] for r in rows[1:] if r[4] == "reconstructable"}
    if topology == "clique:4":
        assert flagged == {"0", "1", "2", "3"}
    if topology == "star:5":
        assert "0" in flagged
    assert "verdict" in (out / "summary.txt").read_text(encoding="utf-8")


def test_privacy_disconnected(tmp_path):
    edges = tmp_path / "e.txt"
    edges.write_text("m 4 directed 1\n0 1\n1 0\n2 3\n3 2\n", encoding="utf-8")
    assert main(["privacy", f"topology=file:{edges}", "--out", str(tmp_path / "p")]) == 2


def test_privacy_contradiction_flagged(tmp_path, capsys):
    edges = tmp_path / "e.txt"
    edges.write_text("m 5 directed 0\n0 1\n0 2\n0 3\n1 2\n1 3\n2 4\n3 4\n", encoding="utf-8")
    assert main(["privacy", f"topology=file:{edges}", "--out", str(tmp_path / "p")]) == 1
    assert capsys.readouterr().out.startswith("FAIL sufficient_condition")


def test_attack_success(tmp_path):
    out = tmp_path / "a"
    assert main(["attack", "topology=clique:3", "observer=0", "targets=1,2", "--out", str(out)]) == 0
    rows = read_csv(out / "attack_report.csv")
    assert rows[0] == ["t", "node", "coord", "true_g", "reconstructed_g", "abs_error"]
    assert max(float(r[5]) for r in rows[1:]) <= 1e-9
    assert "full-reconstruction condition holds" in (out / "summary.txt").read_text(encoding="utf-8")


def test_attack_refusal_emits_witness(tmp_path):
    out = tmp_path / "a"
    assert main(["attack", "topology=fig2b", "observer=0", "targets=1,2", "--out", str(out)]) == 0
    summary = (out / "summary.txt").read_text(encoding="utf-8")
    assert "condition i failed" in summary and "[2]" in summary
    rows = read_csv(out / "observations.csv")
    assert all(abs(float(r[2]) - float(r[3])) <= 1e-10 for r in rows[1:])
    assert read_csv(out / "witness.csv")[0] == ["round", "node", "input", "value_a", "value_b"]


def test_attack_projection_refusal(tmp_path):
    out = tmp_path / "a"
    assert main(["attack", "topology=clique:3", "domain=ball:0.5", "--out", str(out)]) == 0
    summary = (out / "summary.txt").read_text(encoding="utf-8")
    assert "projection" in summary and "collision" in summary
    assert any(r[2] == "r" for r in read_csv(out / "witness.csv")[1:])


def test_attack_rejects_observer_in_targets(tmp_path):
    assert main(["attack", "topology=clique:3", "observer=0", "targets=0,1", "--out", str(tmp_path)]) == 2


def test_help_documents_columns(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["simulate", "--help"])
    assert "t,instantaneous,cumulative,bound_rhs" in capsys.readouterr().out


def test_selftest_subset(capsys):
    assert main(["selftest", "--only", "4,7"]) == 0
    out = capsys.readouterr().out
    assert "PASS criterion  4" in out and "PASS criterion  7" in out
