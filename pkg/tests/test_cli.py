import csv
import json

import numpy as np
import pytest

from geopriv import io as gio
from geopriv.cli import main


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("GEOPRIV_SEED", raising=False)
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def population():
    assert run("grid", "--rows", 3, "--cols", 3, "--out", "g.json") == 0
    assert run("synth", "--grid", "g.json", "-n", 200, "--seed", 5,
               "--components", "[[4, 1.0, 1.0]]") == 0


def test_grid_command(capsys):
    assert run("grid", "--rows", 2, "--cols", 4, "--origin", 40.7, -74.0,
               "--cell-size", 0.01, 0.02, "--out", "g.json") == 0
    g = gio.read_grid("g.json")
    assert g.shape == (2, 4) and g.origin == (40.7, -74.0)


def test_verify_pl_prints_ratio(capsys):
    run("grid", "--rows", 2, "--cols", 2, "--out", "g.json")
    assert run("mechanism", "pl", "--grid", "g.json", "--epsilon", 0.5, "--out", "m.csv") == 0
    capsys.readouterr()
    assert run("verify", "--mechanism", "m.csv", "--epsilon", 0.5) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["satisfied"] and out["max_violation_ratio"] == pytest.approx(1.0, abs=1e-9)


def test_verify_failure_exit_code(capsys):
    run("mechanism", "pl", "--rows", 1, "--cols", 3, "--epsilon", 0.7, "--out", "m.csv")
    assert run("verify", "--mechanism", "m.csv", "--include-bottom") == 2
    assert json.loads(capsys.readouterr().out.split("\n", 1)[1])["witness"][2] == "BOTTOM"
    run("mechanism", "identity", "--rows", 1, "--cols", 3, "--out", "i.csv")
    assert run("verify", "--mechanism", "i.csv", "--epsilon", 1) == 2


def test_optql_spanner_then_verify(population):
    assert run("mechanism", "optql", "--grid", "g.json", "--users", "users.csv",
               "--epsilon", 2, "--mode", "spanner", "--delta", 1.09, "--out", "o.csv") == 0
    assert run("verify", "--mechanism", "o.csv", "--epsilon", 2) == 0


def test_pipeline_roundtrip(population, capsys):
    assert run("mechanism", "optql", "--grid", "g.json", "--prior", "prior.csv",
               "--epsilon", 1, "--out", "o.csv") == 0
    assert run("obfuscate", "--users", "users.csv", "--mechanism", "o.csv",
               "--seed", 3, "--out", "obf.csv") == 0
    capsys.readouterr()
    assert run("anonymize", "--dataset", "obf.csv", "-k", 10, "--out", "anon.csv") == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["kept"] + summary["deleted_count"] + summary["bottom_count"] == 200
    assert run("audit", "--dataset", "anon.csv", "--kappa", 0.05, "--out", "audit.json") == 0
    audit = json.loads(open("audit.json").read())
    assert audit["max_k"] >= 10
    assert run("audit", "--dataset", "obf.csv", "--mechanism", "o.csv", "--prior", "prior.csv",
               "--out", "a2.json") == 0
    pop = json.loads(open("a2.json").read())["population"]
    assert pop["posterior_vulnerability"] >= pop["prior_vulnerability"]
    assert run("heatmap", "--dataset", "obf.csv", "--grid", "g.json", "--out", "h.csv") == 0
    rows = list(csv.reader(l for l in open("h.csv") if not l.startswith("#")))
    assert len(rows) == 3 and sum(int(v) for r in rows for v in r) == 200


def test_obfuscate_seed_env_fallback(population, monkeypatch):
    run("mechanism", "pl", "--grid", "g.json", "--epsilon", 0.5, "--out", "m.csv")
    monkeypatch.setenv("GEOPRIV_SEED", "17")
    run("obfuscate", "--users", "users.csv", "--mechanism", "m.csv", "--out", "a.csv")
    run("obfuscate", "--users", "users.csv", "--mechanism", "m.csv", "--seed", 17, "--out", "b.csv")
    run("obfuscate", "--users", "users.csv", "--mechanism", "m.csv", "--seed", 18, "--out", "c.csv")
    a, b, c = (gio.read_dataset(p).reported for p in ("a.csv", "b.csv", "c.csv"))
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_export_lp_and_external_solution(population):
    assert run("export-lp", "--grid", "g.json", "--prior", "prior.csv", "--epsilon", 1,
               "--out", "o.lp") == 0
    from scipy.optimize import linprog
    from geopriv import parse_lp
    lp = parse_lp(open("o.lp").read())
    res = linprog(lp.c, A_ub=lp.A_ub, b_ub=lp.b_ub, A_eq=lp.A_eq, b_eq=lp.b_eq,
                  bounds=(0, None), method="highs")
    with open("sol.csv", "w") as fh:
        fh.write("variable,value\n")
        fh.writelines(f"{n},{float(v)!r}\n" for n, v in zip(lp.names, res.x))
    assert run("mechanism", "optql", "--grid", "g.json", "--prior", "prior.csv", "--epsilon", 1,
               "--solution", "sol.csv", "--out", "ext.csv") == 0
    assert run("mechanism", "optql", "--grid", "g.json", "--prior", "prior.csv", "--epsilon", 1,
               "--out", "own.csv") == 0
    ext, _ = gio.read_mechanism("ext.csv")
    own, _ = gio.read_mechanism("own.csv")
    prior = gio.read_prior("prior.csv", 9)
    d = gio.read_grid("g.json").distances
    ql = lambda m: float(np.einsum("x,xy,xy->", prior, m.regions, d))
    assert ql(ext) == pytest.approx(ql(own), abs=1e-8)
    assert run("verify", "--mechanism", "ext.csv") == 0


def test_external_solution_that_violates(population):
    run("export-lp", "--grid", "g.json", "--prior", "prior.csv", "--epsilon", 1, "--out", "o.lp")
    with open("bad.csv", "w") as fh:
        fh.writelines(f"q_{x}_{x},1\n" for x in range(9))
    assert run("mechanism", "optql", "--grid", "g.json", "--prior", "prior.csv", "--epsilon", 1,
               "--solution", "bad.csv", "--out", "x.csv") == 2


def test_sweep_with_config_and_overrides(population):
    cfg = {"grid": {"rows": 3, "cols": 3},
           "data": {"synthetic": {"components": [[4, 1.0, 1.0]], "n": 150}},
           "mechanisms": ["PL", "OptQL-full"], "epsilons": [0.5, 1.0], "output_dir": "out"}
    with open("c.json", "w") as fh:
        json.dump(cfg, fh)
    assert run("sweep", "--config", "c.json") == 0
    rows = list(csv.DictReader(open("out/sweep.csv")))
    assert [(r["mechanism"], float(r["epsilon"])) for r in rows] == [
        ("PL", 0.5), ("PL", 1.0), ("OptQL-full", 0.5), ("OptQL-full", 1.0)]
    assert run("sweep", "--config", "c.json", "--epsilons", 0.3, "--mechanisms", "PL",
               "--output-dir", "out2") == 0
    rows = list(csv.DictReader(open("out2/sweep.csv")))
    assert len(rows) == 1 and float(rows[0]["epsilon"]) == 0.3


def test_converge_command():
    cfg = {"grid": {"rows": 3, "cols": 3},
           "data": {"synthetic": {"components": [[4, 1.0, 1.0]], "n": 150}},
           "mechanisms": ["PL"], "sizes": [50, 150], "trials": 2, "output_dir": "cv"}
    with open("c.json", "w") as fh:
        json.dump(cfg, fh)
    assert run("converge", "--config", "c.json") == 0
    table = list(csv.DictReader(open("cv/converge.csv")))
    assert {r["mechanism"] for r in table} == {"prior", "PL"}
    assert list(csv.DictReader(open("cv/kappa_reference.csv")))


def test_generic_config_defaults_with_override(capsys):
    run("grid", "--rows", 2, "--cols", 2, "--out", "g.json")
    with open("m.json", "w") as fh:
        json.dump({"grid": "g.json", "epsilon": 0.25, "out": "from_config.csv"}, fh)
    assert run("mechanism", "pl", "--config", "m.json") == 0
    m, _ = gio.read_mechanism("from_config.csv")
    assert m.epsilon == 0.25
    assert run("mechanism", "pl", "--config", "m.json", "--epsilon", 0.75) == 0
    assert gio.read_mechanism("from_config.csv")[0].epsilon == 0.75


def test_ingest_command(capsys):
    run("grid", "--rows", 2, "--cols", 2, "--out", "g.json")
    with open("c.csv", "w") as fh:
        fh.write("user_id,lat,lon,timestamp\na,0.5,0.5,1\nb,1.5,1.5,2\nc,7,7,3\n")
    assert run("ingest", "--grid", "g.json", "--input", "c.csv") == 0
    assert "1 out-of-bounds" in capsys.readouterr().out
    assert gio.read_users("users.csv").user_ids == ("a", "b")
    with open("bad.csv", "w") as fh:
        fh.write("user_id,lat,lon,timestamp\na,x,0.5,1\n")
    assert run("ingest", "--grid", "g.json", "--input", "bad.csv") == 1


@pytest.mark.parametrize("argv", [
    ["verify", "--mechanism", "m.csv", "--bogus"],
    ["frobnicate"],
    [],
    ["mechanism", "pl", "--epsilon", "-1"],
    ["mechanism", "pl"],
    ["verify", "--mechanism", "missing.csv"],
    ["sweep", "--epsilons", "0"],
])
def test_validation_errors_exit_1(argv, capsys):
    assert run(*argv) == 1
    assert capsys.readouterr().err


def test_unknown_flag_prints_usage(capsys):
    run("grid", "--wat")
    assert "usage:" in capsys.readouterr().err


def test_solver_failure_exit_2(monkeypatch, population):
    import geopriv.cli as cli
    from geopriv.optimal import SolverError

    def boom(*a, **k):
        raise SolverError("no luck")
    monkeypatch.setattr(cli, "build_optql", boom)
    assert run("mechanism", "optql", "--grid", "g.json", "--epsilon", 1) == 2


def test_help_exits_zero(capsys):
    assert run("--help") == 0
    assert "sweep" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "geopriv", "grid", "--rows", "2", "--cols", "2",
                           "--out", str(tmp_path / "g.json")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "geopriv", "grid", "--nope"],
                          capture_output=True, text=True)
    assert proc.returncode == 1
