import csv
import json

import pytest

from boolperc import cli
from boolperc import process as pr
from boolperc.errors import ConfigError

BASE = """[model]
space = E2
intensity = 0.5
radius_law = constant:1.0
L_a = 5
h = 0.25
r = 1.0

[run]
seed = 3
replicas = 3

[experiment]
name = connectivity
t_grid = 0,1,2,4
"""


@pytest.fixture
def ini(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(BASE)
    return p


def run(argv):
    return cli.main([str(a) for a in argv])


def test_sample_writes_measure_with_header(ini, tmp_path):
    out = tmp_path / "s"
    text = BASE.replace("intensity = 0.5", "intensity = 1.0").replace("L_a = 5", "L = 5\nL_a = 2")
    ini.write_text(text)
    assert run(["sample", "--config", ini, "--out", out, "--replicas", 1]) == 0
    om = pr.read(out / "omega_0000.txt")
    head = (out / "omega_0000.txt").read_text()
    assert "# space = E2" in head and "# intensity = 1.0" in head and "# seed = 3" in head
    assert om.window + om.halo == 5.0


def test_config_round_trip(ini):
    cfg = cli.load_config(ini)
    again = cli.parse_config(cfg.to_text())
    assert again == cfg
    assert cfg.params == {"t_grid": "0,1,2,4"}


@pytest.mark.parametrize("line,msg", [("h = 0.25", "h = 0.5"), ("r = 1.0", "r = 1.0\nhalo = 1.0")])
def test_config_errors_name_the_line(ini, line, msg, capsys):
    ini.write_text(BASE.replace(line, msg))
    assert run(["sample", "--config", ini]) == 2
    err = capsys.readouterr().err
    assert "config error" in err and "run.ini:" in err


def test_bad_values_rejected():
    with pytest.raises(ConfigError, match=":3: intensity"):
        cli.parse_config(BASE.replace("intensity = 0.5", "intensity = lots"), "x.ini")
    with pytest.raises(ConfigError, match="unknown model key"):
        cli.parse_config(BASE.replace("r = 1.0", "r = 1.0\ncolour = red"))
    with pytest.raises(ConfigError, match="unknown section"):
        cli.parse_config(BASE + "\n[extra]\na = 1\n")


def test_manifests_identical_across_threads(ini, tmp_path):
    paths = []
    for t in (1, 4):
        out = tmp_path / f"t{t}"
        assert run(["experiment", "connectivity", "--config", ini, "--threads", t, "--out", out]) == 0
        paths.append(out / "manifest.json")
    assert paths[0].read_bytes() == paths[1].read_bytes()
    man = json.loads(paths[0].read_text())
    names = {a["path"] for a in man["artifacts"]}
    assert {"connectivity.csv", "data_dictionary.csv", "record.json", "per_seed.jsonl", "config.ini"} <= names
    with open(tmp_path / "t1" / "connectivity.csv") as f:
        assert next(csv.reader(f)) == ["t", "tau_hat", "ci_lo", "ci_hi", "n_seeds"]


def test_indist_csv_columns(ini, tmp_path):
    ini.write_text(BASE.replace("name = connectivity", "name = indist\nproperty = cell_count\nthreshold = 50"))
    out = tmp_path / "i"
    assert run(["experiment", "indistinguishability", "--config", ini, "--out", out]) == 0
    with open(out / "indist.csv") as f:
        assert next(csv.reader(f)) == ["seed", "component_id", "cell_count", "boundary", "property_value"]


def test_percolation_csv_columns(ini, tmp_path):
    text = BASE.replace("intensity = 0.5", "intensity = 1.5").replace(
        "name = connectivity", "name = percolation\nlam_grid = 0.2,0.8")
    ini.write_text(text)
    out = tmp_path / "p"
    assert run(["experiment", "percolation", "--config", ini, "--out", out, "--replicas", 1]) == 0
    with open(out / "percolation.csv") as f:
        assert next(csv.reader(f)) == ["lambda", "percolates_fraction", "L_a"]


def test_walk_writes_stationarity_table(tmp_path):
    ini = tmp_path / "w.ini"
    ini.write_text("""[model]
space = H2
intensity = 0.025
radius_law = constant:2.0
L_a = 7.0
h = 0.5
r = 1.25
y_intensity = 0.03
phase = vacant

[run]
seed = 0
replicas = 12

[experiment]
name = walk
walks = 200
""")
    out = tmp_path / "w"
    assert run(["walk", "--config", ini, "--out", out]) == 0
    with open(out / "stationarity.csv") as f:
        assert next(csv.reader(f)) == ["n", "observable", "bin", "count"]
    assert run(["forest", "--config", ini, "--out", tmp_path / "f", "--replicas", 2]) == 0
    assert (tmp_path / "f" / "forest_0000.txt").exists()


def test_other_commands(ini, tmp_path):
    assert run(["scene", "--config", ini, "--out", tmp_path / "sc", "--replicas", 1]) == 0
    for name in ("pivotal", "monotone", "transience"):
        assert run(["experiment", name, "--config", ini, "--out", tmp_path / name, "--replicas", 1]) == 0


def test_same_seed_same_manifest(ini, tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    run(["sample", "--config", ini, "--out", a])
    run(["sample", "--config", ini, "--out", b])
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    run(["sample", "--config", ini, "--out", b, "--seed", 4])
    assert (a / "manifest.json").read_bytes() != (b / "manifest.json").read_bytes()
