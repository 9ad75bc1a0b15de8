"""Command-line front end.

    boolperc sample     --config run.ini --seed 1 --replicas 4 --out out/
    boolperc experiment connectivity --config run.ini --threads 8

Config files are flat ``key = value`` text with three sections:
``[model]`` (ModelConfig fields), ``[run]`` (seed, replicas, threads, out)
and ``[experiment]`` (name plus its parameters).  Command-line flags
override ``[run]``.  Every run writes a ``manifest.json`` listing each
artifact with its sha-256; thread count and output path are left out of
all artifacts so manifests match at any thread count.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import forest as fo
from . import process as pr
from . import walks as wk
from .errors import ConfigError, InputError, InvariantViolation
from .rng import stream

EXPERIMENTS = ("pivotal", "indist", "monotone", "connectivity", "percolation", "transience")
_ALIASES = {"indistinguishability": "indist", "monotonicity": "monotone"}

# per-experiment parameters with defaults (all stored as text)
PARAM_DEFAULTS = {
    "pivotal": {"property": "boundary_contact", "delta": "0.125", "samples": "16", "Delta": "2.0",
                "r_star": ""},
    "indist": {"property": "frequency_median", "strata": "0,100,1000", "walks": "20", "steps": "2000",
               "threshold": ""},
    "monotone": {"lam1": "", "lam2": "", "ladder": ""},
    "connectivity": {"t_grid": "0,1,2,4,6,8"},
    "percolation": {"lam_grid": "0.1,0.2,0.4,0.8,1.6,3.2", "ladder": ""},
    "transience": {"trials": "2000", "step_cap": "2000"},
    "walk": {"n_max": "10", "walks": "5000", "observable": "degree", "anchor": "uniform", "censor": "false"},
}

COLUMN_DOCS = {
    "t": "distance from the origin of the probe point",
    "tau_hat": "share of seeds where origin and probe share a component",
    "ci_lo": "Wilson 95% lower bound for tau_hat",
    "ci_hi": "Wilson 95% upper bound for tau_hat",
    "n_seeds": "number of seeds behind the estimate",
    "n": "walk time index (negative for the backward half)",
    "observable": "name of the per-vertex observable",
    "bin": "observable value",
    "count": "walks with that value at time n",
    "lambda": "intensity of the vertex process inside the component",
    "percolates_fraction": "share of seeds whose component graph spans at that intensity",
    "L_a": "analysis radius",
    "seed": "replica index",
    "component_id": "component label within the scene",
    "cell_count": "raster cells in the analysis region",
    "boundary": "component touches the boundary sphere",
    "property_value": "value of the tested property",
    "cross_lam1": "crossing components at the lower intensity",
    "cross_lam2": "crossing components at the higher intensity",
    "violation": "unique crossing lost when moving up in the coupling",
    "z": "index of the Z-atom",
    "x": "first chart coordinate",
    "y": "second chart coordinate",
    "fraction": "share of insertion samples that flip the property",
    "flipped": "at least one sample flipped the property",
}


# ---------------------------------------------------------------- configuration


@dataclass
class RunConfig:
    model: ex.ModelConfig = field(default_factory=ex.ModelConfig)
    seed: int = 0
    replicas: int = 1
    threads: int = 1
    out: str = "out"
    experiment: str = ""
    params: dict = field(default_factory=dict)

    def param(self, key, cast=str, default=None):
        v = self.params.get(key, "")
        if v == "" or v is None:
            d = PARAM_DEFAULTS.get(self.experiment, {}).get(key, "")
            if d == "":
                return default
            v = d
        try:
            return cast(v)
        except ValueError as e:
            raise ConfigError(f"[experiment] {key}: cannot read {v!r} ({e})") from None

    def to_text(self, run_fields=True):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        m = {f.name: getattr(self.model, f.name) for f in fields(self.model)}
        cp["model"] = {k: ("" if v is None else repr(v) if isinstance(v, float) else str(v)) for k, v in m.items()}
        run = {"seed": str(self.seed), "replicas": str(self.replicas)}
        if run_fields:
            run.update(threads=str(self.threads), out=self.out)
        cp["run"] = run
        cp["experiment"] = {"name": self.experiment, **{k: str(v) for k, v in sorted(self.params.items())}}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _floats(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _line_of(text, key):
    for i, line in enumerate(text.splitlines(), 1):
        if line.split("=")[0].strip() == key:
            return i
    return None


def parse_config(text, where="<config>"):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=where)
    except configparser.Error as e:
        raise ConfigError(f"{where}: {e}") from None
    unknown = set(cp.sections()) - {"model", "run", "experiment"}
    if unknown:
        raise ConfigError(f"{where}: unknown section(s) {sorted(unknown)}")
    model = {}
    types = {f.name: f.type for f in fields(ex.ModelConfig)}

    def fail(key, msg):
        ln = _line_of(text, key)
        at = f"{where}:{ln}" if ln else where
        raise ConfigError(f"{at}: {key}: {msg}")

    sec = cp["model"] if cp.has_section("model") else {}
    L = None
    for k, v in sec.items():
        if k == "L":
            try:
                L = float(v)
            except ValueError:
                fail(k, f"not a number: {v!r}")
            continue
        if k not in types:
            fail(k, "unknown model key")
        if k in ("space", "radius_law", "phase"):
            model[k] = v.strip()
        elif k == "halo" and v.strip() == "":
            model[k] = None
        else:
            try:
                model[k] = float(v)
            except ValueError:
                fail(k, f"not a number: {v!r}")
    mc = ex.ModelConfig(**model)
    if L is not None:
        if mc.halo is not None and abs(mc.L_a + mc.halo - L) > 1e-12:
            fail("L", "inconsistent with L_a + halo")
        mc = replace(mc, halo=L - mc.L_a)
    try:
        mc.validate()
    except (ConfigError, InputError) as e:
        key = str(e).split()[0] if str(e) else ""
        ln = _line_of(text, key) or (_line_of(text, "L") if key == "L_a" else None)
        raise ConfigError(f"{where}{':' + str(ln) if ln else ''}: {e}") from None
    run = cp["run"] if cp.has_section("run") else {}
    rc = RunConfig(model=mc)
    for k, v in run.items():
        if k in ("seed", "replicas", "threads"):
            try:
                setattr(rc, k, int(v))
            except ValueError:
                fail(k, f"not an integer: {v!r}")
        elif k == "out":
            rc.out = v
        else:
            fail(k, "unknown run key")
    if cp.has_section("experiment"):
        e = dict(cp["experiment"])
        rc.experiment = e.pop("name", "")
        rc.params = e
    return rc


def load_config(path):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{path}: no such file")
    return parse_config(p.read_text(), str(path))


# ---------------------------------------------------------------- artifacts


class Artifacts:
    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = {}

    def write(self, name, text):
        data = text.encode() if isinstance(text, str) else text
        (self.out / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def csv(self, name, columns, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(v) for v in r])
        self.write(name, buf.getvalue())

    def manifest(self, command, cfg):
        body = {"command": command, "seed": cfg.seed, "replicas": cfg.replicas,
                "artifacts": [{"path": k, "sha256": v} for k, v in sorted(self.files.items())]}
        self.write("manifest.json", json.dumps(body, sort_keys=True, indent=1) + "\n")
        return self.out / "manifest.json"


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def export_plotdata(tables, art, prefix=""):
    """Write each (columns, rows) table as a tidy CSV plus a data dictionary."""
    dic = []
    for name in sorted(tables):
        cols, rows = tables[name]
        art.csv(f"{prefix}{name}.csv", cols, rows)
        for c in cols:
            dic.append((f"{prefix}{name}.csv", c, COLUMN_DOCS.get(c, "")))
    if dic:
        art.csv(f"{prefix}data_dictionary.csv", ("table", "column", "description"), dic)


# ---------------------------------------------------------------- commands


def _replicas(cfg):
    return range(int(cfg.replicas))


def cmd_sample(cfg, art):
    def one(rep):
        return pr.to_text(ex.sample_measure(cfg.model, cfg.seed, rep))
    for rep, text in zip(_replicas(cfg), ex.map_replicas(one, _replicas(cfg), cfg.threads)):
        art.write(f"omega_{rep:04d}.txt", text)


def cmd_scene(cfg, art):
    def one(rep):
        S = ex.scene_for(cfg.model, cfg.seed, rep)
        return S.to_jsonl(), S.rle_dump()
    res = ex.map_replicas(one, _replicas(cfg), cfg.threads)
    for rep, (js, rle) in zip(_replicas(cfg), res):
        art.write(f"scene_{rep:04d}.jsonl", js)
        art.write(f"scene_{rep:04d}.rle", rle)


def _forest(cfg, rep):
    S, F = ex.forest_for(cfg.model, cfg.seed, rep)
    checks = ex.forest_checks(F)
    return S, F, checks


def cmd_forest(cfg, art):
    def one(rep):
        S, F, checks = _forest(cfg, rep)
        bb, _, _ = fo.ball_graph_backbone(S)
        flows = fo.all_flows(bb)
        out, inn = ex.transport_masses(F, S.space)
        checks.update(seed=rep, transport_out=out, transport_in=inn)
        return F.to_text(), fo.flows_to_text(bb, flows), checks
    res = ex.map_replicas(one, _replicas(cfg), cfg.threads)
    for rep, (ft, fl, ch) in zip(_replicas(cfg), res):
        art.write(f"forest_{rep:04d}.txt", ft)
        art.write(f"flows_{rep:04d}.txt", fl)
    art.write("forest.jsonl", "".join(json.dumps(ex._plain(r), sort_keys=True) + "\n" for _, _, r in res))


def cmd_walk(cfg, art):
    cfg = replace(cfg, experiment="walk")
    forests = [F for _, F, _ in ex.map_replicas(lambda r: _forest(cfg, r), _replicas(cfg), cfg.threads)]
    res = wk.stationarity_diagnostic(
        forests, stream(cfg.seed, 0, "stationarity"), n_max=cfg.param("n_max", int),
        walks=cfg.param("walks", int), observable=cfg.param("observable"),
        anchor=cfg.param("anchor"), censor=cfg.param("censor", lambda s: s.lower() in ("1", "true", "yes")))
    export_plotdata({"stationarity": (("n", "observable", "bin", "count"), res.to_rows(cfg.param("observable")))}, art)
    summary = {"max_tv": res.max_tv, "max_reversal_tv": res.max_reversal_tv, "accepted": res.accepted,
               "attempts": res.attempts, "censored_fraction": res.censored_fraction}
    art.write("summary.json", json.dumps(ex._plain(summary), sort_keys=True, indent=1) + "\n")


def _property(cfg, name):
    if name == "boundary_contact":
        return ex.boundary_contact()
    if name == "cell_count":
        return ex.cell_count_at_least(cfg.param("threshold", int, 100))
    if name == "frequency":
        return ex.frequency_at_least(cfg.param("threshold", float, 0.01),
                                     cfg.param("walks", int, 20), cfg.param("steps", int, 2000))
    if name == "frequency_median":
        return ex.frequency_above_median(cfg.param("walks", int, 20), cfg.param("steps", int, 2000))
    if name == "id_even":
        return ex.component_id_even()
    raise ConfigError(f"[experiment] property: unknown property {name!r}")


def _pivotal(cfg):
    m = cfg.model
    prop = _property(cfg, cfg.param("property"))
    r_star = cfg.param("r_star", float)

    def one(rep):
        S = ex.scene_for(m, cfg.seed, rep)
        Z = ex.auxiliary(m, cfg.seed, rep, "Z", m.z_intensity)
        try:
            if m.phase == ex.OCCUPIED:
                res = ex.pivotal_scan_occupied(S, prop, Z, stream(cfg.seed, rep, "pivotal"),
                                               delta=cfg.param("delta", float), samples=cfg.param("samples", int),
                                               r_star=r_star)
            else:
                res = ex.pivotal_scan_vacant(S, prop, Z, Delta=cfg.param("Delta", float), r_star=r_star)
        except InputError:
            return {"seed": rep, "skipped": True, "rows": []}
        rows = [(rep, p.z, float(p.point[0]), float(p.point[1]), p.fraction, p.flipped) for p in res]
        return {"seed": rep, "skipped": False, "rows": rows}

    per = ex.map_replicas(one, _replicas(cfg), cfg.threads)
    rows = [r for p in per for r in p["rows"]]
    done = [p for p in per if not p["skipped"]]
    summary = {"seeds": len(per), "skipped": len(per) - len(done), "scanned": len(rows),
               "pivotal": sum(r[5] for r in rows),
               "pivotal_rate": sum(r[5] for r in rows) / len(rows) if rows else 0.0}
    return ex.ExperimentRecord("pivotal", ex._cfg_dict(m, seed=cfg.seed, property=prop.name),
                               [{"seed": p["seed"], "skipped": p["skipped"], "scanned": len(p["rows"]),
                                 "pivotal": sum(r[5] for r in p["rows"])} for p in per],
                               summary, {"pivotal": (("seed", "z", "x", "y", "fraction", "flipped"), rows)})


def run_experiment(cfg):
    name = _ALIASES.get(cfg.experiment, cfg.experiment)
    cfg = replace(cfg, experiment=name)
    m = cfg.model
    reps = _replicas(cfg)
    if name == "pivotal":
        return _pivotal(cfg)
    if name == "indist":
        strata = tuple(int(x) for x in _floats(cfg.param("strata")))
        return ex.indistinguishability_harness(m, _property(cfg, cfg.param("property")), cfg.seed, reps,
                                               strata=strata, threads=cfg.threads)
    if name == "monotone":
        lam2 = cfg.param("lam2", float, m.intensity)
        lam1 = cfg.param("lam1", float, lam2 / 2)
        ladder = _floats(cfg.param("ladder", str, "")) or None
        return ex.monotonicity_experiment(m, lam1, lam2, cfg.seed, reps, ladder=ladder, threads=cfg.threads)
    if name == "connectivity":
        return ex.connectivity_decay(m, _floats(cfg.param("t_grid")), cfg.seed, reps, threads=cfg.threads)
    if name == "percolation":
        ladder = _floats(cfg.param("ladder", str, "")) or None
        return ex.percolation_experiment(m, _floats(cfg.param("lam_grid")), cfg.seed, reps,
                                         ladder=ladder, threads=cfg.threads)
    if name == "transience":
        return ex.transience_experiment(m, cfg.seed, reps, threads=cfg.threads,
                                        trials=cfg.param("trials", int), step_cap=cfg.param("step_cap", int))
    raise ConfigError(f"unknown experiment {cfg.experiment!r}; choose from {', '.join(EXPERIMENTS)}")


def cmd_experiment(cfg, art):
    rec = run_experiment(cfg)
    art.write("record.json", rec.to_json())
    art.write("per_seed.jsonl", rec.per_seed_jsonl())
    export_plotdata(rec.tables, art)
    return rec


COMMANDS = {"sample": cmd_sample, "scene": cmd_scene, "forest": cmd_forest, "walk": cmd_walk,
            "experiment": cmd_experiment}


def run(cfg, command, out=None):
    """Run one command; returns the manifest path."""
    cfg.model.validate()
    art = Artifacts(out or cfg.out)
    art.write("config.ini", cfg.to_text(run_fields=False))
    COMMANDS[command](cfg, art)
    return art.manifest(command, cfg)


def build_parser():
    p = argparse.ArgumentParser(prog="boolperc", description="Boolean model simulation laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--out")

    for name in ("sample", "scene", "forest", "walk"):
        common(sub.add_parser(name))
    e = sub.add_parser("experiment")
    e.add_argument("name", choices=EXPERIMENTS + tuple(_ALIASES))
    common(e)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        for k in ("seed", "replicas", "threads", "out"):
            v = getattr(args, k)
            if v is not None:
                setattr(cfg, k, v)
        if cfg.replicas < 1 or cfg.threads < 1:
            raise ConfigError("replicas and threads must be at least 1")
        if args.command == "experiment":
            cfg.experiment = _ALIASES.get(args.name, args.name)
        path = run(cfg, args.command)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except InvariantViolation as e:
        print(f"invariant violated: {e.invariant}: {e}", file=sys.stderr)
        return 3
    except InputError as e:
        print(f"input error: {e}", file=sys.stderr)
        return 4
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
