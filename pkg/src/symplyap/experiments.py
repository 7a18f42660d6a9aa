"""Experiment orchestration: parameter validation, seeded tasks, outputs, manifests."""
from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, rng
from .box import DEFAULT_POINTS_PER_CELL, BoxOperator
from .config import MODEL_KEYS, ParsedConfig, parse_value
from .errors import ConfigError
from .ids import IDSCurve
from .lyapunov import large_deviation_probe, lyapunov_spectrum, negative_moment_probe
from .model import energy_window
from .probes import eigenfunction_decay, good_box_probe, wegner_probe
from .symplectic import HamiltonianMatrix, lie_closure

CSV_DIGITS = 12
PROVENANCE = ("seed", "L", "h", "N", "ell")


def fmt(v):
    """CSV cell: 12 significant digits for floats, plain text otherwise."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return format(v, f".{CSV_DIGITS}g")
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) for v in r) + "\n")


def write_dat(path, comment_lines, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in comment_lines:
            fh.write(f"# {c}\n")
        for r in rows:
            fh.write(" ".join(fmt(v) for v in r) + "\n")


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def parallel_map(fn, items, threads=1):
    """``[fn(x) for x in items]`` computed by up to ``threads`` worker processes.

    Results come back in input order, so merging is independent of scheduling.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# command parameter schemas: name -> (kind, default); a default of None means
# "derived from the model" (usually the window centre)
COMMANDS = {
    "window": {},
    "lie-check": {"n_max": ("int", 4), "energy": ("float", 0.0)},
    "lyapunov-sweep": {
        "energies": ("floats", None), "n_energies": ("int", 5), "n_steps": ("int", 100_000),
        "reorth_every": ("int", 1), "batches": ("int", 50),
    },
    "ids": {
        "e_min": ("float", None), "e_max": ("float", None), "n_energies": ("int", 50),
        "half_cells": ("int", 16), "points_per_cell": ("int", DEFAULT_POINTS_PER_CELL),
        "trials": ("int", 4),
    },
    "wegner": {
        "half_cells": ("ints", [8, 16, 32]), "kappa": ("float", 1.0), "beta": ("float", 0.5),
        "energy": ("float", None), "trials": ("int", 400),
        "points_per_cell": ("int", DEFAULT_POINTS_PER_CELL),
    },
    "good-box": {
        "half_cells": ("ints", [12, 24, 48]), "gamma": ("float", None),
        "gamma_factor": ("float", 0.5), "energy": ("float", None), "trials": ("int", 400),
        "lyapunov_steps": ("int", 200_000), "points_per_cell": ("int", DEFAULT_POINTS_PER_CELL),
    },
    "decay": {
        "half_cells": ("int", 64), "energy": ("float", None), "window_radius": ("float", 0.5),
        "trials": ("int", 1), "lyapunov_steps": ("int", 200_000),
        "points_per_cell": ("int", DEFAULT_POINTS_PER_CELL),
    },
    "probes": {
        "n_values": ("ints", [50, 100, 200]), "eps": ("float", 0.05), "p": ("int", 1),
        "delta": ("float", 0.5), "energy": ("float", None), "trials": ("int", 400),
        "lyapunov_steps": ("int", 200_000),
    },
}


@dataclass(frozen=True)
class ExperimentSpec:
    command: str
    model: dict
    params: dict
    out_dir: str
    master_seed: int
    threads: int = 1

    def model_config(self):
        return ParsedConfig(dict(self.model)).model_config()


def resolve_spec(command, parsed, out_dir, seed=None, trials=None, threads=1, overrides=None):
    """Validate everything up front and fill parameter defaults."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}", "command")
    schema = COMMANDS[command]
    raw = dict(parsed.params)
    raw.update(overrides or {})
    params = {}
    for key, text in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown parameter {key!r} for {command}", key)
        kind = schema[key][0]
        params[key] = parse_value(key, text, kind) if isinstance(text, str) else text
    if trials is not None:
        if "trials" not in schema:
            raise ConfigError(f"{command} takes no trial count", "trials")
        params["trials"] = int(trials)
    model = {k: v for k, v in parsed.model.items() if k != "seed"}
    cfg = ParsedConfig(dict(model)).model_config()
    window = energy_window(cfg)
    for key, (kind, default) in schema.items():
        if key in params:
            continue
        if default is None:
            if key == "energy":
                default = window.center
            elif key == "e_min":
                default = max(window.lower, window.lambda_min - 1.0)
            elif key == "e_max":
                default = window.upper
            else:
                continue
        params[key] = default
    for key in ("trials", "n_steps", "n_energies", "batches", "half_cells", "n_max"):
        v = params.get(key)
        vals = v if isinstance(v, list) else [v]
        if v is not None and any(x < 1 for x in vals):
            raise ConfigError(f"{key} must be >= 1", key)
    master = parsed.seed if seed is None else seed
    return ExperimentSpec(command, model, params, str(out_dir), int(master) & ((1 << 64) - 1),
                          int(threads))


# ---------------------------------------------------------------- tasks

def _task_seed(spec, index):
    return rng.derive_seed(spec.master_seed, spec.command, index)


def _tasks(spec, cfg):
    p = spec.params
    c = spec.command
    if c == "window":
        return [None]
    if c == "lie-check":
        return list(range(1, p["n_max"] + 1))
    if c == "lyapunov-sweep":
        es = p.get("energies") or list(energy_window(cfg).grid(p["n_energies"]))
        return [float(e) for e in es]
    if c == "ids":
        return list(range(p["trials"]))
    if c in ("wegner", "good-box"):
        return list(p["half_cells"])
    if c == "decay":
        return list(range(p["trials"]))
    if c == "probes":
        return list(p["n_values"])
    raise AssertionError(c)


def _lie_generators(n, energy):
    from itertools import product
    v0 = np.eye(n, k=1) + np.eye(n, k=-1)
    return [HamiltonianMatrix.from_block(v0 + np.diag(w) - energy * np.eye(n)).entries
            for w in product((0.0, 1.0), repeat=n)]


def _shared(spec, cfg):
    """Quantities every task needs, computed once from the master seed."""
    p = spec.params
    if spec.command == "good-box" and p.get("gamma") is None:
        s = lyapunov_spectrum(cfg, p["energy"], p["lyapunov_steps"],
                              rng.derive_seed(spec.master_seed, spec.command, "gamma"))
        return {"gamma_1": float(s.gamma[0]), "gamma": p["gamma_factor"] * float(s.gamma[0])}
    if spec.command == "good-box":
        return {"gamma": p["gamma"]}
    if spec.command in ("decay", "probes"):
        s = lyapunov_spectrum(cfg, p["energy"], p["lyapunov_steps"],
                              rng.derive_seed(spec.master_seed, spec.command, "gamma"))
        n = cfg.n_channels
        return {"gamma": [float(g) for g in s.gamma[:n]]}
    return {}


def run_task(args):
    """Execute one task; module-level so it can be shipped to worker processes."""
    spec, cfg, shared, index, item = args
    seed = _task_seed(spec, index)
    p = spec.params
    c = spec.command
    try:
        if c == "window":
            w = energy_window(cfg)
            out = {"window": w}
        elif c == "lie-check":
            dim = lie_closure(_lie_generators(item, p["energy"])).dim
            out = {"N": item, "dim": dim, "expected": item * (2 * item + 1)}
        elif c == "lyapunov-sweep":
            s = lyapunov_spectrum(cfg, item, p["n_steps"], seed, reorth_every=p["reorth_every"],
                                  n_batches=p["batches"])
            out = {"rows": s.rows(), "symmetric": s.symmetric()}
        elif c == "ids":
            box = BoxOperator.sample(cfg, p["half_cells"], seed, "ids",
                                     points_per_cell=p["points_per_cell"])
            e = np.linspace(p["e_min"], p["e_max"], p["n_energies"])
            out = {"values": box.count_eigenvalues_below(e) / box.length, "h": box.mesh}
        elif c == "wegner":
            r = wegner_probe(cfg, p["energy"], item, p["kappa"], p["beta"], p["trials"], seed,
                             points_per_cell=p["points_per_cell"])
            out = {"report": r}
        elif c == "good-box":
            r = good_box_probe(cfg, p["energy"], shared["gamma"], item, p["trials"], seed,
                               points_per_cell=p["points_per_cell"])
            out = {"report": r}
        elif c == "decay":
            box = BoxOperator.sample(cfg, p["half_cells"], seed, "decay",
                                     points_per_cell=p["points_per_cell"])
            g = shared["gamma"]
            fit = eigenfunction_decay(box, p["energy"], p["window_radius"],
                                      gammas={"gamma_1": g[0], "gamma_N": g[-1]})
            out = {"fit": fit, "h": box.mesh}
        elif c == "probes":
            gsum = float(sum(shared["gamma"][: p["p"]]))
            ld = large_deviation_probe(cfg, p["energy"], p["p"], item, p["eps"], p["trials"],
                                       seed, gamma_sum=gsum)
            nm = negative_moment_probe(cfg, p["energy"], p["p"], p["delta"], item, p["trials"],
                                       rng.derive_seed(seed, "moment"))
            out = {"ld": ld, "nm": nm}
        else:
            raise AssertionError(c)
        return {"index": index, "seed": seed, "status": "ok", "result": out}
    except Exception as exc:  # a failed task is recorded, the run continues
        return {"index": index, "seed": seed, "status": "failed",
                "error": f"{type(exc).__name__}: {exc}", "result": None}


# ---------------------------------------------------------------- outputs

def _prov(spec, cfg, seed, half_cells=None, h=None):
    return [seed, half_cells, h, cfg.n_channels, cfg.cell_length]


def _write_outputs(spec, cfg, shared, tasks, results):
    """Write CSV/JSON/plot files; returns the list of file names and printable lines."""
    out = spec.out_dir
    ok = [r for r in results if r["status"] == "ok"]
    files, lines = [], []
    c = spec.command
    p = spec.params

    def path(name):
        files.append(name)
        return os.path.join(out, name)

    if c == "window":
        w = ok[0]["result"]["window"]
        write_csv(path("window.csv"),
                  ["lambda_min", "lambda_max", "delta0", "ell_c", "lower", "upper", "empty",
                   *PROVENANCE],
                  [[w.lambda_min, w.lambda_max, w.delta0, w.ell_c, w.lower, w.upper, w.empty,
                    *_prov(spec, cfg, spec.master_seed)]])
        lines.append(f"window [{fmt(w.lower)}, {fmt(w.upper)}], ell_C = {fmt(w.ell_c)}")
        if w.empty:
            lines.append("window empty (ℓ ≥ ℓ_C)")
    elif c == "lie-check":
        rows = []
        for r in ok:
            d = r["result"]
            status = "PASS" if d["dim"] == d["expected"] else "FAIL"
            rows.append([d["N"], d["dim"], d["expected"], status])
            lines.append(f"{d['N']}, {d['dim']}, {d['expected']}, {status}")
        write_csv(path("lie_check.csv"), ["N", "dim", "expected", "status"], rows)
    elif c == "lyapunov-sweep":
        rows = []
        for r in ok:
            for row in r["result"]["rows"]:
                rows.append([*row[:5], *_prov(spec, cfg, row[5])])
        write_csv(path("lyapunov.csv"), ["E", "i", "gamma", "stderr", "n", *PROVENANCE], rows)
        emit_plotdata(spec, {"rows": rows}, "lyapunov", path)
        lines.append(f"{len(rows)} exponent rows written")
    elif c == "ids":
        vals = np.array([r["result"]["values"] for r in ok])
        e = np.linspace(p["e_min"], p["e_max"], p["n_energies"])
        mean = vals.mean(axis=0)
        err = vals.std(axis=0, ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0 * mean
        h = ok[0]["result"]["h"]
        curve = IDSCurve(e, mean, err, p["half_cells"], len(vals), h)
        rows = [[ei, vi, si, len(vals), *_prov(spec, cfg, spec.master_seed, p["half_cells"], h)]
                for ei, vi, si in zip(e, mean, err)]
        write_csv(path("ids.csv"), ["E", "ids", "stderr", "samples", *PROVENANCE], rows)
        emit_plotdata(spec, {"curve": curve}, "ids", path)
        lines.append(f"IDS on {len(e)} energies from {len(vals)} boxes")
    elif c in ("wegner", "good-box"):
        rows, records = [], []
        for r in ok:
            rep = r["result"]["report"]
            lo, hi = rep.interval
            rows.append([rep.parameters["E"], rep.estimate, lo, hi, rep.trials, rep.successes,
                         *_prov(spec, cfg, r["seed"], rep.parameters["L"], rep.parameters["h"])])
            records.append(rep.to_json() | {"seed": r["seed"]})
            lines.append(f"L={rep.parameters['L']}: p={fmt(rep.estimate)} "
                         f"[{fmt(lo)}, {fmt(hi)}]")
        name = c.replace("-", "_")
        write_csv(path(f"{name}.csv"),
                  ["E", "estimate", "ci_low", "ci_high", "trials", "successes", *PROVENANCE], rows)
        with open(path(f"{name}.json"), "w", encoding="utf-8") as fh:
            json.dump({"shared": shared, "reports": records}, fh, indent=2, sort_keys=True)
        emit_plotdata(spec, {"rows": rows}, "probability", path)
    elif c == "decay":
        rows = []
        for r in ok:
            f = r["result"]["fit"]
            rows.append([p["energy"], f.eigenvalue, f.rate, f.stderr,
                         f.comparisons["gamma_1"], f.comparisons["gamma_N"],
                         *_prov(spec, cfg, r["seed"], p["half_cells"], r["result"]["h"])])
            lines.append(f"m_hat={fmt(f.rate)} +- {fmt(f.stderr)}; gamma_1={fmt(f.comparisons['gamma_1'])}"
                         f", gamma_N={fmt(f.comparisons['gamma_N'])}")
        write_csv(path("decay.csv"),
                  ["E_target", "eigenvalue", "rate", "stderr", "gamma_1", "gamma_N", *PROVENANCE],
                  rows)
        emit_plotdata(spec, {"fits": [(r["index"], r["result"]["fit"]) for r in ok]}, "decay", path)
    elif c == "probes":
        ld_rows, nm_rows, records = [], [], []
        for r in ok:
            ld, nm = r["result"]["ld"], r["result"]["nm"]
            lo, hi = ld.interval
            ld_rows.append([ld.parameters["n"], ld.parameters["eps"], ld.estimate, lo, hi,
                            ld.trials, *_prov(spec, cfg, r["seed"])])
            nm_rows.append([nm.n, nm.delta, nm.log_mean, nm.log_stderr, nm.slope, nm.trials,
                            *_prov(spec, cfg, r["seed"])])
            records.append(ld.to_json() | {"seed": r["seed"]})
            lines.append(f"n={nm.n}: large-deviation p={fmt(ld.estimate)}, "
                         f"log E|x|^-delta={fmt(nm.log_mean)}")
        write_csv(path("large_deviation.csv"),
                  ["n", "eps", "estimate", "ci_low", "ci_high", "trials", *PROVENANCE], ld_rows)
        write_csv(path("negative_moment.csv"),
                  ["n", "delta", "log_mean", "log_stderr", "slope", "trials", *PROVENANCE], nm_rows)
        with open(path("probes.json"), "w", encoding="utf-8") as fh:
            json.dump({"shared": shared, "reports": records}, fh, indent=2, sort_keys=True)
    return files, lines


def emit_plotdata(spec, results, kind, path):
    """Plain-text two-column data files for generic plotting tools."""
    if kind == "lyapunov":
        by_index = {}
        for row in results["rows"]:
            by_index.setdefault(row[1], []).append((row[0], row[2], row[3]))
        for i, pts in sorted(by_index.items()):
            write_dat(path(f"gamma_{i}.dat"), [f"gamma_{i}(E) per unit length", "E gamma stderr"],
                      sorted(pts))
    elif kind == "ids":
        curve = results["curve"]
        if not curve.is_monotone():
            raise ValueError("IDS curve is not monotone")
        write_dat(path("ids.dat"), ["E N(E)"], zip(curve.energies, curve.values))
    elif kind == "probability":
        rows = []
        for r in results["rows"]:
            lp = math.log(r[1]) if r[1] > 0 else float("nan")
            rows.append((r[7], lp))
        write_dat(path(f"{spec.command.replace('-', '_')}_logp.dat"), ["L log(p_hat)"], rows)
    elif kind == "decay":
        for idx, fit in results["fits"]:
            write_dat(path(f"decay_{idx}.dat"),
                      [f"m_hat = {fmt(fit.rate)}", f"gamma_1 = {fmt(fit.comparisons['gamma_1'])}",
                       f"gamma_N = {fmt(fit.comparisons['gamma_N'])}", "x log|1_x psi|"],
                      zip(fit.centers, fit.log_norms))
    else:
        raise ValueError(f"unknown plot kind {kind!r}")


@dataclass
class RunManifest:
    tool_version: str
    command: str
    model: dict
    params: dict
    master_seed: int
    threads: int
    wall_clock: float
    tasks: list = field(default_factory=list)
    files: dict = field(default_factory=dict)
    shared: dict = field(default_factory=dict)

    @property
    def failed(self):
        return any(t["status"] != "ok" for t in self.tasks)

    def to_json(self):
        return {
            "tool": "symplyap", "tool_version": self.tool_version, "command": self.command,
            "model": self.model, "params": self.params, "master_seed": self.master_seed,
            "threads": self.threads, "wall_clock_s": self.wall_clock, "tasks": self.tasks,
            "files": self.files, "shared": self.shared,
        }

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(d["tool_version"], d["command"], d["model"], d["params"], d["master_seed"],
                   d["threads"], d["wall_clock_s"], d["tasks"], d["files"], d.get("shared", {}))


def run(spec):
    """Run an experiment, write its outputs and ``manifest.json``; returns the manifest."""
    os.makedirs(spec.out_dir, exist_ok=True)
    t0 = time.time()
    cfg = spec.model_config()
    shared = _shared(spec, cfg)
    items = _tasks(spec, cfg)
    args = [(spec, cfg, shared, i, item) for i, item in enumerate(items)]
    results = sorted(parallel_map(run_task, args, spec.threads), key=lambda r: r["index"])
    files, lines = [], []
    if any(r["status"] == "ok" for r in results):
        try:
            files, lines = _write_outputs(spec, cfg, shared, items, results)
        except Exception as exc:
            results.append({"index": len(results), "seed": None, "status": "failed",
                            "error": f"output: {type(exc).__name__}: {exc}", "result": None})
    manifest = RunManifest(
        __version__, spec.command, dict(spec.model), _jsonable(spec.params), spec.master_seed,
        spec.threads, time.time() - t0,
        [{"index": r["index"], "seed": r["seed"], "status": r["status"],
          **({"error": r["error"]} if r["status"] != "ok" else {})} for r in results],
        {name: sha256(os.path.join(spec.out_dir, name)) for name in files},
        _jsonable(shared),
    )
    with open(os.path.join(spec.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json(), fh, indent=2, sort_keys=True)
    manifest.lines = lines
    return manifest


def _jsonable(d):
    return json.loads(json.dumps(d, default=lambda o: o.item() if hasattr(o, "item") else list(o)))


def spec_from_manifest(manifest, out_dir, threads=None):
    """Rebuild the exact experiment recorded in a manifest."""
    unknown = set(manifest.model) - set(MODEL_KEYS)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown config key {key!r} in manifest", key)
    return ExperimentSpec(manifest.command, dict(manifest.model), dict(manifest.params),
                          str(out_dir), int(manifest.master_seed),
                          int(threads or manifest.threads))
