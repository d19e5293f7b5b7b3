"""Command-line drivers: single solves, temperature and (U, mu) scans, diagnostics, exact references.

Every command reads an optional JSON config, applies flag overrides, and
writes JSON (``solve``) or CSV (everything else) to stdout or ``--out``.
Exit codes: 0 ok, 2 bad config, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from qvqt.diagnostics import MULTISEED_COLUMNS, VARIANCE_COLUMNS, multi_seed_study, variance_rows
from qvqt.engine import NumericalError, adaptive_layer_solve, hubbard_reference, solve
from qvqt.hubbard import ORACLE_QUBIT_CAP, HubbardConfig, build_hamiltonian, occupation_counts
from qvqt.pauli import ResourceError, to_dense_matrix
from qvqt.thermal import ground_state_expectations

log = logging.getLogger("qvqt")

EXIT_CONFIG, EXIT_NUMERIC = 2, 3

DEFAULTS = {
    "sites": 2,
    "t": 1.0,
    "u": 0.8,
    "mu": 0.2,
    "boundary": "periodic",
    "beta": 1.0,
    "beta_grid": None,
    "layers1": 4,
    "layers2": 4,
    "adaptive": False,
    "fidelity_target": 0.9,
    "max_layers": 5,
    "mode": "exact",
    "shots": None,
    "seed": None,
    "init": None,
    "optimizer_budget": 500,
    # command-specific extensions
    "restarts": 1,
    "u_grid": None,
    "mu_grid": None,
    "site_range": None,
    "layer_range": [1, 2, 3, 4],
    "samples": 500,
    "n_seeds": 10,
    "variance_mode": "free_energy",
}

RESULT_FIELDS = (
    "beta", "U", "mu", "t", "n_sites", "boundary", "F", "E", "S", "number_density",
    "fidelity", "layers1", "layers2", "iterations", "seed", "mode", "shots",
)
SCAN_BETA_COLUMNS = (
    "beta", "F_rec", "F_exact", "E_rec", "E_exact", "S_rec", "S_exact", "n_rec", "n_exact",
    "fidelity", "layers1", "layers2", "iterations", "seed", "E_ground", "n_ground",
)
SCAN_UMU_COLUMNS = ("U", "mu", "beta", "n_rec", "n_exact", "abs_error", "fidelity", "F_rec", "F_exact", "iterations", "seed")
ED_COLUMNS = ("beta", "F", "E", "S", "number_density")

DEFAULT_BETA_GRID = np.geomspace(0.05, 35.0, 25).tolist()
DEFAULT_UMU_GRID = np.linspace(0.1, 1.0, 10).tolist()


class ConfigError(ValueError):
    pass


def _int(value, key, low=None):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    if low is not None and value < low:
        raise ConfigError(f"{key} must be >= {low}")
    return int(value)


def _float(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        raise ConfigError(f"{key} must be a finite number, got {value!r}")
    return float(value)


def _float_list(value, key, increasing=False, nonnegative=False):
    if value is None:
        return None
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{key} must be a list")
    out = [_float(v, key) for v in value]
    if not out:
        raise ConfigError(f"{key} is empty")
    if increasing and any(b <= a for a, b in zip(out, out[1:])):
        raise ConfigError(f"{key} must be strictly increasing")
    if nonnegative and min(out) < 0:
        raise ConfigError(f"{key} values must be >= 0")
    return out


def parse_config(raw: dict) -> dict:
    """Validate and normalise a config mapping; unknown keys are rejected."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = {**DEFAULTS, **raw}
    cfg["sites"] = _int(cfg["sites"], "sites", 1)
    for key in ("t", "u", "mu", "beta", "fidelity_target"):
        cfg[key] = _float(cfg[key], key)
    if cfg["beta"] <= 0:
        raise ConfigError("beta must be positive")
    if cfg["boundary"] not in ("open", "periodic"):
        raise ConfigError("boundary must be 'open' or 'periodic'")
    cfg["beta_grid"] = _float_list(cfg["beta_grid"], "beta_grid", increasing=True)
    if cfg["beta_grid"] is not None and min(cfg["beta_grid"]) <= 0:
        raise ConfigError("beta_grid values must be positive")
    cfg["u_grid"] = _float_list(cfg["u_grid"], "u_grid", nonnegative=True)
    cfg["mu_grid"] = _float_list(cfg["mu_grid"], "mu_grid", nonnegative=True)
    for key in ("layers1", "layers2", "max_layers", "optimizer_budget", "restarts", "samples"):
        cfg[key] = _int(cfg[key], key, 1)
    cfg["n_seeds"] = _int(cfg["n_seeds"], "n_seeds", 2)
    if not isinstance(cfg["adaptive"], bool):
        raise ConfigError("adaptive must be true or false")
    if cfg["mode"] not in ("exact", "shots"):
        raise ConfigError("mode must be 'exact' or 'shots'")
    if cfg["shots"] is not None:
        cfg["shots"] = _int(cfg["shots"], "shots", 1)
    if cfg["mode"] == "shots" and cfg["shots"] is None:
        raise ConfigError("shots mode needs a shot count")
    if cfg["seed"] is not None:
        cfg["seed"] = _int(cfg["seed"], "seed", 0)
    if cfg["init"] not in (None, "gaussian", "uniform"):
        raise ConfigError("init must be 'gaussian' or 'uniform'")
    if cfg["variance_mode"] not in ("free_energy", "gradient"):
        raise ConfigError("variance_mode must be 'free_energy' or 'gradient'")
    for key in ("site_range", "layer_range"):
        if cfg[key] is not None:
            if not isinstance(cfg[key], (list, tuple)) or not cfg[key]:
                raise ConfigError(f"{key} must be a non-empty list")
            cfg[key] = [_int(v, key, 1) for v in cfg[key]]
    try:
        for n in cfg["site_range"] or [cfg["sites"]]:
            hubbard(cfg, n_sites=n)
        hubbard(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def serialize_config(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, indent=2)


def hubbard(cfg: dict, **overrides) -> HubbardConfig:
    values = {"n_sites": cfg["sites"], "t": cfg["t"], "u": cfg["u"], "mu": cfg["mu"], "boundary": cfg["boundary"]}
    values.update(overrides)
    return HubbardConfig(**values)


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


class CsvWriter:
    """Header-first CSV with 17-significant-digit floats, flushed row by row."""

    def __init__(self, stream, columns):
        self.stream, self.columns = stream, tuple(columns)
        stream.write(",".join(self.columns) + "\n")
        stream.flush()

    def row(self, record: dict):
        self.stream.write(",".join(format_value(record.get(c)) for c in self.columns) + "\n")
        self.stream.flush()


# Workers are module-level so a process pool can pickle them.


@dataclass(frozen=True)
class Cell:
    beta: float
    u: float
    mu: float


def run_cell(cfg: dict, cell: Cell) -> dict:
    """One optimisation at ``cell``; returns the result record and the exact reference."""
    config = hubbard(cfg, u=cell.u, mu=cell.mu)
    reference = hubbard_reference(config, cell.beta) if config.n_qubits <= ORACLE_QUBIT_CAP else None
    seed = cfg["seed"]
    init = cfg["init"] or "gaussian"
    if cfg["adaptive"]:
        result = adaptive_layer_solve(
            config, cell.beta, cfg["fidelity_target"], cfg["max_layers"], init, seed, cfg["optimizer_budget"]
        )
    else:
        seeds = [seed + k for k in range(cfg["restarts"])]
        result = solve(
            config, cell.beta, cfg["layers1"], cfg["layers2"], seeds, init, cfg["optimizer_budget"],
            cfg["mode"], cfg["shots"], reference,
        )
    record = {
        "beta": cell.beta, "U": cell.u, "mu": cell.mu, "t": config.t, "n_sites": config.n_sites,
        "boundary": config.boundary, "F": result.F, "E": result.E, "S": result.S,
        "number_density": result.number_density, "fidelity": result.fidelity,
        "layers1": result.layers1, "layers2": result.layers2, "iterations": result.iterations,
        "seed": seed, "mode": cfg["mode"], "shots": cfg["shots"],
    }
    exact = None
    if reference is not None:
        exact = {"F": reference.free_energy, "E": reference.energy, "S": reference.entropy, "n": reference.number_density}
    return {"record": {k: _plain(v) for k, v in record.items()}, "exact": exact}


def _plain(value):
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def _map(fn, cfg, cells, jobs):
    """Results in input order; a pool when ``jobs > 1``."""
    if jobs <= 1:
        for cell in cells:
            yield fn(cfg, cell)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        yield from pool.map(fn, [cfg] * len(cells), cells)


def cmd_solve(cfg, args, out):
    result = run_cell(cfg, Cell(cfg["beta"], cfg["u"], cfg["mu"]))["record"]
    out.write(json.dumps({k: result[k] for k in RESULT_FIELDS}, indent=2) + "\n")


def _beta_grid(cfg):
    return cfg["beta_grid"] if cfg["beta_grid"] is not None else DEFAULT_BETA_GRID


def cmd_scan_beta(cfg, args, out):
    config = hubbard(cfg)
    e_ground = n_ground = None
    if config.n_qubits <= ORACLE_QUBIT_CAP:
        h = to_dense_matrix(build_hamiltonian(config))
        e_ground, n_ground = ground_state_expectations(h, occupation_counts(config.n_qubits), config.n_sites)
    writer = CsvWriter(out, SCAN_BETA_COLUMNS)
    cells = [Cell(b, cfg["u"], cfg["mu"]) for b in _beta_grid(cfg)]
    for res in _map(run_cell, cfg, cells, args.jobs):
        r, ex = res["record"], res["exact"] or {}
        writer.row({
            "beta": r["beta"], "F_rec": r["F"], "F_exact": ex.get("F"), "E_rec": r["E"], "E_exact": ex.get("E"),
            "S_rec": r["S"], "S_exact": ex.get("S"), "n_rec": r["number_density"], "n_exact": ex.get("n"),
            "fidelity": r["fidelity"], "layers1": r["layers1"], "layers2": r["layers2"],
            "iterations": r["iterations"], "seed": r["seed"], "E_ground": e_ground, "n_ground": n_ground,
        })


def cmd_scan_umu(cfg, args, out):
    us = cfg["u_grid"] if cfg["u_grid"] is not None else DEFAULT_UMU_GRID
    mus = cfg["mu_grid"] if cfg["mu_grid"] is not None else DEFAULT_UMU_GRID
    writer = CsvWriter(out, SCAN_UMU_COLUMNS)
    cells = [Cell(cfg["beta"], u, mu) for u in us for mu in mus]
    for res in _map(run_cell, cfg, cells, args.jobs):
        r, ex = res["record"], res["exact"] or {}
        n_exact = ex.get("n")
        writer.row({
            "U": r["U"], "mu": r["mu"], "beta": r["beta"], "n_rec": r["number_density"], "n_exact": n_exact,
            "abs_error": None if n_exact is None else abs(r["number_density"] - n_exact),
            "fidelity": r["fidelity"], "F_rec": r["F"], "F_exact": ex.get("F"),
            "iterations": r["iterations"], "seed": r["seed"],
        })


def _variance_cell(cfg, n_sites):
    config = hubbard(cfg, n_sites=n_sites)
    return variance_rows(config, cfg["layer_range"], cfg["samples"], cfg["seed"], cfg["beta"], cfg["variance_mode"])


def cmd_variance(cfg, args, out):
    writer = CsvWriter(out, VARIANCE_COLUMNS)
    for rows in _map(_variance_cell, cfg, cfg["site_range"] or [cfg["sites"]], args.jobs):
        for row in rows:
            writer.row(row)


def _multiseed_cell(cfg, beta):
    study = multi_seed_study(
        hubbard(cfg), [beta], cfg["n_seeds"], cfg["seed"], cfg["layers1"], cfg["layers2"],
        cfg["init"] or "uniform", cfg["optimizer_budget"],
    )[0]
    return study.rows(), study.unconverged


def cmd_multiseed(cfg, args, out):
    writer = CsvWriter(out, MULTISEED_COLUMNS)
    grid = cfg["beta_grid"] or [cfg["beta"]]
    for beta, (rows, unconverged) in zip(grid, _map(_multiseed_cell, cfg, grid, args.jobs)):
        if unconverged:
            log.warning("beta=%s: %d of %d seeds exhausted the budget", beta, len(unconverged), cfg["n_seeds"])
        for row in rows:
            writer.row(row)


def cmd_ed(cfg, args, out):
    config = hubbard(cfg)
    writer = CsvWriter(out, ED_COLUMNS)
    for beta in _beta_grid(cfg):
        ref = hubbard_reference(config, beta)
        writer.row({"beta": beta, "F": ref.free_energy, "E": ref.energy, "S": ref.entropy, "number_density": ref.number_density})


COMMANDS = {
    "solve": cmd_solve,
    "scan-beta": cmd_scan_beta,
    "scan-umu": cmd_scan_umu,
    "variance": cmd_variance,
    "multiseed": cmd_multiseed,
    "ed": cmd_ed,
}


def _csv_floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _csv_ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


# flag name -> (config key, parser)
OVERRIDES = {
    "sites": ("sites", int), "t": ("t", float), "u": ("u", float), "mu": ("mu", float),
    "boundary": ("boundary", str), "beta": ("beta", float), "beta_grid": ("beta_grid", _csv_floats),
    "layers1": ("layers1", int), "layers2": ("layers2", int), "fidelity_target": ("fidelity_target", float),
    "max_layers": ("max_layers", int), "mode": ("mode", str), "shots": ("shots", int), "seed": ("seed", int),
    "init": ("init", str), "budget": ("optimizer_budget", int), "restarts": ("restarts", int),
    "u_grid": ("u_grid", _csv_floats), "mu_grid": ("mu_grid", _csv_floats), "site_range": ("site_range", _csv_ints),
    "layer_range": ("layer_range", _csv_ints), "samples": ("samples", int), "n_seeds": ("n_seeds", int),
    "variance_mode": ("variance_mode", str),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qvqt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="write output here instead of stdout")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for scan cells")
        p.add_argument("--dump-config", help="write the resolved config (with its seed) to this file")
        p.add_argument("--adaptive", action="store_true", default=None, help="grow layers until the fidelity target is met")
        p.add_argument("-v", "--verbose", action="store_true")
        for flag in OVERRIDES:
            p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=str, default=None)
    return parser


def resolve_config(args) -> dict:
    raw = {}
    if args.config:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    for flag, (key, conv) in OVERRIDES.items():
        text = getattr(args, flag)
        if text is None:
            continue
        try:
            raw[key] = conv(text)
        except ValueError as exc:
            raise ConfigError(f"--{flag.replace('_', '-')}: {exc}") from exc
    if args.adaptive:
        raw["adaptive"] = True
    cfg = parse_config(raw)
    if cfg["seed"] is None:
        cfg["seed"] = secrets.randbits(31)
        print(f"no seed given; using {cfg['seed']}", file=sys.stderr)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr, format="%(message)s")
    try:
        cfg = resolve_config(args)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.dump_config:
            with open(args.dump_config, "w") as fh:
                fh.write(serialize_config(cfg) + "\n")
        out = open(args.out, "w") if args.out else sys.stdout
        try:
            COMMANDS[args.command](cfg, args, out)
        finally:
            if args.out:
                out.close()
    except (ConfigError, ResourceError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except KeyboardInterrupt:
        print("interrupted; rows written so far are complete", file=sys.stderr)
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
