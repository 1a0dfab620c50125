"""Command-line runner: ``eotlab run`` and ``eotlab presets``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import platform
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .instances import PRESET_TARGETS, PRESETS, make_instance
from .rates import (TOLERANCE_TABLE_VERSION, TOLERANCES, SweepError, SweepOptions, all_fits,
                    run_sweep, theorem_verdicts)

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

CSV_COLUMNS = ["eps", "ot_eps", "cost_term", "plan_entropy", "suboptimality", "c_eps",
               "w2_to_opt", "envelope_residual", "h_m", "converged", "iterations",
               "w2_truncated_mass", "error"]

PRESET_NAMES = list(PRESETS) + ["custom"]

# key -> parser; "tolerance.<claim>" keys are handled separately
CONFIG_KEYS = {
    "preset": str,
    "resolution": int,
    "eps_list": lambda s: [float(v) for v in s.replace(",", " ").split()],
    "seed": int,
    "output_dir": str,
    "compute_w2": lambda s: _parse_bool(s),
    "w2_atom_budget": int,
    "max_iter": int,
    "envelope": lambda s: _parse_bool(s),
    "geometry": lambda s: _parse_bool(s),
    "mean0": float,
    "var0": float,
    "mean1": float,
    "var1": float,
}
CUSTOM_KEYS = ("mean0", "var0", "mean1", "var1")


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


@dataclass
class ExperimentConfig:
    preset: str
    resolution: int | None = None
    eps_list: list | None = None
    seed: int = 0
    tolerance_overrides: dict = field(default_factory=dict)
    output_dir: str | None = None
    compute_w2: bool | None = None
    w2_atom_budget: int | None = None
    max_iter: int = 100_000
    envelope: bool = True
    geometry: bool = True
    custom: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.preset not in PRESET_NAMES:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {PRESET_NAMES}")
        if self.resolution is not None:
            r = self.resolution
            if r < 64 or r > 4096 or r & (r - 1):
                raise ConfigError(f"resolution must be a power of two in [64, 4096], got {r}")
            if self.preset == "gaussian2d" and math.isqrt(r) ** 2 != r:
                raise ConfigError(f"gaussian2d needs a square node count, got {r}")
        if self.eps_list is not None:
            e = self.eps_list
            if len(e) < 3:
                raise ConfigError(f"eps_list needs at least 3 values, got {len(e)}")
            if any(not (v > 0 and math.isfinite(v)) for v in e):
                raise ConfigError("eps_list values must be positive")
            if any(b >= a for a, b in zip(e, e[1:])):
                raise ConfigError("eps_list must be strictly decreasing")
        if self.custom and self.preset != "custom":
            raise ConfigError(f"keys {sorted(self.custom)} only apply to the custom preset")
        unknown = set(self.tolerance_overrides) - set(TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
        if self.w2_atom_budget is not None and self.w2_atom_budget < 1:
            raise ConfigError("w2_atom_budget must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be positive")


def parse_config_text(text: str, allow_tolerance_override: bool = False) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    out: dict = {}
    tol: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key.startswith("tolerance."):
            if not allow_tolerance_override:
                raise ConfigError(f"line {lineno}: tolerance overrides need --allow-tolerance-override")
            try:
                tol[key[len("tolerance."):]] = float(value)
            except ValueError:
                raise ConfigError(f"line {lineno}: bad number {value!r}") from None
            continue
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    if tol:
        out["tolerance_overrides"] = tol
    return out


def build_config(args) -> ExperimentConfig:
    values: dict = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        values = parse_config_text(text, args.allow_tolerance_override)
    if args.preset:
        values["preset"] = args.preset
    if "preset" not in values:
        raise ConfigError("no preset given (use --preset or a preset key in the config)")
    for key in ("resolution", "seed"):
        if getattr(args, key) is not None:
            values[key] = getattr(args, key)
    if args.eps:
        values["eps_list"] = list(args.eps)
    if args.out:
        values["output_dir"] = args.out
    if args.tolerance:
        if not args.allow_tolerance_override:
            raise ConfigError("--tolerance needs --allow-tolerance-override")
        tol = values.setdefault("tolerance_overrides", {})
        for item in args.tolerance:
            if "=" not in item:
                raise ConfigError(f"--tolerance expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            try:
                tol[k.strip()] = float(v)
            except ValueError:
                raise ConfigError(f"bad tolerance value {v!r}") from None
    custom = {k: values.pop(k) for k in CUSTOM_KEYS if k in values}
    cfg = ExperimentConfig(custom=custom, **values)
    cfg.validate()
    return cfg


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def sweep_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        d = r.as_dict()
        w.writerow([_fmt(d[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _write_atomic(directory: Path, files: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{name}.")
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, directory / name))
        for tmp, final in staged:
            os.replace(tmp, final)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.remove(tmp)


def _versions() -> dict:
    import numpy
    import scipy
    out = {"eotlab": __version__, "python": platform.python_version(),
           "numpy": numpy.__version__, "scipy": scipy.__version__}
    try:
        from importlib.metadata import version
        out["pot"] = version("pot")
    except Exception:  # metadata lookup is best effort
        out["pot"] = None
    return out


def _thread_cap():
    raw = os.environ.get("EOTLAB_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"EOTLAB_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("EOTLAB_THREADS must be >= 1")
    return n


def execute(cfg: ExperimentConfig, out_dir: Path, log: logging.Logger) -> int:
    t0 = time.perf_counter()
    inst = make_instance(cfg.preset, cfg.resolution, **cfg.custom)
    opts = SweepOptions(compute_w2=cfg.compute_w2, w2_atom_budget=cfg.w2_atom_budget,
                        envelope=cfg.envelope, geometry=cfg.geometry, seed=cfg.seed,
                        max_iter=cfg.max_iter)
    try:
        sweep = run_sweep(inst, cfg.eps_list, opts)
    except SweepError as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    t_sweep = time.perf_counter() - t0
    report = theorem_verdicts(sweep, all_fits(sweep), tolerances=cfg.tolerance_overrides,
                              instance=inst)
    failed = [r for r in sweep.records if not r.converged]
    meta = {
        "preset": cfg.preset,
        "instance": inst.label,
        "hypothesis": inst.hypothesis,
        "resolution": cfg.resolution,
        "eps_list": [r.eps for r in sweep.records],
        "seed": cfg.seed,
        "tolerance_table_version": TOLERANCE_TABLE_VERSION,
        "tolerance_overrides": cfg.tolerance_overrides,
        "versions": _versions(),
        "threads": os.environ.get("EOTLAB_THREADS"),
        "wall_seconds": {"sweep": t_sweep, "total": time.perf_counter() - t0,
                         "per_eps": [dg.get("seconds") for dg in sweep.diagnostics]},
        "ot0": sweep.ot0,
        "h_m": sweep.h_m,
        "failed_eps": [r.eps for r in failed],
    }
    _write_atomic(out_dir, {"sweep.csv": sweep_csv(sweep.records),
                            "verdicts.json": report.to_json() + "\n",
                            "run_meta.json": json.dumps(meta, indent=2, default=str) + "\n"})
    for v in report.verdicts:
        status = {True: "PASS", False: "FAIL", None: "INFO"}[v.passed]
        log.info("%-5s %-28s measured=%s target=%s", status, v.claim_id, _fmt(v.measured), v.target)
    if failed:
        log.error("solver failed at eps = %s", [r.eps for r in failed])
        return EXIT_SOLVER
    return EXIT_OK if report.passed else EXIT_VERDICT


def cmd_run(args) -> int:
    log = logging.getLogger("eotlab")
    try:
        cfg = build_config(args)
        threads = _thread_cap()
    except ConfigError as exc:
        print(f"eotlab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(cfg.output_dir or os.path.join("eotlab_out", cfg.preset))
    if threads is None:
        return execute(cfg, out_dir, log)
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=threads):
        return execute(cfg, out_dir, log)


def preset_table() -> list[dict]:
    rows = []
    for name in PRESET_NAMES:
        tag, target = PRESET_TARGETS[name]
        if name == "custom":
            rows.append({"preset": name, "hypothesis": tag, "cost": "quadratic", "dim": 1,
                         "eps_list": None, "target": target})
            continue
        inst = PRESETS[name]()
        rows.append({"preset": name, "hypothesis": tag, "cost": inst.cost.label, "dim": inst.dim,
                     "eps_list": list(inst.eps_list), "target": target})
    return rows


def cmd_presets(args) -> int:
    rows = preset_table()
    if args.json:
        print(json.dumps(rows, indent=2))
        return EXIT_OK
    print(f"{'preset':<20}{'hypothesis':<14}{'cost':<11}target")
    for r in rows:
        print(f"{r['preset']:<20}{r['hypothesis']:<14}{r['cost']:<11}{r['target']}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eotlab", description="Entropic transport rate experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an eps sweep and write CSV/JSON reports")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="flat key = value config file")
    src.add_argument("--preset", help=f"one of {', '.join(PRESET_NAMES)}")
    run.add_argument("--eps", type=float, nargs="+", help="strictly decreasing eps values")
    run.add_argument("--resolution", type=int, help="nodes per marginal (power of two, 64..4096)")
    run.add_argument("--seed", type=int, help="seed for sampled inequality checks")
    run.add_argument("--out", help="output directory (default eotlab_out/<preset>)")
    run.add_argument("--tolerance", action="append", metavar="KEY=VALUE",
                     help="override one verdict tolerance (needs --allow-tolerance-override)")
    run.add_argument("--allow-tolerance-override", action="store_true",
                     help="permit tolerance overrides from the config or --tolerance")
    run.set_defaults(func=cmd_run)

    pr = sub.add_parser("presets", help="list presets and their targets")
    pr.add_argument("--json", action="store_true", help="machine-readable output")
    pr.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, matching the config-error code
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
