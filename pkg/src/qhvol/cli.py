"""Command-line interface: ``qhvol <command> --config FILE [overrides]``.

Every command reads a JSON config; ``--set key=value`` (value parsed as
JSON) and the dedicated flags override its fields.  Outputs carry a
provenance header with the package version and the SHA-256 of the
effective config.  Exit codes: 0 success, 1 failed validation, 2 malformed
config, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import DescriptorError, descriptor_from_json
from .metric import (InvariantError, NoPathError, ResolutionError, ball_growth_curve, qh_distance,
                     write_growth_csv)
from .montecarlo import QhBall, qh_volume_monte_carlo
from .regularity import FitError, fit_Q_from_counts, fit_Q_from_layers, layer_ratio_experiment, porosity_probe
from .special import evaluate
from .whitney import count_generations, decompose, write_counts_csv, write_cubes_csv


class ConfigError(Exception):
    pass


NUMERICAL = (InvariantError, NoPathError, ResolutionError, FitError, ArithmeticError, RuntimeError)


# -- config handling --------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg: dict = {}
    if path:
        try:
            cfg = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        cfg[key.strip()] = _parse_value(value)
    return cfg


# output destinations do not change results, so they are left out of the hash
OUTPUT_KEYS = ("output", "counts_output")


def config_hash(cfg: dict) -> str:
    cfg = {k: v for k, v in cfg.items() if k not in OUTPUT_KEYS}
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def provenance(cfg: dict) -> dict:
    return {"package": "qhvol", "version": __version__, "config_sha256": config_hash(cfg)}


def _need(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config is missing {key!r}")
    return cfg[key]


def _domain(cfg: dict):
    try:
        return descriptor_from_json(_need(cfg, "domain"))
    except (DescriptorError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad domain descriptor: {exc}") from None


def _seed(cfg: dict) -> int:
    seed = cfg.get("seed")
    if seed is None:
        raise ConfigError("this command is stochastic and needs an explicit 'seed'")
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an integer in [0, 2^64)")
    return seed


def _window(cfg: dict):
    w = cfg.get("window")
    if w is None:
        return None
    try:
        lo, hi = (np.asarray(v, dtype=float) for v in w)
    except (TypeError, ValueError):
        raise ConfigError("window must be [[lo...], [hi...]]") from None
    return lo, hi


# -- output -----------------------------------------------------------------

class Output:
    """Collects a command's text outputs, each with a provenance header."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.files: list[tuple[str | None, str]] = []

    def json(self, doc: dict, path: str | None) -> None:
        doc = {"provenance": provenance(self.cfg), **doc}
        self.files.append((path, json.dumps(doc, indent=2, sort_keys=False) + "\n"))

    def csv(self, writer, path: str | None) -> None:
        buf = io.StringIO()
        p = provenance(self.cfg)
        buf.write(f"# {p['package']} {p['version']} config_sha256={p['config_sha256']}\n")
        writer(buf)
        self.files.append((path, buf.getvalue()))

    def flush(self, stdout) -> None:
        for path, text in self.files:
            if path is None:
                stdout.write(text)
            else:
                Path(path).parent.mkdir(parents=True, exist_ok=True)
                Path(path).write_text(text, encoding="utf-8")


# -- commands ---------------------------------------------------------------

def cmd_decompose(cfg, out, args):
    E = _domain(cfg)
    dec = decompose(E, _window(cfg), int(cfg.get("k_min", 0)), int(_need(cfg, "k_max")))
    out.csv(lambda fh: write_cubes_csv(dec, fh), cfg.get("output"))
    out.csv(lambda fh: write_counts_csv(count_generations(dec), fh), cfg.get("counts_output"))


def cmd_fit_q(cfg, out, args):
    E = _domain(cfg)
    estimator = cfg.get("estimator", "counts")
    if estimator == "counts":
        dec = decompose(E, _window(cfg), int(cfg.get("k_min", 0)), int(_need(cfg, "k_max")))
        fit = fit_Q_from_counts(count_generations(dec), cfg.get("k_lo"), cfg.get("k_hi"))
    elif estimator == "layers":
        fit = fit_Q_from_layers(E, _need(cfg, "r_grid"), cfg.get("k_grid"))
    else:
        raise ConfigError(f"unknown estimator {estimator!r}")
    doc = fit.to_json()
    if "Q_expected" in cfg:
        tol = float(cfg.get("tolerance", 0.05))
        doc["verdicts"] = [{"check": f"|Q_hat - {cfg['Q_expected']}| <= {tol}",
                            "pass": abs(fit.Q_hat - float(cfg["Q_expected"])) <= tol}]
    out.json(doc, cfg.get("output"))


def cmd_qdist(cfg, out, args):
    E = _domain(cfg)
    rep = qh_distance(E, _need(cfg, "x"), _need(cfg, "y"), int(_need(cfg, "k_max")),
                      refine=int(cfg.get("refine", 1)), window=_window(cfg))
    out.json(rep.to_json(), cfg.get("output"))


def cmd_ball_volume(cfg, out, args):
    E = _domain(cfg)
    x = _need(cfg, "x")
    r_grid = [float(r) for r in _need(cfg, "r_grid")]
    method = cfg.get("method", "auto")
    if method == "monte-carlo":
        seed = _seed(cfg)
        samples = int(_need(cfg, "samples"))
        rows = []
        for r in r_grid:
            res = qh_volume_monte_carlo(E, QhBall(tuple(x), r, int(cfg.get("k_max", 12))), samples, seed,
                                        args.workers)
            rows.append((r, res.estimate - 3 * res.stderr, res.estimate, res.estimate + 3 * res.stderr, 0, 0))

        def write(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "vol_lo", "vol_est", "vol_hi", "n_inner_cubes", "n_boundary_cubes"])
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
        out.csv(write, cfg.get("output"))
        return
    curve = ball_growth_curve(E, x, r_grid, int(_need(cfg, "k_max")), method)
    out.csv(lambda fh: write_growth_csv(curve, fh), cfg.get("output"))


def cmd_closed_form(cfg, out, args):
    fid = _need(cfg, "id")
    params = {k: v for k, v in cfg.items() if k not in ("id", "output")}
    try:
        res = evaluate(fid, **params)
    except (KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    out.json(res.to_json(), cfg.get("output"))


def cmd_porosity(cfg, out, args):
    E = _domain(cfg)
    est = porosity_probe(E, int(_need(cfg, "x_samples")), _need(cfg, "r_grid"),
                         int(cfg.get("search_resolution", 16)), _seed(cfg))
    out.json(est.to_json(), cfg.get("output"))


def cmd_layer_ratio(cfg, out, args):
    table = layer_ratio_experiment(_need(cfg, "domain"), float(_need(cfg, "lam")), _need(cfg, "s_grid"),
                                   int(cfg.get("n", 2)))

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "ratio", "limit"])
        for s, v in zip(table.s, table.ratio):
            w.writerow([repr(float(s)), repr(float(v)), repr(table.limit)])
    out.csv(write, cfg.get("output"))


def cmd_validate(cfg, out, args):
    from .acceptance import run_all
    selected = cfg.get("criteria")
    lines: list[str] = []
    results = run_all(selected, echo=lambda s: (lines.append(s), print(s, file=sys.stderr, flush=True)))
    ok = all(c.passed for c in results)
    config_runs = []
    for path in cfg.get("configs", []):
        code = main([cfg_command(path), "--config", path, "--set", "output=null",
                     "--set", "counts_output=null"], stdout=io.StringIO())
        config_runs.append({"config": path, "exit": code})
        ok &= code == 0
    doc = {"criteria": [{"number": c.number, "title": c.title, "pass": c.passed, "seconds": c.seconds,
                         "checks": [{"label": k.label, "pass": k.passed, "detail": k.detail}
                                    for k in c.checks]} for c in results],
           "configs": config_runs, "pass": ok}
    out.json(doc, cfg.get("output"))
    return 0 if ok else 1


def cfg_command(path: str) -> str:
    cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    return cfg.get("command") or Path(path).stem.split(".")[0]


COMMANDS = {
    "decompose": cmd_decompose,
    "fit-q": cmd_fit_q,
    "qdist": cmd_qdist,
    "ball-volume": cmd_ball_volume,
    "closed-form": cmd_closed_form,
    "porosity": cmd_porosity,
    "layer-ratio": cmd_layer_ratio,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qhvol", description="Quasihyperbolic volume experiments.")
    p.add_argument("--version", action="version", version=f"qhvol {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field (value parsed as JSON)")
        s.add_argument("--out", help="output path (default stdout)")
        s.add_argument("--seed", type=int)
        s.add_argument("--k-max", type=int, dest="k_max")
        s.add_argument("--workers", type=int, default=1)
        if name == "closed-form":
            s.add_argument("--id", dest="formula_id")
        if name == "validate":
            s.add_argument("--criteria", type=int, nargs="*")
            s.add_argument("--configs", nargs="*", default=None)
    return p


def _extra_params(extra: list[str]) -> dict:
    """``--name value`` pairs left over by argparse (closed-form parameters)."""
    out = {}
    i = 0
    while i < len(extra):
        key = extra[i]
        if not key.startswith("--") or i + 1 >= len(extra):
            raise ConfigError(f"unexpected argument {key!r}")
        out[key[2:].replace("-", "_")] = _parse_value(extra[i + 1])
        i += 2
    return out


def main(argv=None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        if extra and args.command != "closed-form":
            raise ConfigError(f"unexpected arguments {extra}")
        cfg = load_config(args.config, args.set)
        cfg.pop("command", None)
        for key in ("seed", "k_max"):
            if getattr(args, key) is not None:
                cfg[key] = getattr(args, key)
        if args.out is not None:
            cfg["output"] = args.out
        if args.command == "closed-form":
            if args.formula_id is not None:
                cfg["id"] = args.formula_id
            cfg.update(_extra_params(extra))
        if args.command == "validate":
            if args.criteria:
                cfg["criteria"] = args.criteria
            if args.configs is not None:
                cfg["configs"] = args.configs
        if args.workers < 1:
            raise ConfigError("--workers must be positive")
        out = Output(cfg)
        code = COMMANDS[args.command](cfg, out, args) or 0
        out.flush(stdout)
        return code
    except ConfigError as exc:
        print(f"qhvol: config error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL as exc:
        print(f"qhvol: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError, KeyError) as exc:
        print(f"qhvol: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
