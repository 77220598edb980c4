"""Command-line front end: simulate, fuse, metrics, ablation, rerun.

Exit codes: 0 ok, 1 usage, 2 validation, 3 I/O, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__, _kernels, simulate, spatial
from .cube import read_cube, read_grid_csv, write_cube, write_grid_csv
from .driver import FusionConfig, bglrf, bicubic_upsample, run_report
from .errors import CubeFormatError, NumericalError, ValidationError
from .metrics import evaluate

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3, 4

log = logging.getLogger("bglrf")

SIM_DEFAULTS = {
    "height": 48,
    "width": 48,
    "bands": 16,
    "materials": 6,
    "msi_bands": 6,
    "ratio": 4,
    "shift": [0, 0],
    "hsi_snr_db": 30.0,
    "msi_snr_db": 40.0,
    "seed": 0,
    "phantom_mix": 0.2,
    "srf_csv": None,
    "truth": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _finite(obj):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _json_dump(obj, path=None):
    text = json.dumps(_finite(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
    return text


def _load_json(path):
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return data


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


# --- config merging --------------------------------------------------------

def _fusion_flag_names():
    """Flat dotted keys for every FusionConfig field, nested ones as ``admm.mu``."""
    names = []
    for f in dataclasses.fields(FusionConfig):
        default = getattr(FusionConfig(), f.name)
        if dataclasses.is_dataclass(default):
            names += [f"{f.name}.{g.name}" for g in dataclasses.fields(default)]
        else:
            names.append(f.name)
    return names


def _apply_overrides(cfg: dict, args, names):
    for name in names:
        val = getattr(args, "opt_" + name.replace(".", "__"), None)
        if val is None:
            continue
        val = _parse_value(val)
        if "." in name:
            outer, inner = name.split(".", 1)
            cfg.setdefault(outer, {})[inner] = val
        else:
            cfg[name] = val
    return cfg


def _add_override_flags(parser, names):
    grp = parser.add_argument_group("config overrides (mirror the JSON keys)")
    for name in names:
        grp.add_argument("--" + name.replace("_", "-"), dest="opt_" + name.replace(".", "__"),
                         metavar="VALUE", default=None)


def _write_manifest(out_dir, subcommand, inputs, config, seed=None, extra=None):
    manifest = {
        "tool": "bglrf",
        "version": __version__,
        "subcommand": subcommand,
        "inputs": inputs,
        "output_dir": str(out_dir),
        "config": config,
        "seed": seed,
        "rng": simulate.RNG_ALGORITHM,
        "backend": _kernels.BACKEND,
    }
    if extra:
        manifest.update(extra)
    _json_dump(manifest, Path(out_dir) / "manifest.json")
    return manifest


# --- subcommands -----------------------------------------------------------

def _sim_config(args):
    cfg = dict(SIM_DEFAULTS)
    user = _load_json(args.config)
    unknown = set(user) - set(cfg)
    if unknown:
        raise ValidationError(f"unknown simulate config keys: {sorted(unknown)}")
    cfg.update(user)
    _apply_overrides(cfg, args, list(SIM_DEFAULTS))
    if cfg["shift"] is not None:
        cfg["shift"] = [int(v) for v in cfg["shift"]]
    return cfg


def run_simulate(cfg, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = int(cfg["ratio"])
    H, W = int(cfg["height"]), int(cfg["width"])
    if H % d or W % d:
        raise ValidationError(f"image {H}x{W} is not divisible by ratio {d}")
    if cfg["truth"]:
        truth = read_cube(cfg["truth"])
        if truth.height % d or truth.width % d:
            raise ValidationError("truth cube is not divisible by the ratio")
    else:
        truth = simulate.make_phantom(H, W, int(cfg["bands"]), int(cfg["materials"]),
                                      int(cfg["seed"]), float(cfg["phantom_mix"]))
    if cfg["srf_csv"]:
        R = simulate.load_srf_csv(cfg["srf_csv"])
    else:
        R = simulate.synthetic_srf(int(cfg["msi_bands"]), truth.bands)
    K = simulate.gaussian_kernel(d, tuple(cfg["shift"]))
    snr = lambda v: math.inf if v is None else float(v)  # noqa: E731
    spec = simulate.DegradeSpec(ratio=d, kernel=K, hsi_snr_db=snr(cfg["hsi_snr_db"]),
                                msi_snr_db=snr(cfg["msi_snr_db"]), seed=int(cfg["seed"]))
    Y, Z = simulate.degrade(truth, R, spec)
    write_cube(Y, out / "Y.hxc")
    write_cube(Z, out / "Z.hxc")
    write_cube(truth, out / "X.hxc")
    write_grid_csv(K, out / "K.csv")
    write_grid_csv(R, out / "srf.csv")
    return {"Y": str(out / "Y.hxc"), "Z": str(out / "Z.hxc"), "X": str(out / "X.hxc"),
            "K": str(out / "K.csv"), "srf": str(out / "srf.csv")}


def cmd_simulate(args):
    cfg = _sim_config(args)
    if args.print_effective_config:
        _json_dump(cfg)
    outputs = run_simulate(cfg, args.out)
    _write_manifest(args.out, "simulate", {}, cfg, seed=cfg["seed"], extra={"outputs": outputs})
    return EXIT_OK


def _fusion_config(args):
    raw = _load_json(args.config)
    raw = _apply_overrides(raw, args, _fusion_flag_names())
    return FusionConfig.from_dict(raw)


def run_fuse(hsi, msi, cfg: FusionConfig, out_dir, kernel_path=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    Y = read_cube(hsi)
    Z = read_cube(msi) if msi else None
    kernel = None
    if cfg.mode == "nonblind":
        if not kernel_path:
            raise ValidationError("nonblind mode needs --kernel K.csv")
        kernel = read_grid_csv(kernel_path)
        if not spatial.is_feasible(kernel, atol=1e-9):
            raise ValidationError(f"{kernel_path}: kernel is not on the simplex")
    if cfg.mode != "no-glr" and Z is None:
        raise ValidationError(f"mode {cfg.mode} needs --msi")
    result = bglrf(Y, Z, cfg, kernel=kernel)
    write_cube(result.x, out / "X.hxc")
    write_grid_csv(result.kernel, out / "K_est.csv")
    report = run_report(result, cfg)
    _json_dump(report, out / "report.json")
    return result, report


def cmd_fuse(args):
    cfg = _fusion_config(args)
    if args.print_effective_config:
        _json_dump(cfg.to_dict())
    run_fuse(args.hsi, args.msi, cfg, args.out, args.kernel)
    inputs = {"hsi": args.hsi, "msi": args.msi, "kernel": args.kernel}
    _write_manifest(args.out, "fuse", inputs, cfg.to_dict())
    return EXIT_OK


def run_metrics(estimate, truth, ratio, window=None):
    X = read_cube(estimate)
    T = read_cube(truth)
    if X.shape != T.shape:
        raise ValidationError(f"estimate {X.shape} and truth {T.shape} differ in shape")
    kw = {} if window is None else {"window": window}
    return evaluate(X, T, ratio, **kw)


def cmd_metrics(args):
    rep = run_metrics(args.estimate, args.truth, args.ratio, args.window)
    text = _json_dump(rep.as_dict(), args.json)
    if args.json:
        sys.stdout.write(text)
    if args.csv:
        Path(args.csv).write_text(rep.csv_line())
    return EXIT_OK


def cmd_ablation(args):
    """Bicubic, blind, no-GLR and non-blind (wrong kernel) runs on one pair."""
    cfg = _fusion_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth = read_cube(args.truth)
    if args.wrong_kernel:
        wrong = read_grid_csv(args.wrong_kernel)
    else:
        wrong = simulate.gaussian_kernel(cfg.ratio)
    table = {}
    Y = read_cube(args.hsi)
    bic = bicubic_upsample(Y, cfg.ratio, cfg.phase)
    write_cube(bic, out / "bicubic.hxc")
    table["bicubic"] = {"metrics": evaluate(bic, truth, cfg.ratio).as_dict()}
    for mode in ("blind", "no-glr", "nonblind"):
        sub = out / mode
        sub.mkdir(exist_ok=True)
        kpath = None
        if mode == "nonblind":
            kpath = sub / "K_given.csv"
            write_grid_csv(wrong, kpath)
        mcfg = dataclasses.replace(cfg, mode=mode)
        result, _ = run_fuse(args.hsi, args.msi, mcfg, sub, kpath)
        entry = {"metrics": evaluate(result.x, truth, cfg.ratio).as_dict(),
                 "kernel_centroid": list(result.centroid)}
        if args.true_kernel:
            tc = np.array(spatial.kernel_centroid(read_grid_csv(args.true_kernel)))
            entry["centroid_error"] = float(np.linalg.norm(np.array(result.centroid) - tc))
        table[mode] = entry
    _json_dump(table, out / "ablation.json")
    _json_dump(table)
    _write_manifest(out, "ablation", {"hsi": args.hsi, "msi": args.msi, "truth": args.truth,
                                      "wrong_kernel": args.wrong_kernel,
                                      "true_kernel": args.true_kernel}, cfg.to_dict())
    return EXIT_OK


def cmd_rerun(args):
    """Repeat the run described by a manifest, optionally into another directory."""
    m = _load_json(args.manifest)
    sub = m.get("subcommand")
    out = args.out or m.get("output_dir")
    if sub == "simulate":
        run_simulate(m["config"], out)
        _write_manifest(out, "simulate", {}, m["config"], seed=m.get("seed"))
    elif sub == "fuse":
        cfg = FusionConfig.from_dict(m["config"])
        inp = m["inputs"]
        run_fuse(inp["hsi"], inp.get("msi"), cfg, out, inp.get("kernel"))
        _write_manifest(out, "fuse", inp, cfg.to_dict())
    else:
        raise ValidationError(f"manifest has unsupported subcommand {sub!r}")
    return EXIT_OK


# --- entry point -----------------------------------------------------------

def build_parser():
    p = _Parser(prog="bglrf", description="Blind graph-Laplacian-regularized HSI/MSI fusion")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS/OpenMP threads (1 is the determinism reference)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--version", action="version", version=f"bglrf {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a phantom and its HSI/MSI pair")
    s.add_argument("--config", help="simulation JSON config")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--print-effective-config", action="store_true")
    _add_override_flags(s, list(SIM_DEFAULTS))
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fuse", help="estimate the SRI (and kernel) from an HSI/MSI pair")
    f.add_argument("--hsi", required=True)
    f.add_argument("--msi")
    f.add_argument("--kernel", help="kernel CSV, required in nonblind mode")
    f.add_argument("--config", help="fusion JSON config")
    f.add_argument("--out", required=True)
    f.add_argument("--print-effective-config", action="store_true")
    _add_override_flags(f, _fusion_flag_names())
    f.set_defaults(func=cmd_fuse)

    m = sub.add_parser("metrics", help="ERGAS / UIQI / SAM / SNR against ground truth")
    m.add_argument("--estimate", required=True)
    m.add_argument("--truth", required=True)
    m.add_argument("--ratio", type=int, required=True)
    m.add_argument("--window", type=int, default=None, help="UIQI window (default 32)")
    m.add_argument("--json", help="write the JSON report here as well as to stdout")
    m.add_argument("--csv", help="write a one-line CSV summary")
    m.set_defaults(func=cmd_metrics)

    a = sub.add_parser("ablation", help="compare bicubic, blind, no-GLR and non-blind runs")
    a.add_argument("--hsi", required=True)
    a.add_argument("--msi", required=True)
    a.add_argument("--truth", required=True)
    a.add_argument("--true-kernel", help="kernel CSV used to score centroid errors")
    a.add_argument("--wrong-kernel", help="kernel for the non-blind run (default centered Gaussian)")
    a.add_argument("--config")
    a.add_argument("--out", required=True)
    _add_override_flags(a, _fusion_flag_names())
    a.set_defaults(func=cmd_ablation)

    r = sub.add_parser("rerun", help="repeat a run from its manifest.json")
    r.add_argument("manifest")
    r.add_argument("--out", help="write into this directory instead")
    r.set_defaults(func=cmd_rerun)
    return p


def _threads(n):
    if n is None:
        return nullcontext()
    if n < 1:
        raise UsageError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        with _threads(args.threads):
            return args.func(args)
    except UsageError as exc:
        print(f"bglrf: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"bglrf: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, CubeFormatError) as exc:
        print(f"bglrf: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"bglrf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
