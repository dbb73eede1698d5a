"""Command-line interface: ``realdeconv {degrade,deblur,dataset,sweep,report}``.

Every tunable is a ``key = value`` setting that can come from a command-line
flag (``--key``), a config file (``--config``, ``#`` comments, optional
``[run]`` header) or the built-in default, in that order of precedence.
``deblur`` additionally reads the ``<observation>.params`` sidecar written by
``degrade`` (below the config file, above the defaults) to pick up ``c``,
``q`` and ``gamma``. ``--print-config`` writes the effective settings to
stdout in config-file syntax and exits.

Exit codes: 0 success, 1 invalid configuration or input, 2 I/O error,
3 internal error. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
import traceback
from pathlib import Path

import numpy as np

from . import benchmark
from .dataset import DatasetManifest, make_dataset
from .energy import DATA_TERMS, REGULARIZERS, EnergyConfig
from .forward import DegradationParams, degrade, gamma_compress, gamma_expand
from .imaging import KernelError, load_image, load_kernel, save_image
from .solver import SolverConfig, solve

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _optional_float(s):
    return None if str(s).strip().lower() == "none" else float(s)


def _optional_int(s):
    return None if str(s).strip().lower() == "none" else int(s)


def _float_list(s):
    return [float(x) for x in str(s).replace(",", " ").split()]


def _word_list(s):
    return str(s).split()


def _choice(options):
    def conv(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return conv


# name -> (converter, default, help)
SETTINGS = {
    # degradation
    "c": (_optional_float, None, "saturation level in (0, 1] or none"),
    "q": (_optional_float, None, "quantization step in (0, 1) or none"),
    "gamma": (float, 1.0, "gamma exponent (1 = linear)"),
    "sigma": (float, 0.0, "Gaussian noise standard deviation"),
    "seed": (int, 0, "random seed (noise for degrade/dataset, sampler for deblur/sweep)"),
    "input_space": (_choice(("linear", "display")), "linear", "degrade: input is linear or display (gamma-expanded first)"),
    "bits": (int, 16, "output bit depth (8 or 16)"),
    # energy
    "data_term": (_choice(DATA_TERMS), "simple", "data-fitting term"),
    "regularizer": (_choice(REGULARIZERS), "tv", "regularizer"),
    "lam": (float, 0.0, "regularization weight"),
    # solver
    "delta_init": (float, SolverConfig.delta_init, "initial mutation size"),
    "delta_min": (float, SolverConfig.delta_min, "stop when the mutation size drops below this"),
    "anneal_factor": (float, SolverConfig.anneal_factor, "mutation size multiplier"),
    "accept_window": (_optional_int, None, "steps per annealing check (none = 10 sweeps)"),
    "accept_threshold": (float, SolverConfig.accept_threshold, "acceptance rate below which delta shrinks"),
    "p_chain": (float, SolverConfig.p_chain, "probability of sampling near the last accepted pixel"),
    "chain_radius": (int, SolverConfig.chain_radius, "radius of the local sampling window"),
    "max_iters": (int, SolverConfig.max_iters, "iteration cap"),
    # dataset
    "clip_percentile": (_optional_float, 98.0, "dataset: clip at this percentile of the blurred linear image (none = use c)"),
    "downsample": (int, 2, "dataset: box downsampling factor"),
    "pairing": (_choice(("product", "cycle")), "product", "dataset: image/kernel pairing"),
    # sweep
    "manifest": (str, None, "sweep: dataset manifest path"),
    "lambdas": (_float_list, benchmark.default_lambdas(), "sweep: regularization weights"),
    "configs": (_word_list, ["simple+tv"], "sweep: whitespace-separated config ids"),
}

COMMAND_KEYS = {
    "degrade": ["c", "q", "gamma", "sigma", "seed", "input_space", "bits"],
    "deblur": ["c", "q", "gamma", "data_term", "regularizer", "lam", "delta_init", "delta_min",
               "anneal_factor", "accept_window", "accept_threshold", "p_chain", "chain_radius",
               "max_iters", "seed", "bits"],
    "dataset": ["c", "q", "gamma", "sigma", "seed", "clip_percentile", "downsample", "pairing"],
    "sweep": ["manifest", "lambdas", "configs", "delta_init", "delta_min", "anneal_factor",
              "accept_window", "accept_threshold", "p_chain", "chain_radius", "max_iters", "seed"],
    "report": [],
}


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, list):
        return " ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; a leading ``[section]`` header is optional."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"{path}: cannot read config file ({exc.strerror or exc})") from exc
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    try:
        cp.read_string(text if text.lstrip().startswith("[") else "[run]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: malformed config file: {exc}") from None
    values = {}
    for section in cp.sections():
        values.update(cp[section])
    return values


class RunConfig:
    """Effective settings for one command, with the source of each value."""

    def __init__(self, keys):
        self.keys = list(keys)
        self.values = {k: SETTINGS[k][1] for k in self.keys}
        self.sources = {k: "default" for k in self.keys}

    def merge(self, raw: dict, source: str, strict: bool = True):
        for key, text in raw.items():
            if key not in self.values:
                if strict:
                    raise ConfigError(f"unknown key {key!r} (from {source})")
                continue
            try:
                self.values[key] = SETTINGS[key][0](text)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid value {text!r} for key {key!r} (from {source}): {exc}") from None
            self.sources[key] = source

    def __getitem__(self, key):
        return self.values[key]

    def dump(self) -> str:
        lines = [f"# effective configuration; source of each value in trailing comment"]
        for k in self.keys:
            lines.append(f"{k} = {_format(self.values[k])}  # {self.sources[k]}")
        return "\n".join(lines) + "\n"

    def _build(self, factory, keys, **extra):
        try:
            return factory(**{k: self.values[k] for k in keys}, **extra)
        except ValueError as exc:
            msg = str(exc)
            culprits = [k for k in keys if msg.startswith(k) or f" {k} " in f" {msg} "] or keys
            where = ", ".join(f"{k!r} (from {self.sources[k]})" for k in culprits)
            raise ConfigError(f"invalid setting {where}: {msg}") from None

    def degradation(self) -> DegradationParams:
        keys = [k for k in ("c", "q", "gamma", "sigma", "seed") if k in self.values]
        return self._build(DegradationParams, keys)

    def solver(self) -> SolverConfig:
        keys = ["delta_init", "delta_min", "anneal_factor", "accept_window", "accept_threshold",
                "p_chain", "chain_radius", "max_iters", "seed"]
        return self._build(SolverConfig, keys)

    def energy(self) -> EnergyConfig:
        params = self.degradation()
        return self._build(lambda **kw: EnergyConfig(params=params, **kw), ["data_term", "regularizer", "lam"])


def _add_settings(parser, keys):
    group = parser.add_argument_group("settings (flag > config file > default)")
    for k in keys:
        group.add_argument(f"--{k}", dest=f"set_{k}", default=None, metavar="VALUE", help=SETTINGS[k][2])
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--print-config", action="store_true", help="print effective settings and exit")


def _resolve(args, command, sidecar=None) -> RunConfig:
    rc = RunConfig(COMMAND_KEYS[command])
    if sidecar is not None:
        rc.merge(sidecar[0], f"sidecar {sidecar[1]}", strict=False)
    if args.config:
        rc.merge(read_config_file(args.config), f"config file {args.config}")
    flags = {k: getattr(args, f"set_{k}") for k in rc.keys if getattr(args, f"set_{k}", None) is not None}
    rc.merge(flags, "command line")
    return rc


def _sidecar_path(image_path) -> Path:
    return Path(str(image_path) + ".params")


def write_sidecar(path, p: DegradationParams, **extra):
    cp = configparser.ConfigParser(interpolation=None)
    cp["degradation"] = {
        "c": _format(p.c), "q": _format(p.q), "gamma": _format(float(p.gamma)),
        "sigma": _format(float(p.sigma)), "seed": str(p.seed),
        **{k: str(v) for k, v in extra.items()},
    }
    with open(path, "w") as fh:
        cp.write(fh)


def read_sidecar(path) -> dict:
    cp = configparser.ConfigParser(interpolation=None)
    if not cp.read(path):
        raise OSError(f"{path}: cannot read parameter sidecar")
    return {k: v for k, v in cp["degradation"].items() if k in ("c", "q", "gamma")}


# --------------------------------------------------------------------------
# commands

def cmd_degrade(args) -> int:
    rc = _resolve(args, "degrade")
    if args.print_config:
        sys.stdout.write(rc.dump())
        return EXIT_OK
    p = rc.degradation()
    u = load_image(args.input)
    k = load_kernel(args.kernel)
    if rc["input_space"] == "display":
        u = gamma_expand(u, p.gamma)
    if u.ndim == 3:
        v = np.stack([degrade(u[..., ch], k, p.replace(seed=p.seed + ch)) for ch in range(u.shape[2])], axis=-1)
    else:
        v = degrade(u, k, p)
    save_image(v, args.output, bits=rc["bits"])
    write_sidecar(_sidecar_path(args.output), p, kernel=args.kernel, input=args.input,
                  input_space=rc["input_space"])
    return EXIT_OK


def cmd_deblur(args) -> int:
    sidecar = None
    side_path = Path(args.params) if args.params else _sidecar_path(args.input)
    if args.params or side_path.exists():
        sidecar = (read_sidecar(side_path), side_path)
    rc = _resolve(args, "deblur", sidecar)
    if args.print_config:
        sys.stdout.write(rc.dump())
        return EXIT_OK
    e_cfg = rc.energy()
    s_cfg = rc.solver()
    v = load_image(args.input)
    k = load_kernel(args.kernel)
    out, report = solve(v, k, e_cfg, s_cfg)
    if e_cfg.linear_latent:
        out = gamma_compress(out, e_cfg.params.gamma)
    save_image(out, args.output, bits=rc["bits"])
    report.write(args.report or str(args.output) + ".report")
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "energy"])
            for i, e in enumerate(report.trace):
                w.writerow([i * report.trace_every, repr(e)])
    return EXIT_OK


_IMAGE_SUFFIXES = {".pgm", ".ppm", ".pnm", ".png", ".tif", ".tiff"}


def _list_files(directory, suffixes=None):
    d = Path(directory)
    if not d.is_dir():
        raise OSError(f"{d}: not a directory")
    files = sorted(f for f in d.iterdir() if f.is_file() and (suffixes is None or f.suffix.lower() in suffixes))
    if not files:
        raise ConfigError(f"{d}: no usable files")
    return files


def cmd_dataset(args) -> int:
    rc = _resolve(args, "dataset")
    if args.print_config:
        sys.stdout.write(rc.dump())
        return EXIT_OK
    p = rc.degradation()
    src_files = _list_files(args.sources, _IMAGE_SUFFIXES)
    kernel_files = _list_files(args.kernels)
    sources = [load_image(f) for f in src_files]
    kernels = [load_kernel(f) for f in kernel_files]
    manifest = make_dataset(
        sources, kernels, p, args.out,
        clip_percentile=rc["clip_percentile"], downsample=rc["downsample"], pairing=rc["pairing"],
        source_names=[f.stem for f in src_files], kernel_names=[f.stem for f in kernel_files],
    )
    print(f"wrote {len(manifest.entries)} entries to {manifest.path}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    rc = RunConfig(COMMAND_KEYS["sweep"])
    rc.merge(read_config_file(args.spec), f"spec file {args.spec}")
    flags = {k: getattr(args, f"set_{k}") for k in rc.keys if getattr(args, f"set_{k}", None) is not None}
    rc.merge(flags, "command line")
    if args.print_config:
        sys.stdout.write(rc.dump())
        return EXIT_OK
    if rc["manifest"] is None:
        raise ConfigError(f"key 'manifest' is required (from {rc.sources['manifest']})")
    manifest = Path(rc["manifest"])
    if not manifest.is_absolute():
        manifest = Path(args.spec).parent / manifest
    try:
        spec = benchmark.SweepSpec(str(manifest), rc["lambdas"], rc["configs"], rc.solver())
    except ValueError as exc:
        raise ConfigError(f"invalid sweep spec {args.spec}: {exc}") from None
    rows = benchmark.run_sweep(spec, args.out, jobs=args.jobs or benchmark.default_jobs())
    failed = [r for r in rows if r.status != "ok"]
    for r in failed:
        print(f"row {r.entry}/{r.config}/{r.lam}: {r.status}", file=sys.stderr)
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.rows)
    if not path.exists():
        raise OSError(f"{path}: no such file")
    rows = benchmark.read_rows(path)
    if not rows:
        raise ConfigError(f"{path}: no result rows")
    summary = benchmark.summarize(rows)
    summary.write(args.out)
    if not args.no_plots:
        summary.render(args.out)
    sys.stderr.write(summary.table())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="realdeconv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="simulate a degraded observation")
    p.add_argument("input")
    p.add_argument("kernel")
    p.add_argument("output")
    _add_settings(p, COMMAND_KEYS["degrade"])
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("deblur", help="restore an observation")
    p.add_argument("input")
    p.add_argument("kernel")
    p.add_argument("output")
    p.add_argument("--params", help="parameter sidecar (default: <input>.params if present)")
    p.add_argument("--report", help="solver report path (default: <output>.report)")
    p.add_argument("--trace", help="write the energy trace as CSV")
    _add_settings(p, COMMAND_KEYS["deblur"])
    p.set_defaults(func=cmd_deblur)

    p = sub.add_parser("dataset", help="generate a benchmark dataset")
    p.add_argument("sources")
    p.add_argument("kernels")
    p.add_argument("out")
    _add_settings(p, COMMAND_KEYS["dataset"])
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("sweep", help="run a lambda sweep from a spec file")
    p.add_argument("spec")
    p.add_argument("out", help="results CSV (appended; completed rows are skipped)")
    p.add_argument("--jobs", type=int, default=None, help="parallel workers (default: available cores)")
    group = p.add_argument_group("overrides")
    for k in COMMAND_KEYS["sweep"]:
        group.add_argument(f"--{k}", dest=f"set_{k}", default=None, metavar="VALUE", help=SETTINGS[k][2])
    p.add_argument("--print-config", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarize a results file")
    p.add_argument("rows")
    p.add_argument("out")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, KernelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
