"""Command line front end: ``nodalcount <subcommand> ...``.

File-producing subcommands write into ``--out`` and finish by printing the
path of a ``manifest.json`` that records the parameters, seeds, version,
wall time and output files of the run.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ModelError, NumericalFailure
from .geometry import shell_geometry
from .limitdist import (
    bin_masses,
    closed_form_cdf2,
    closed_form_p2,
    fit_tail_exponent,
    histogram_distance,
    ho_moment,
    level_set_p2,
    quadrature_p,
    sample_limit_distribution,
    tail_report,
)
from .model import Kind, ModelSpec
from .parallel import THREADS_ENV, default_workers
from .randomwave import RandomWaveConfig, scaling_study
from .spectra import Histogram, exact_count, weyl_count, window_histogram

HIST_HEADER = "bin_left,bin_center,density"


# -- output plumbing --------------------------------------------------------


@dataclass
class RunManifest:
    subcommand: str
    params: dict
    seeds: list
    version: str = __version__
    wall_time: float = 0.0
    outputs: list = field(default_factory=list)


def _fmt(x: float) -> str:
    return repr(float(x))


def histogram_csv(hist: Histogram) -> str:
    lines = [HIST_HEADER]
    for left, centre, dens in zip(hist.left, hist.centers, hist.density):
        lines.append(f"{_fmt(left)},{_fmt(centre)},{_fmt(dens)}")
    return "\n".join(lines) + "\n"


def density_csv(edges: np.ndarray, density: np.ndarray) -> str:
    lines = [HIST_HEADER]
    for a, b, d in zip(edges[:-1], edges[1:], density):
        lines.append(f"{_fmt(a)},{_fmt(0.5 * (a + b))},{_fmt(d)}")
    return "\n".join(lines) + "\n"


def svg_polylines(series, width: int = 640, height: int = 400, title: str = "") -> str:
    """Minimal SVG with one polyline per ``(label, x, y)`` series."""
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    xs = np.concatenate([np.asarray(x, dtype=float) for _, x, _ in series])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, _, y in series])
    ok = np.isfinite(ys)
    x0, x1 = float(xs.min()), float(xs.max())
    y1 = float(np.quantile(ys[ok], 0.995)) if ok.any() else 1.0
    y1 = y1 if y1 > 0 else 1.0
    pad = 40

    def px(x):
        return pad + (x - x0) / max(x1 - x0, 1e-300) * (width - 2 * pad)

    def py(y):
        return height - pad - min(max(y, 0.0), y1) / y1 * (height - 2 * pad)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{pad}" y="20" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{height - 10}" font-size="11">{x0:.3g}</text>',
        f'<text x="{width - pad}" y="{height - 10}" font-size="11">{x1:.3g}</text>',
        f'<text x="5" y="{pad}" font-size="11">{y1:.3g}</text>',
    ]
    for i, (label, x, y) in enumerate(series):
        c = colours[i % len(colours)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y) if math.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.2" points="{pts}"/>')
        out.append(f'<text x="{width - 200}" y="{pad + 16 * i}" font-size="12" fill="{c}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


class Outputs:
    def __init__(self, args, seeds=()):
        self.dir = Path(args.out)
        self.dir.mkdir(parents=True, exist_ok=True)
        params = {k: v for k, v in vars(args).items() if k not in ("func", "out", "svg")}
        self.manifest = RunManifest(args.command, params, list(seeds))
        self.t0 = time.perf_counter()

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text)
        self.manifest.outputs.append(str(path))
        return path

    def write_json(self, name: str, obj) -> Path:
        obj = dict(obj, manifest="manifest.json")
        return self.write(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def finish(self) -> Path:
        self.manifest.wall_time = time.perf_counter() - self.t0
        path = self.dir / "manifest.json"
        path.write_text(json.dumps(asdict(self.manifest), indent=2, sort_keys=True, default=str) + "\n")
        print(path)
        return path


# -- model flags ------------------------------------------------------------


def _read_config(path: str) -> dict:
    cfg = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ModelError(f"config line without '=': {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def model_from_args(args) -> ModelSpec:
    cfg = {}
    if args.model:
        kind, _, params = args.model.partition(":")
        cfg.update(kind=kind, params=params)
    for key in ("kind", "params", "mu", "exponents", "s", "alpha"):
        value = getattr(args, key, None)
        if value not in (None, ""):
            cfg[key] = value
    kind = str(cfg.get("kind", "oscillator")).lower()
    if not cfg.get("params") and kind == Kind.OSCILLATOR.value:
        # incommensurate default frequencies 1, sqrt 2, sqrt 3, ...
        s = int(cfg.get("s") or 2)
        cfg["params"] = ",".join(repr(math.sqrt(l)) for l in range(1, s + 1))
    return ModelSpec.from_mapping(cfg)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--model", help="shorthand kind:params, e.g. oscillator:1,1.41421356")
    g.add_argument("--kind", choices=[k.value for k in Kind])
    g.add_argument("--params", help="comma separated frequencies, side lengths or coefficients")
    g.add_argument("--mu", help="comma separated Maslov shifts")
    g.add_argument("--exponents", help="custom models: monomial exponent rows '2,0;1,1;0,2'")
    g.add_argument("--s", type=int, help="dimension (default oscillator frequencies 1, sqrt 2, ...)")
    g.add_argument("--alpha", type=float, help="homogeneity degree, checked against the model")


def _add_common(p: argparse.ArgumentParser, out: bool = True) -> None:
    p.add_argument("--config", help="key = value file overriding defaults")
    p.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    if out:
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--svg", action="store_true", help="also write an SVG overlay")


# -- subcommands ------------------------------------------------------------


def _reference_density(model: ModelSpec, geom, centres: np.ndarray) -> np.ndarray | None:
    """Closed or quadrature limit density at ``centres`` if one is available."""
    out = np.full(len(centres), np.nan)
    for i, x in enumerate(centres):
        if not 0 < x < geom.xi_crit:
            out[i] = 0.0 if x >= geom.xi_crit else np.nan
            continue
        if model.s == 2 and model.kind is not Kind.CUSTOM:
            out[i] = closed_form_p2(model, x)
        elif model.s == 2:
            out[i] = level_set_p2(geom, x)
        else:
            return None
    return out


def cmd_enumerate(args) -> int:
    model = model_from_args(args)
    out = Outputs(args)
    t0 = time.perf_counter()
    hist = window_histogram(model, args.e0, args.g, args.bins, args.mode, args.threads)
    runtime = time.perf_counter() - t0
    out.write("histogram.csv", histogram_csv(hist))
    out.write_json(
        "histogram.json",
        {"states_total": hist.total, "e0": args.e0, "g": args.g, "mode": args.mode, "runtime": runtime},
    )
    if args.svg:
        out.write("histogram.svg", svg_polylines([("enumerate", hist.centers, hist.density)], title="P(xi)"))
    out.finish()
    return 0


def cmd_limit(args) -> int:
    model = model_from_args(args)
    geom = shell_geometry(model)
    out = Outputs(args, [args.seed])
    sample = sample_limit_distribution(geom, args.samples, args.seed, args.bins, args.threads)
    out.write("limit.csv", histogram_csv(sample.histogram))
    report = {"tail": tail_report(geom).to_dict(), "samples": sample.samples, "proposals": sample.proposals}
    report["moments"] = {str(m): sample.moment(m) for m in (1, 2)}
    try:
        report["fitted_tail_exponent"] = fit_tail_exponent(sample.histogram, geom.xi_crit)
    except ValueError:
        report["fitted_tail_exponent"] = None
    out.write_json("limit.json", report)
    if args.svg:
        h = sample.histogram
        out.write("limit.svg", svg_polylines([("limit", h.centers, h.density)], title="limit P(xi)"))
    out.finish()
    return 0


def cmd_analytic(args) -> int:
    model = model_from_args(args)
    geom = shell_geometry(model)
    rows = []
    for x in args.xi:
        if model.s == 2 and model.kind is not Kind.CUSTOM:
            p, method = closed_form_p2(model, x), "closed_form"
        elif model.s == 2:
            p, method = level_set_p2(geom, x), "level_set"
        elif model.s == 3:
            p, method = quadrature_p(geom, x), "quadrature"
        else:
            raise ModelError("no closed form or quadrature for s > 3; use 'limit'")
        rows.append({"xi": x, "p": p, "method": method})
    print(json.dumps(rows, indent=2))
    return 0


def cmd_moments(args) -> int:
    if args.s < 1 or args.m_max < 1:
        raise ModelError("need s >= 1 and m-max >= 1")
    for m in range(1, args.m_max + 1):
        q = ho_moment(args.s, m)
        print(f"{m} {q} {float(q)!r}")
    return 0


def cmd_geometry(args) -> int:
    geom = shell_geometry(model_from_args(args))
    d = geom.to_dict()
    print(json.dumps({k: d[k] for k in ("v_gamma", "j_crit", "xi_crit", "hessian", "det_hessian")}, indent=2))
    return 0


def cmd_tails(args) -> int:
    geom = shell_geometry(model_from_args(args))
    print(json.dumps(tail_report(geom).to_dict(), indent=2))
    return 0


def cmd_weyl(args) -> int:
    model = model_from_args(args)
    order = (model.s - 1) / model.alpha
    rows = []
    for E in args.energies:
        n, w = exact_count(model, E), weyl_count(model, E)
        rows.append({"E": E, "exact": n, "weyl": w, "scaled_error": (n - w) / E**order})
    print(json.dumps(rows, indent=2))
    return 0


def cmd_randomwave(args) -> int:
    h = None if args.h == "auto" else float(args.h)
    sides = [float(a) for a in args.sides.split(",") if a.strip()]
    template = RandomWaveConfig(side=max(sides), n_waves=args.n_waves, k=args.k, h=h, seed=args.seed)
    out = Outputs(args, [args.seed])
    study = scaling_study(template, sides, args.realizations, args.threads)
    out.write("randomwave.csv", study.to_csv())
    out.write_json("randomwave.json", study.to_dict())
    if args.svg:
        summ = study.summary()
        a = np.array([r["side"] for r in summ])
        series = [(name, np.log(a), np.log([max(r[name], 1e-300) for r in summ])) for name in ("total_domains",)]
        out.write("randomwave.svg", svg_polylines(series, title="log count vs log side"))
    out.finish()
    return 0


def cmd_compare(args) -> int:
    model = model_from_args(args)
    geom = shell_geometry(model)
    out = Outputs(args, [args.seed])
    emp = window_histogram(model, args.e0, args.g, args.bins, args.mode, args.threads)
    lim = sample_limit_distribution(geom, args.samples, args.seed, args.bins, args.threads).histogram
    n = max(emp.n_bins, lim.n_bins)
    emp, lim = emp.pad_to(n), lim.pad_to(n)
    out.write("enumerate.csv", histogram_csv(emp))
    out.write("limit.csv", histogram_csv(lim))
    lim_mass = lim.counts / max(lim.total, 1)
    report = {"xi_crit": geom.xi_crit, "bin_width": args.bins, "states_total": emp.total}
    report["enumerate_vs_limit"] = histogram_distance(emp, lim_mass, geom.xi_crit)
    series = [("enumerate", emp.centers, emp.density), ("limit", lim.centers, lim.density)]
    if model.s == 2 and model.kind is not Kind.CUSTOM:
        masses = bin_masses(lambda x: closed_form_cdf2(model, x), emp)
        report["enumerate_vs_closed_form"] = histogram_distance(emp, masses, geom.xi_crit)
        report["limit_vs_closed_form"] = histogram_distance(lim, masses, geom.xi_crit)
        out.write("closed_form.csv", density_csv(emp.edges, masses / emp.bin_width))
        series.append(("closed form", emp.centers, masses / emp.bin_width))
    out.write_json("compare.json", report)
    print(json.dumps({k: v for k, v in report.items() if isinstance(v, dict)}, indent=2))
    if args.svg:
        out.write("compare.svg", svg_polylines(series, title="P(xi): finite energy vs limit"))
    out.finish()
    return 0


# -- parser -----------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"{text} is not positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nodalcount", description="Nodal count statistics of separable systems.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    p = sub.add_parser("enumerate", help="histogram of normalised nodal counts in an energy window")
    _add_model_flags(p)
    _add_common(p)
    p.add_argument("--e0", type=_positive, required=True)
    p.add_argument("--g", type=_positive, default=1.0, help="window [e0, (1+g) e0]")
    p.add_argument("--bins", type=_positive, default=0.01, help="bin width")
    p.add_argument("--mode", choices=["weyl", "exact"], default="weyl")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("limit", help="Monte-Carlo limiting distribution and tail report")
    _add_model_flags(p)
    _add_common(p)
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bins", type=_positive, default=0.005)
    p.set_defaults(func=cmd_limit)

    p = sub.add_parser("analytic", help="closed form (s=2) or quadrature (s=3) limit density")
    _add_model_flags(p)
    _add_common(p, out=False)
    p.add_argument("--xi", type=_floats, required=True, help="comma separated xi values")
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("moments", help="exact oscillator moments <xi^m>")
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--m-max", type=int, default=2)
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("geometry", help="volume, critical point and Hessian of the energy shell")
    _add_model_flags(p)
    _add_common(p, out=False)
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("tails", help="tail exponents and prefactors of the limit law")
    _add_model_flags(p)
    _add_common(p, out=False)
    p.set_defaults(func=cmd_tails)

    p = sub.add_parser("weyl", help="exact level count against the Weyl term")
    _add_model_flags(p)
    _add_common(p, out=False)
    p.add_argument("--energies", type=_floats, required=True)
    p.set_defaults(func=cmd_weyl)

    p = sub.add_parser("randomwave", help="nodal domain census of 3-D random waves")
    _add_common(p)
    p.add_argument("--sides", default="15,25,40,60")
    p.add_argument("--realizations", type=int, default=20)
    p.add_argument("--n-waves", type=int, default=1000)
    p.add_argument("--k", type=_positive, default=1.0)
    p.add_argument("--h", default="auto", help="grid spacing or 'auto' (a tenth of a wavelength)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_randomwave)

    p = sub.add_parser("compare", help="finite-energy histogram against the limit law and closed forms")
    _add_model_flags(p)
    _add_common(p)
    p.add_argument("--e0", type=_positive, required=True)
    p.add_argument("--g", type=_positive, default=1.0)
    p.add_argument("--bins", type=_positive, default=0.01)
    p.add_argument("--mode", choices=["weyl", "exact"], default="weyl")
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_compare)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    try:
        cfg = _read_config(path)
    except OSError as exc:
        parser.error(f"cannot read config: {exc}")
    # config values act as defaults; explicit flags still win
    explicit = {a.split("=", 1)[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    for key, value in cfg.items():
        if key not in known:
            parser.error(f"unknown config key {key!r}")
        if key in explicit:
            continue
        action = known[key]
        try:
            setattr(args, key, action.type(value) if action.type else value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            parser.error(f"bad config value for {key}: {exc}")
    return args


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = default_workers()
    try:
        return args.func(args)
    except NumericalFailure as exc:
        print(f"nodalcount: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ModelError, ValueError) as exc:
        print(f"nodalcount: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
