"""Command-line experiment runner.

Each subcommand reads an optional key=value config file, runs one family of
checks or simulations, writes CSV files (and SVG plots for flows and
geodesics) into the output directory, and exits 0 exactly when every asserted
tolerance passes.
"""

from __future__ import annotations

import argparse
import datetime
import os
import sys

import numpy as np

from .errors import BandLimitTooHigh, ConfigError, G2LabError
from .report import Report, write_csv

DEFAULTS = {
    "grid.dims": "16,16",
    "grid.lengths": "",
    "seed": "0",
    "field.epsilon": "0.05",
    "field.band_limit": "2",
    "field.snapshot": "",
    "solver.rel_tol": "1e-12",
    "solver.max_iter": "1000",
    "identities.trials": "1000",
    "identities.corrupt_psi": "0",
    "variations.h": "1e-4",
    "connections.h": "1e-3",
    "connections.combos": "0.2:0.3:0.5",
    "connections.suites": "metric,compatibility,torsion,contorsion",
    "flow.kind": "Laplacian",
    "flow.dt": "2e-4",
    "flow.steps": "50",
    "flow.monitor_every": "1",
    "flow.snapshot_every": "0",
    "geodesic.connection": "DL",
    "geodesic.T": "1.0",
    "geodesic.dt": "1e-3",
    "geodesic.speed_scale": "0.5",
    "geodesic.drift_tol": "1e-6",
    "curvature.lambdas": "0,1.3,-2",
}

# Per-command defaults that differ from the global ones.
COMMAND_DEFAULTS = {
    "curvature": {"grid.dims": "32,32"},
    "geodesic": {"grid.dims": "8", "solver.rel_tol": "1e-10"},
}


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


def parse_config_text(text, command=None):
    """Parse key=value lines (``#`` comments allowed) over the defaults."""
    values = dict(DEFAULTS)
    values.update(COMMAND_DEFAULTS.get(command, {}))
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = value
    return values


def load_config(path, command=None):
    if path is None:
        return parse_config_text("", command)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return parse_config_text(text, command)


def _number(values, key, kind=float):
    try:
        return kind(values[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {values[key]!r}") from exc


def _numbers(values, key, kind=float):
    text = values[key].strip()
    if not text:
        return []
    try:
        return [kind(part) for part in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {values[key]!r}") from exc


def make_grid(values):
    from .torus_field import Grid

    dims = _numbers(values, "grid.dims", int)
    if not dims or len(dims) > 7 or any(n < 1 for n in dims):
        raise ConfigError(f"grid.dims must list 1 to 7 positive sizes, got {values['grid.dims']!r}")
    dims = tuple(dims) + (1,) * (7 - len(dims))
    lengths = _numbers(values, "grid.lengths")
    if lengths and len(lengths) != 7:
        raise ConfigError("grid.lengths must list 7 values")
    try:
        return Grid(dims, tuple(lengths)) if lengths else Grid(dims)
    except G2LabError as exc:
        raise ConfigError(f"bad grid: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad grid: {exc}") from exc


def make_solver(values):
    from .hodge_green import SolverConfig

    try:
        return SolverConfig(rel_tol=_number(values, "solver.rel_tol"),
                            max_iter=_number(values, "solver.max_iter", int))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def make_field(values, grid, seed):
    """The background G2 field: a snapshot if configured, else a random perturbation of phi0."""
    from .torus_field import G2Field, load_field, perturbed_field

    path = values["field.snapshot"]
    if path:
        return G2Field(load_field(path))
    band = _number(values, "field.band_limit", int)
    try:
        return perturbed_field(grid, seed, _number(values, "field.epsilon"), band)
    except G2LabError as exc:
        if isinstance(exc, BandLimitTooHigh):
            raise ConfigError(str(exc)) from exc
        raise


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


class Output:
    def __init__(self, directory, timestamp):
        self.directory = directory
        self.timestamp = timestamp
        os.makedirs(directory, exist_ok=True)

    def path(self, name):
        return os.path.join(self.directory, name)

    def csv(self, name, header, rows):
        write_csv(self.path(name), header, rows, self.timestamp)

    def report(self, name, rep):
        rows = [[r.name, r.trials, r.max_residual, r.tolerance, "PASS" if r.passed else "FAIL"]
                for r in rep.results]
        self.csv(name, ["check", "trials", "max_residual", "tolerance", "status"], rows)


def svg_line_plot(path, series, title, xlabel, ylabel, width=640, height=400, log_y=False):
    """Write a polyline chart of ``series`` (name -> (xs, ys)) as a standalone SVG."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    margin = 60
    pts = {}
    for name, (xs, ys) in series.items():
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        keep = np.isfinite(xs) & np.isfinite(ys)
        if log_y:
            keep &= ys > 0
            ys = np.where(keep, np.log10(np.where(ys > 0, ys, 1.0)), 0.0)
        pts[name] = (xs[keep], ys[keep])
    all_x = np.concatenate([p[0] for p in pts.values()]) if pts else np.zeros(1)
    all_y = np.concatenate([p[1] for p in pts.values()]) if pts else np.zeros(1)
    if all_x.size == 0:
        all_x, all_y = np.zeros(1), np.zeros(1)
    x0, x1 = float(all_x.min()), float(all_x.max())
    y0, y1 = float(all_y.min()), float(all_y.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(x):
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2}" y="24" text-anchor="middle" font-size="16">{title}</text>',
             f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
             f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 15}" text-anchor="middle" font-size="12">{xlabel}</text>',
             f'<text x="15" y="{height / 2}" font-size="12" transform="rotate(-90 15 {height / 2})" '
             f'text-anchor="middle">{("log10 " if log_y else "") + ylabel}</text>',
             f'<text x="{margin}" y="{height - margin + 15}" font-size="10">{x0:.3g}</text>',
             f'<text x="{width - margin}" y="{height - margin + 15}" font-size="10" text-anchor="end">{x1:.3g}</text>',
             f'<text x="{margin - 5}" y="{height - margin}" font-size="10" text-anchor="end">{y0:.3g}</text>',
             f'<text x="{margin - 5}" y="{margin + 5}" font-size="10" text-anchor="end">{y1:.3g}</text>']
    for k, (name, (xs, ys)) in enumerate(pts.items()):
        color = colors[k % len(colors)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        parts.append(f'<text x="{width - margin + 5}" y="{margin + 14 * k}" font-size="11" fill="{color}">{name}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_verify_identities(values, out, seed):
    from .exterior7 import algebra_suite
    from .g2point import identity_suite

    trials = _number(values, "identities.trials", int)
    corrupt = _number(values, "identities.corrupt_psi")
    rep = Report("identities")
    rep.extend(algebra_suite(trials, seed))
    rep.extend(identity_suite(trials, seed, corrupt_psi=corrupt))
    out.report("identities.csv", rep)
    return rep


def cmd_verify_variations(values, out, seed):
    from .torus_field import random_exact_3form
    from .variations import verify_variations

    grid = make_grid(values)
    phi = make_field(values, grid, seed)
    band = _number(values, "field.band_limit", int)
    x = random_exact_3form(grid, seed + 1, band)
    rep, rows = verify_variations(phi, x, h=_number(values, "variations.h"), seed=seed, cfg=make_solver(values))
    out.csv("variations.csv", ["operator", "h", "mismatch", "order-ratio"],
            [[r.operator, r.h, r.mismatch, r.order_ratio] for r in rows])
    out.report("variations_checks.csv", rep)
    for r in rows:
        print(f"{r.operator:24s} h={r.h:.1e} mismatch={r.mismatch:.3e} order-ratio={r.order_ratio:.3f}")
    return rep


def _combos(values):
    out = []
    for item in values["connections.combos"].split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, b, c = (float(v) for v in item.split(":"))
        except ValueError as exc:
            raise ConfigError(f"connections.combos: bad triple {item!r}") from exc
        out.append((a, b, c))
    return out


def cmd_connections(values, out, seed):
    from .connection_lab import CompatibilityRow, Combo, compatibility_check, connection_suite, default_vectors

    suites = [s.strip() for s in values["connections.suites"].split(",") if s.strip()]
    if not suites:
        rep = Report("connections")
        out.csv("connections.csv", ["connection", "metric", "h", "lhs", "rhs", "rel_err"], [])
        out.report("connections_checks.csv", rep)
        return rep
    grid = make_grid(values)
    phi = make_field(values, grid, seed)
    band = _number(values, "field.band_limit", int)
    vectors = default_vectors(grid, seed + 1, band)
    cfg = make_solver(values)
    h = _number(values, "connections.h")
    combos = _combos(values)
    affine = [c for c in combos if abs(sum(c) - 1.0) < 1e-12]
    rep, rows = connection_suite(phi, vectors, cfg, h, combos=tuple(affine) or ((0.2, 0.3, 0.5),))
    for c in combos:
        if c in affine:
            continue
        row = compatibility_check(Combo(*c), "Dirichlet", phi, *vectors, cfg=cfg, h=h)
        rows.append(row)
        rep.add(f"compatibility {row.connection} (a+b+c != 1) fails", 1, row.rel_err, 1e-3, expect_fail=True)
    keep = {"metric": "metric", "compatibility": "compatibility", "torsion": "torsion",
            "contorsion": ("contorsion", "S transfer", "K(", "P^D")}
    unknown = [s for s in suites if s not in keep]
    if unknown:
        raise ConfigError(f"connections.suites: unknown suite(s) {unknown}")
    selected = Report(rep.title)
    for r in rep.results:
        for s in suites:
            marks = keep[s] if isinstance(keep[s], tuple) else (keep[s],)
            if any(mk in r.name for mk in marks):
                selected.results.append(r)
                break
    out.csv("connections.csv", ["connection", "metric", "h", "lhs", "rhs", "rel_err"],
            [[r.connection, r.metric, r.h, r.lhs, r.rhs, r.rel_err] for r in rows
             if isinstance(r, CompatibilityRow)])
    out.report("connections_checks.csv", selected)
    return selected


def _flow_kind(text):
    from .flow_engine import ENERGIES, FLOW_KINDS, FLOW_METRICS

    text = text.strip()
    if text in FLOW_KINDS:
        return text
    if ":" in text:
        functional, metric = (part.strip() for part in text.split(":", 1))
        if functional in ENERGIES and metric in FLOW_METRICS:
            return (functional, metric)
    raise ConfigError(f"flow.kind: unknown flow {text!r}")


def cmd_flow(values, out, seed):
    from .flow_engine import FLOW_HEADER, FlowSpec, run_flow
    from .torus_field import save_field

    grid = make_grid(values)
    phi = make_field(values, grid, seed)
    kind = _flow_kind(values["flow.kind"])
    dt = _number(values, "flow.dt")
    if not dt > 0:
        raise ConfigError("flow.dt must be positive")
    try:
        spec = FlowSpec(kind, dt, _number(values, "flow.steps", int),
                        _number(values, "flow.monitor_every", int),
                        _number(values, "flow.snapshot_every", int))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    result = run_flow(spec, phi, make_solver(values))
    out.csv("flow_monitor.csv", FLOW_HEADER, [r.row() for r in result.records])
    for step, form in result.snapshots:
        save_field(out.path(f"snapshot_{step:06d}.g2f"), form)
    t = result.column("t")
    svg_line_plot(out.path("flow_energies.svg"),
                  {name: (t, result.column(attr)) for name, attr in
                   (("EL", "el"), ("ED", "ed"), ("EM", "em"))},
                  f"energies along {values['flow.kind']} flow", "t", "energy", log_y=True)
    svg_line_plot(out.path("flow_volume.svg"), {"Vol": (t, result.column("vol"))},
                  f"volume along {values['flow.kind']} flow", "t", "Vol")
    return flow_report(kind, result)


def flow_report(kind, result):
    """Monotonicity and closedness checks for a finished flow run."""
    rep = Report("flow")
    vol = result.column("vol")
    rep.add("closedness |d phi| <= 1e-9", len(vol), float(result.column("closedness").max()), 1e-9)
    if kind in ("Laplacian", "PiD", "BiLaplacian"):
        drops = np.maximum(-np.diff(vol), 0.0)
        rep.add("Vol nondecreasing", len(vol) - 1, float(drops.max()) if drops.size else 0.0, 0.0)
    else:
        name = "ED" if kind == "DirichletL" else kind[0]
        values = result.column(name.lower())
        rises = np.diff(values) / np.maximum(values[:-1], 1e-300)
        rep.add(f"{name} nonincreasing (slack 1e-10 per step)", len(values) - 1,
                float(max(rises.max(), 0.0)) if rises.size else 0.0, 1e-10)
    return rep


def cmd_geodesic(values, out, seed):
    from .flow_engine import GeodesicState, geodesic_integrate
    from .torus_field import random_exact_3form

    grid = make_grid(values)
    phi = make_field(values, grid, seed)
    dt = _number(values, "geodesic.dt")
    total = _number(values, "geodesic.T")
    if not dt > 0 or not total > 0:
        raise ConfigError("geodesic.dt and geodesic.T must be positive")
    conns = [c.strip() for c in values["geodesic.connection"].split(",") if c.strip()]
    if any(c not in ("DD", "DL", "DM") for c in conns):
        raise ConfigError(f"geodesic.connection: expected DD, DL or DM, got {values['geodesic.connection']!r}")
    band = _number(values, "field.band_limit", int)
    velocity = random_exact_3form(grid, seed + 1, band).X * _number(values, "geodesic.speed_scale")
    tol = _number(values, "geodesic.drift_tol")
    cfg = make_solver(values)
    rep = Report("geodesics")
    rows, series = [], {}
    for conn in conns:
        res = geodesic_integrate(GeodesicState(phi, velocity, conn), total, dt, cfg)
        s = np.asarray(res.speeds)
        drift = np.abs(s - s[0]) / abs(s[0])
        rows.extend([conn, t, sp, dr] for t, sp, dr in zip(res.times, s, drift))
        series[conn] = (res.times, drift)
        rep.add(f"{conn} speed drift over [0, {total:g}] at dt={dt:g}", len(s), res.relative_drift, tol)
    out.csv("geodesic.csv", ["connection", "t", "speed", "relative_drift"], rows)
    svg_line_plot(out.path("geodesic_speed.svg"), series, "relative speed drift", "t", "drift", log_y=True)
    return rep


def cmd_curvature(values, out, seed):
    from .curvature import CURVATURE_HEADER, curvature_suite, report_rows

    grid = make_grid(values)
    phi = make_field(values, grid, seed)
    rep = curvature_suite(phi, lams=tuple(_numbers(values, "curvature.lambdas")), seed=seed)
    out.csv("curvature.csv", CURVATURE_HEADER, report_rows(rep, phi.grid))
    return rep


COMMANDS = {
    "verify-identities": cmd_verify_identities,
    "verify-variations": cmd_verify_variations,
    "connections": cmd_connections,
    "flow": cmd_flow,
    "geodesic": cmd_geodesic,
    "curvature": cmd_curvature,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="g2lab", description="Closed G2 structure experiments on flat tori.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--out", default="g2lab_out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp line in CSV files")
        if name == "verify-identities":
            p.add_argument("--corrupt-psi", type=float, default=None,
                           help="perturb psi by this amount (negative control; checks must fail)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        values = load_config(args.config, args.command)
        if getattr(args, "corrupt_psi", None) is not None:
            values["identities.corrupt_psi"] = str(args.corrupt_psi)
        seed = args.seed if args.seed is not None else _number(values, "seed", int)
        stamp = None if args.no_timestamp else datetime.datetime.now(datetime.timezone.utc).isoformat()
        out = Output(args.out, stamp)
        rep = COMMANDS[args.command](values, out, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except G2LabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(rep.to_text(), end="")
    ok = rep.all_passed
    print("ALL PASS" if ok else "SOME CHECKS FAILED")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
