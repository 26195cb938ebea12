"""Command line front end.

Parses a JSON job configuration, dispatches to the expansion engines and
the direct 2D solver, and writes CSV tables, convergence reports, and plot
files.  All output is deterministic and written atomically after every
sweep point has completed.

Subcommands:
  predict   per-mode eigenvalue series (JSON) plus an evaluation table
  direct    direct-solver sweep as CSV
  validate  prediction vs direct: full CSV, slope report, plot data, SVG
  scatter   scattering constant with stability and resonance diagnostics
"""

import argparse
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .adiabatic import adiabatic_expansion, product_family  # noqa: E402
from .ends import (EndDomain, ends_quasieigenvalue,  # noqa: E402
                   nonresonance_check, scattering_constant,
                   scattering_constant_refined, straight_end, trapezoid_end)
from .errors import ConfigError, QuasimodeError  # noqa: E402
from .numerics import Grid1D  # noqa: E402
from .oracle2d import (RectangleFamily, rasterize,  # noqa: E402
                       richardson_eigs, ValidationRecord, convergence_slope)
from .regular import perturbation_series, stretch_family  # noqa: E402
from .thinshape import (ThicknessProfile, ellipse_profile,  # noqa: E402
                        variable_expansion)

CSV_HEADER = "h,m,lambda_pred,lambda_direct,residual,richardson_order,grid_nx,grid_ny"

_FAMILY_KEYS = {
    "regular": {"kind", "grid_n"},
    "adiabatic": {"kind", "width"},
    "thinshape": {"kind", "preset", "a_minus", "a_plus", "interval", "p"},
    "ends": {"kind", "preset", "c", "vertices", "L_trunc", "ny"},
}
_CONFIG_KEYS = {"family", "modes", "h_sweep", "order", "resolution",
                "out", "thresholds"}
_RESOLUTION_KEYS = {"spacing_x", "spacing_y_factor", "levels"}
_THRESHOLD_KEYS = {"max_abs_residual", "slope_min", "slope_max"}


def _require_keys(mapping, allowed, where):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {sorted(unknown)}")


class JobConfig:
    """Validated job description loaded from a JSON file."""

    def __init__(self, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        _require_keys(raw, _CONFIG_KEYS, "config")
        fam = raw.get("family")
        if not isinstance(fam, dict) or "kind" not in fam:
            raise ConfigError("config needs a family object with a kind")
        kind = fam["kind"]
        if kind not in _FAMILY_KEYS:
            raise ConfigError(f"unknown family kind {kind!r}")
        _require_keys(fam, _FAMILY_KEYS[kind], f"{kind} family")
        self.kind = kind
        self.family_params = dict(fam)

        self.modes = list(raw.get("modes", [1] if kind == "ends" else [0]))
        if not self.modes or any(int(m) != m or m < 0 for m in self.modes):
            raise ConfigError("modes must be nonnegative integers")
        self.modes = [int(m) for m in self.modes]
        if kind == "ends" and any(m < 1 for m in self.modes):
            raise ConfigError("end-domain modes are indexed from 1")

        sweep = raw.get("h_sweep", [])
        self.h_sweep = [float(h) for h in sweep]
        if any(h <= 0 for h in self.h_sweep):
            raise ConfigError("h values must be positive")
        if any(b >= a for a, b in zip(self.h_sweep, self.h_sweep[1:])):
            raise ConfigError("h sweep must be strictly decreasing")

        self.order = int(raw.get("order", 2))
        if self.order < 0:
            raise ConfigError("order must be nonnegative")

        res = raw.get("resolution", {})
        _require_keys(res, _RESOLUTION_KEYS, "resolution")
        self.spacing_x = res.get("spacing_x")
        self.spacing_y_factor = float(res.get("spacing_y_factor", 32))
        self.levels = int(res.get("levels", 3))

        thr = raw.get("thresholds", {})
        _require_keys(thr, _THRESHOLD_KEYS, "thresholds")
        self.thresholds = thr

        self.out = raw.get("out")

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                raw = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls(raw)

    def profile(self):
        p = self.family_params
        if p.get("preset") == "ellipse":
            return ellipse_profile()
        try:
            lo, hi = p["interval"]
            return ThicknessProfile(p["a_minus"], p["a_plus"], (lo, hi),
                                    p=int(p.get("p", 1)))
        except KeyError as exc:
            raise ConfigError(f"thinshape family needs {exc}") from exc

    def end_domain(self):
        p = self.family_params
        kwargs = {}
        if "L_trunc" in p:
            kwargs["L_trunc"] = float(p["L_trunc"])
        if "ny" in p:
            kwargs["ny"] = int(p["ny"])
        preset = p.get("preset")
        if preset == "straight":
            return straight_end(float(p.get("c", 1.0)), **kwargs)
        if preset == "trapezoid":
            return trapezoid_end(**kwargs)
        if preset is not None:
            raise ConfigError(f"unknown end preset {preset!r}")
        if "vertices" not in p:
            raise ConfigError("ends family needs vertices or a preset")
        return EndDomain(p["vertices"], **kwargs)

    def oracle_family(self):
        if self.kind == "adiabatic":
            return RectangleFamily(float(self.family_params.get("width", 1.0)))
        if self.kind == "thinshape":
            return self.profile()
        if self.kind == "ends":
            return self.end_domain()
        raise ConfigError(
            f"the {self.kind} family has no 2D direct-solver counterpart")


def predict_series(config, m):
    """Eigenvalue series for mode m of the configured family."""
    if config.kind == "regular":
        n = int(config.family_params.get("grid_n", 400))
        grid = Grid1D(0.0, 1.0, n)
        fam = stretch_family(grid, config.order + 1, mode_index=m)
        return perturbation_series(fam, config.order).lambda_series
    if config.kind == "adiabatic":
        width = float(config.family_params.get("width", 1.0))
        base = Grid1D(0.0, width, 300)
        fibre = Grid1D(0.0, 1.0, 300)
        fam = product_family(base, fibre)
        return adiabatic_expansion(fam, m, config.order).lambda_series
    if config.kind == "thinshape":
        return variable_expansion(config.profile(), m, config.order).lambda_series
    if config.kind == "ends":
        dom = config.end_domain()
        a = scattering_constant(dom)
        return ends_quasieigenvalue(a, m, 1.0)[1]
    raise ConfigError(f"unknown family kind {config.kind!r}")


def _direct_point(config, h):
    """Richardson-extrapolated direct eigenvalues at one sweep point.

    Returns (values, orders, nx, ny) with one entry per configured mode;
    the grid shape is that of the finest level.
    """
    family = config.oracle_family()
    count = max(config.modes) + (0 if config.kind == "ends" else 1)
    res = richardson_eigs(family, h, count, levels=config.levels,
                          spacing_x=config.spacing_x,
                          spacing_y=h / config.spacing_y_factor)
    fine = rasterize(family, h, spacing_x=config.spacing_x,
                     spacing_y=h / (config.spacing_y_factor
                                    * 2 ** (config.levels - 1)))
    offset = 1 if config.kind == "ends" else 0
    values = [res.values[m - offset] for m in config.modes]
    orders = [res.orders[m - offset] for m in config.modes]
    return values, orders, fine.nx, fine.ny


def _run_sweep(config, jobs, seedless):
    """All direct sweep points, optionally dispatched concurrently.

    The dispatch order is irrelevant to the (sorted, deterministic) output;
    with --seedless it is shuffled from OS entropy, exercising the
    order-independence.
    """
    hs = list(config.h_sweep)
    order = np.arange(len(hs))
    if seedless:
        np.random.default_rng().shuffle(order)
    results = {}
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futs = {hs[i]: pool.submit(_direct_point, config, hs[i])
                    for i in order}
            for h, fut in futs.items():
                results[h] = fut.result()
    else:
        for i in order:
            results[hs[i]] = _direct_point(config, hs[i])
    return results


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def _csv_text(rows):
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _atomic_write(path, text):
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _save_svg(fig, path):
    plt.rcParams["svg.hashsalt"] = "quasimodes"
    fd, tmp = tempfile.mkstemp(suffix=".svg",
                               dir=os.path.dirname(path) or ".")
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg", metadata={"Date": None})
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def cmd_predict(config, out_dir):
    series_by_mode = {m: predict_series(config, m) for m in config.modes}
    for m, ser in series_by_mode.items():
        _atomic_write(os.path.join(out_dir, f"series_m{m}.json"),
                      ser.to_json() + "\n")
    lines = ["h" + "".join(f"  lambda(m={m})".rjust(22)
                           for m in config.modes)]
    for h in config.h_sweep:
        row = _fmt(h)
        for m in config.modes:
            row += _fmt(series_by_mode[m].evaluate(h)).rjust(22)
        lines.append(row)
    _atomic_write(os.path.join(out_dir, "predict_table.txt"),
                  "\n".join(lines) + "\n")
    return 0


def cmd_direct(config, out_dir, jobs, seedless):
    results = _run_sweep(config, jobs, seedless)
    rows = []
    for h in config.h_sweep:
        values, orders, nx, ny = results[h]
        for m, v, o in zip(config.modes, values, orders):
            rows.append((h, m, None, v, None, o, nx, ny))
    _atomic_write(os.path.join(out_dir, "direct.csv"), _csv_text(rows))
    return 0


def cmd_validate(config, out_dir, jobs, seedless):
    series_by_mode = {m: predict_series(config, m) for m in config.modes}
    results = _run_sweep(config, jobs, seedless)
    rows = []
    records = {m: [] for m in config.modes}
    for h in config.h_sweep:
        values, orders, nx, ny = results[h]
        for m, v, o in zip(config.modes, values, orders):
            pred = series_by_mode[m].evaluate(h)
            rec = ValidationRecord(h, m, pred, v, nx=nx, ny=ny)
            records[m].append(rec)
            rows.append((h, m, pred, v, rec.residual, o, nx, ny))
    _atomic_write(os.path.join(out_dir, "validate.csv"), _csv_text(rows))

    report = []
    slopes = {}
    for m in config.modes:
        recs = records[m]
        dat = "\n".join(f"{_fmt(r.h)} {_fmt(abs(r.residual))}"
                        for r in recs) + "\n"
        _atomic_write(os.path.join(out_dir, f"residuals_m{m}.dat"), dat)
        if len(recs) >= 3:
            fit = convergence_slope(recs)
            slopes[m] = fit
            report.append(f"mode {m}: fitted residual order "
                          f"{fit.slope:.3f} in [{fit.interval[0]:.3f}, "
                          f"{fit.interval[1]:.3f}]"
                          + (" (residual sign changes)"
                             if fit.sign_change else ""))
        else:
            report.append(f"mode {m}: sweep too short for a slope fit")
        for r in recs:
            report.append(f"  h={_fmt(r.h)}  residual={_fmt(r.residual)}")
    fig, ax = plt.subplots(figsize=(5, 4))
    for m in config.modes:
        hs = [r.h for r in records[m]]
        res = [abs(r.residual) for r in records[m]]
        ax.loglog(hs, res, "o-", label=f"m={m}")
    ax.set_xlabel("h")
    ax.set_ylabel("|residual|")
    ax.legend()
    _save_svg(fig, os.path.join(out_dir, "residuals.svg"))

    status = 0
    thr = config.thresholds
    if "max_abs_residual" in thr:
        worst = max(abs(r.residual) for recs in records.values()
                    for r in recs)
        ok = worst <= thr["max_abs_residual"]
        report.append(f"threshold max_abs_residual: worst {_fmt(worst)} "
                      f"{'pass' if ok else 'FAIL'}")
        status |= 0 if ok else 1
    for key, cmp in (("slope_min", lambda s, v: s >= v),
                     ("slope_max", lambda s, v: s <= v)):
        if key in thr:
            for m, fit in slopes.items():
                ok = cmp(fit.slope, thr[key])
                report.append(f"threshold {key} mode {m}: "
                              f"{'pass' if ok else 'FAIL'}")
                status |= 0 if ok else 1
    text = "\n".join(report) + "\n"
    _atomic_write(os.path.join(out_dir, "report.txt"), text)
    sys.stdout.write(text)
    return status


def cmd_scatter(config, out_dir):
    if config.kind != "ends":
        raise ConfigError("scatter needs an ends family")
    dom = config.end_domain()
    res = nonresonance_check(dom)
    lines = [
        f"non-resonance: {res.status} "
        f"(sigma_min {_fmt(res.sigma_min)}, nearest eigenvalue "
        f"{_fmt(res.nearest_eigenvalue)}, system norm {_fmt(res.system_norm)})",
    ]
    if res.status == "clear":
        a = scattering_constant(dom, check_stability=False)
        a_ref = scattering_constant_refined(dom)
        a_long = scattering_constant(dom.with_truncation(dom.L_trunc + 1.0),
                                     check_stability=False)
        lines += [
            f"scattering constant a = {_fmt(a_ref)} (grid-extrapolated)",
            "truncation stability:",
            f"  L = {_fmt(dom.L_trunc)}   a = {_fmt(a)}",
            f"  L = {_fmt(dom.L_trunc + 1)}   a = {_fmt(a_long)}",
            f"  drift {_fmt(abs(a_long - a))}",
        ]
    else:
        lines.append("scattering constant withheld: the surgery problem is "
                     "not reliably solvable near a threshold resonance")
    text = "\n".join(lines) + "\n"
    _atomic_write(os.path.join(out_dir, "scatter_report.txt"), text)
    sys.stdout.write(text)
    return 0 if res.status == "clear" else 3


def _parser():
    p = argparse.ArgumentParser(
        prog="qml",
        description="eigenvalue expansions for thin planar domains, with a "
                    "direct finite-difference cross-check")
    p.add_argument("command",
                   choices=["predict", "direct", "validate", "scatter"])
    p.add_argument("--config", required=True, help="JSON job configuration")
    p.add_argument("--out", default=None, help="output directory "
                   "(QML_OUT overrides)")
    p.add_argument("--jobs", type=int, default=1,
                   help="concurrent sweep points")
    p.add_argument("--seedless", action="store_true",
                   help="draw incidental randomness (dispatch order) from "
                   "OS entropy instead of a fixed seed; results unchanged")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        config = JobConfig.load(args.config)
        out_dir = os.environ.get("QML_OUT") or args.out or config.out or "."
        os.makedirs(out_dir, exist_ok=True)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        if args.command == "predict":
            return cmd_predict(config, out_dir)
        if args.command == "direct":
            return cmd_direct(config, out_dir, args.jobs, args.seedless)
        if args.command == "validate":
            return cmd_validate(config, out_dir, args.jobs, args.seedless)
        return cmd_scatter(config, out_dir)
    except QuasimodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
