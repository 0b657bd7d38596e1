"""Command line front end.

    scatphase run CONFIG [--output DIR]
    scatphase defaults [--mode MODE]
    scatphase dump-matrix CONFIG --lam LAM OUT

Exit status: 0 success, 1 configuration error, 2 every frequency failed,
3 some frequencies failed.
"""
from __future__ import annotations

import argparse
import logging
import math
from pathlib import Path
import sys
import time

import numpy as np

from . import __version__
from .config import MODES, THREADS_ENV, ConfigError, RunConfig, parse_config, resolve_lambdas, write_manifest

log = logging.getLogger("scatphase")

EXIT_OK, EXIT_CONFIG, EXIT_ALL_FAILED, EXIT_PARTIAL = 0, 1, 2, 3

_TEMPLATE = """\
# scatphase run configuration; '#' starts a comment
[run]
mode = {mode}            # sweep | validate-disc | convergence-table | asymptotics-only
output = out
threads = 1              # overridden by ${env}

[shape]
name = {shape}           # disk, ellipse, star, square, rectangle, regular_polygon, two_disks, ...
{shape_params}
# mesh = mesh.txt        # fixed external mesh (ASCII format), reused for every lambda

[grid]
lambda_min = 0.3
lambda_max = 10
count = 50
# lambdas = 1 2 3        # explicit list instead of min/max/count
# refine = 4.8 5.0 21 300   # 'lo hi count mu' intervals, ';' separated

[solver]
mu = 30                  # mu (1 + lam^(1/4)) points per wavelength
pml_width = 5h           # '5h' (five cells) or a width
N = 10lambda             # 'c lambda' rule such as '10lambda', or a fixed number of angles
N_min = 20
h_max = auto             # 'auto' (0.1 circumradius), 'none' or a length
solver = auto            # auto | sparse | circulant
# R_DOM = 2.0            # default: twice the circumradius

[phase]
capacity = {capacity}    # 'auto' (disk only), 'estimate' or a number
{validate}"""


def _template(mode):
    disk = mode in ("validate-disc", "convergence-table")
    validate = ""
    if disk:
        lams, mus = ("10", "20") if mode == "validate-disc" else ("10 20", "1 5 10 15 20")
        validate = f"\n[validate]\nlambdas = {lams}\nmus = {mus}\nNs = 100\n"
    return _TEMPLATE.format(mode=mode, env=THREADS_ENV, shape="disk" if disk else "star",
                            shape_params="a = 1.0" if disk else "a = 1.0\neps = 0.3\nk = 5",
                            capacity="auto" if disk else "estimate", validate=validate)


def _capacity(cfg: RunConfig):
    from .asymptotics import capacity_disc, estimate_capacity

    if cfg.capacity == "auto":
        if cfg.shape.is_disk:
            return capacity_disc(cfg.shape.params.get("a", 1.0))
        return None
    if cfg.capacity == "estimate":
        return estimate_capacity(cfg.shape)
    return float(cfg.capacity)


def _derived(cfg, model, capacity):
    from .asymptotics import WEYL3_IS_CONJECTURAL

    return {"area": model.area, "perimeter": model.perimeter,
            "corner_term": model.constant_term + model.curvature_integral / (24 * math.pi),
            "curvature_term": -model.curvature_integral / (24 * math.pi),
            "weyl3_constant": model.constant_term,
            "weyl3_conjectural": "yes" if WEYL3_IS_CONJECTURAL else "no",
            "capacity": "none" if capacity is None else repr(float(capacity))}


def _run_sweep(cfg, out, model, capacity):
    from .asymptotics import breit_wigner, weyl2, weyl2_deriv, weyl3
    from .phase import integrate_sigma, sweep
    from .report import SWEEP_COLUMNS, plot_sweep, write_csv

    lams = resolve_lambdas(cfg)
    params = cfg.solver_params()

    def progress(pt):
        status = f"failed: {pt.message}" if pt.failed else f"sigma'={pt.value:.8g} |Im/Re|={pt.unitarity_residual:.2e}"
        log.info("lambda=%.6g N=%d mu=%g %s", pt.lam, pt.N, pt.mu, status)

    points = sweep(cfg.shape, lams, params, workers=cfg.threads, progress=progress)
    failed = sum(p.failed for p in points)
    sp = np.array([p.value if not p.failed else np.nan for p in points])
    if failed < len(points) and np.isfinite(sp[0]):
        curve = integrate_sigma(lams, sp, lam_min=lams[0], capacity=capacity, points=points)
        sigma = curve.sigma
    else:
        sigma = np.full(len(lams), np.nan)
        if failed < len(points):
            log.error("sigma' is missing at the first frequency; sigma is not integrated")
    w2, w3, wd = weyl2(lams, model), weyl3(lams, model), weyl2_deriv(lams, model)
    rows = [{"lambda": p.lam, "sigma_prime_re": p.raw.real, "sigma_prime_im": p.raw.imag, "sigma": s,
             "weyl2": a, "weyl3": b, "weyl2_deriv": c, "N": p.N, "mu": p.mu,
             "unitarity_residual": p.unitarity_residual if not p.failed else np.nan}
            for p, s, a, b, c in zip(points, sigma, w2, w3, wd)]
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    bw = breit_wigner(lams, model) if model.resonances else None
    plot_sweep(out / "sigma_prime.svg", out / "sigma.svg", lams, sp, sigma, w2, w3, wd, bw, title=cfg.shape_name)
    if failed == len(points):
        return EXIT_ALL_FAILED
    return EXIT_PARTIAL if failed else EXIT_OK


def _run_validate(cfg, out):
    from .disc import DiscSeriesConfig, sigma_prime_disc
    from .fem import FemError, compute_traces, trace_operator
    from .mesh import MeshError
    from .phase import AngularGrid, discretize, sigma_prime
    from .report import VALIDATE_COLUMNS, convergence_table, plot_convergence, write_csv

    a = cfg.shape.params.get("a", 1.0)
    params = cfg.solver_params(mu_overrides=False)
    rows, failed, total = [], 0, 0
    for lam in cfg.validate_lambdas:
        exact = sigma_prime_disc(lam, DiscSeriesConfig(radius=a))
        for mu in cfg.validate_mus:
            total += len(cfg.validate_Ns)
            t0 = time.perf_counter()
            try:
                space, system = discretize(cfg.shape, lam, params, mu)
                op = trace_operator(space, cfg.shape, params.trace_order)
            except (FemError, MeshError, ValueError) as exc:
                log.error("lambda=%g mu=%g failed: %s", lam, mu, exc)
                failed += len(cfg.validate_Ns)
                continue
            for N in cfg.validate_Ns:
                grid = AngularGrid(int(N))
                pt = sigma_prime(compute_traces(system, op, grid.angles), grid, mu=mu)
                err = abs(pt.value - exact) / abs(exact)
                rows.append({"lambda": lam, "mu": mu, "N": int(N), "ndof": space.ndof, "sigma_prime_re": pt.raw.real,
                             "sigma_prime_im": pt.raw.imag, "sigma_prime_exact": exact, "rel_error": err,
                             "unitarity_residual": pt.unitarity_residual})
                log.info("lambda=%g mu=%g N=%d ndof=%d rel.error=%.3e |Im/Re|=%.2e (%.1fs)", lam, mu, N,
                         space.ndof, err, pt.unitarity_residual, time.perf_counter() - t0)
    name = "validate" if cfg.mode == "validate-disc" else "convergence"
    write_csv(out / f"{name}.csv", VALIDATE_COLUMNS, rows)
    if rows:
        (out / f"{name}_table.txt").write_text(convergence_table(rows))
        plot_convergence(out / f"{name}.svg", rows)
    if failed == total:
        return EXIT_ALL_FAILED
    return EXIT_PARTIAL if failed else EXIT_OK


def _run_asymptotics(cfg, out, model):
    from .asymptotics import breit_wigner, weyl2, weyl2_deriv, weyl3
    from .report import plot_asymptotics, write_csv

    lams = resolve_lambdas(cfg)
    cols = {"lambda": lams, "weyl2": weyl2(lams, model), "weyl3": weyl3(lams, model),
            "weyl2_deriv": weyl2_deriv(lams, model)}
    if model.resonances:
        cols["breit_wigner"] = breit_wigner(lams, model)
    if cfg.shape.is_disk:
        from .disc import DiscSeriesConfig, sigma_prime_disc

        dc = DiscSeriesConfig(radius=cfg.shape.params.get("a", 1.0))
        cols["sigma_prime_disc"] = np.array([sigma_prime_disc(l, dc) for l in lams])
    names = tuple(cols)
    rows = [{k: cols[k][i] for k in names} for i in range(len(lams))]
    write_csv(out / "asymptotics.csv", names, rows)
    plot_asymptotics(out / "asymptotics.svg", lams, {k: v for k, v in cols.items() if k != "lambda"})
    return EXIT_OK


def run(cfg: RunConfig) -> int:
    from .asymptotics import model_from_shape, read_resonances

    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    capacity = _capacity(cfg)
    resonances = read_resonances(cfg.resonances) if cfg.resonances else ()
    model = model_from_shape(cfg.shape, capacity=capacity, resonances=resonances)
    write_manifest(cfg, out / "manifest.ini", _derived(cfg, model, capacity))
    log.info("mode=%s shape=%s output=%s", cfg.mode, cfg.shape_name, out)
    if cfg.mode == "sweep":
        return _run_sweep(cfg, out, model, capacity)
    if cfg.mode in ("validate-disc", "convergence-table"):
        return _run_validate(cfg, out)
    return _run_asymptotics(cfg, out, model)


def _dump(args) -> int:
    from .fem import dump_matrix
    from .phase import discretize

    cfg = parse_config(args.config)
    params = cfg.solver_params()
    _, system = discretize(cfg.shape, args.lam, params)
    dump_matrix(system, args.out)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="scatphase", description="Scattering phase of planar Dirichlet obstacles.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    p.add_argument("-q", "--quiet", action="store_true", help="only errors")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configuration file")
    r.add_argument("config")
    r.add_argument("--output", help="output directory (overrides run.output)")

    d = sub.add_parser("defaults", help="print a documented configuration")
    d.add_argument("--mode", choices=MODES, default="sweep")

    m = sub.add_parser("dump-matrix", help="write the system matrix as 'i j re im' lines")
    m.add_argument("config")
    m.add_argument("--lam", type=float, required=True)
    m.add_argument("out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.ERROR if args.quiet else (logging.INFO if args.verbose == 0 else logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "defaults":
        sys.stdout.write(_template(args.mode))
        return EXIT_OK
    try:
        if args.command == "dump-matrix":
            return _dump(args)
        cfg = parse_config(args.config)
        if args.output:
            cfg.output = args.output
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
