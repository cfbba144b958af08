"""Command-line front end: `solve` runs the continuation and writes artifacts,
`oracle` prints exact reference trees, `compare` scores a finished run.

Config files are flat INI text with [domain], [measure], [schedule], and
[output] sections; see the README for a worked example.  Exit codes: 0 ok,
1 config error, 2 solver non-convergence, 3 failed comparison thresholds.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, optimizer, steiner
from .core import (
    ConvexPolygon,
    DiscreteMeasure,
    Domain,
    GeometryError,
    ParameterError,
    ScalarField,
    dump_field,
    dump_polyline,
    load_field,
    make_params,
)
from .geodesic import distance_field


class ConfigError(ValueError):
    pass


def _parse_points(text: str) -> np.ndarray:
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        xy = [float(v) for v in chunk.split(",")]
        if len(xy) != 2:
            raise ConfigError(f"expected 'x,y' pair, got {chunk!r}")
        pts.append(xy)
    if not pts:
        raise ConfigError("empty point list")
    return np.array(pts)


def _parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def load_config(path) -> dict:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    try:
        dom_sec = cp["domain"]
        mea_sec = cp["measure"]
        sch_sec = cp["schedule"]
    except KeyError as err:
        raise ConfigError(f"missing config section {err}") from err

    cfg = {
        "omega0": _parse_points(dom_sec.get("omega0", "0,0; 1,0; 1,1; 0,1")),
        "grid": dom_sec.getint("grid", 129),
        "eta0_factor": dom_sec.getfloat("eta0_factor", fallback=None),
        "base_point": _parse_points(mea_sec["base_point"])[0],
        "atoms": _parse_points(mea_sec["atoms"]),
        "weights": _parse_floats(mea_sec.get("weights", "")),
        "epsilons": _parse_floats(sch_sec["epsilons"]),
        "lambdas": _parse_floats(sch_sec.get("lambdas", sch_sec["epsilons"])),
        "beta_exp": sch_sec.getfloat("beta_exp", 1.5),
        "tol": sch_sec.getfloat("tol", 1e-6),
        "max_iter": sch_sec.getint("max_iter", 200),
        "threshold": sch_sec.getfloat("threshold", 0.5),
        "out_dir": cp.get("output", "dir", fallback="run_out"),
    }
    if not cfg["weights"]:
        cfg["weights"] = [1.0] * len(cfg["atoms"])
    if len(cfg["weights"]) != len(cfg["atoms"]):
        raise ConfigError("weights and atoms must have matching lengths")
    if not (1.0 < cfg["beta_exp"] < 2.0):
        raise ConfigError(
            f"beta_exp must lie in the open interval (1, 2), got {cfg['beta_exp']}"
        )
    if len(cfg["lambdas"]) != len(cfg["epsilons"]):
        raise ConfigError("epsilons and lambdas must have matching lengths")
    return cfg


def serialize_config(cfg: dict) -> str:
    cp = configparser.ConfigParser()
    cp["domain"] = {
        "omega0": "; ".join(f"{float(x)!r},{float(y)!r}" for x, y in cfg["omega0"]),
        "grid": str(cfg["grid"]),
    }
    if cfg.get("eta0_factor") is not None:
        cp["domain"]["eta0_factor"] = repr(cfg["eta0_factor"])
    cp["measure"] = {
        "base_point": f"{float(cfg['base_point'][0])!r},{float(cfg['base_point'][1])!r}",
        "atoms": "; ".join(f"{float(x)!r},{float(y)!r}" for x, y in cfg["atoms"]),
        "weights": ", ".join(repr(float(w)) for w in cfg["weights"]),
    }
    cp["schedule"] = {
        "epsilons": ", ".join(repr(float(e)) for e in cfg["epsilons"]),
        "lambdas": ", ".join(repr(float(l)) for l in cfg["lambdas"]),
        "beta_exp": repr(cfg["beta_exp"]),
        "tol": repr(cfg["tol"]),
        "max_iter": str(cfg["max_iter"]),
        "threshold": repr(cfg["threshold"]),
    }
    cp["output"] = {"dir": str(cfg["out_dir"])}
    import io

    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def build_problem(cfg: dict):
    poly = ConvexPolygon(cfg["omega0"])
    eta0 = None
    if cfg.get("eta0_factor") is not None:
        eta0 = cfg["eta0_factor"] * poly.diameter()
    dom = Domain.build(poly, cfg["grid"], eta0=eta0)
    mu = DiscreteMeasure(cfg["atoms"], cfg["weights"], cfg["base_point"])
    mu.validate_inside(poly)
    h = dom.grid.spacing_min
    eps_min = min(cfg["epsilons"])
    if h > eps_min / 3.0:
        import warnings

        warnings.warn(
            f"grid step {h:.4g} exceeds epsilon/3 = {eps_min / 3.0:.4g}; "
            "interface quantities will be under-resolved", stacklevel=2)
    return dom, mu


def _oracle_points(cfg: dict):
    pts = [tuple(cfg["base_point"])] + [tuple(a) for a in cfg["atoms"]]
    uniq = []
    for p in pts:
        if all(np.hypot(p[0] - q[0], p[1] - q[1]) > 1e-12 for q in uniq):
            uniq.append(p)
    return uniq


def run_solve(config_path, out_dir=None, seed: int = 0) -> int:
    try:
        cfg = load_config(config_path)
        if out_dir is not None:
            cfg["out_dir"] = str(out_dir)
        dom, mu = build_problem(cfg)
    except (ConfigError, GeometryError, ParameterError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1

    np.random.seed(seed)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)

    schedule = list(zip(cfg["epsilons"], cfg["lambdas"]))
    try:
        traces = optimizer.continuation(
            mu, dom, schedule, cfg["beta_exp"], tol=cfg["tol"],
            max_iter=cfg["max_iter"])
    except Exception as err:  # solver-level failure
        print(f"solver error: {err}", file=sys.stderr)
        return 2

    final = traces[-1]
    doc = {
        "seed": seed,
        "threshold": cfg["threshold"],
        "rungs": [t.to_dict() for t in traces],
        "final": {
            "field_ref": "field_final.txt",
            "curves": [f"curve_{i:02d}.txt" for i in range(len(final.bundle))],
        },
    }
    (out / "trace.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    with open(out / "trace.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["rung", "k", "total", "diffuse", "geodesic", "length",
                     "replacements", "cg_iters"])
        for rung, t in enumerate(traces):
            for r in t.records:
                wr.writerow([rung, r.k, repr(float(r.total)), repr(float(r.diffuse)),
                             repr(float(r.geodesic)), repr(float(r.length)),
                             r.replacements, r.cg_iters])

    dump_field(final.u, out / "field_final.txt")
    for i, c in enumerate(final.bundle):
        dump_polyline(c, out / f"curve_{i:02d}.txt")
    sub = analysis.sublevel_set(final.u, cfg["threshold"], dom)
    with open(out / "sublevel.txt", "w") as fh:
        for x, y in sub:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
    (out / "config.ini").write_text(serialize_config(cfg))

    oracle_pts = _oracle_points(cfg)
    tree = None
    if 2 <= len(oracle_pts) <= 4:
        tree = steiner.exact_steiner(oracle_pts)
        (out / "oracle.json").write_text(
            json.dumps(tree.to_dict(), indent=2, sort_keys=True))

    _plot(out, dom, mu, final, cfg["threshold"], tree, seed)

    not_conv = [i for i, t in enumerate(traces) if not t.converged]
    if not_conv:
        print(f"rungs not converged: {not_conv}", file=sys.stderr)
        return 2
    for t in traces:
        r = t.records[-1]
        print(f"eps={t.params.epsilon:g} lam={t.params.lam:g} "
              f"total={r.total:.6f} diffuse={r.diffuse:.6f} "
              f"geodesic={r.geodesic:.6f} iters={r.k + 1}")
    return 0


def _plot(out: Path, dom, mu, final, threshold, tree, seed) -> None:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = str(seed)
    import matplotlib.pyplot as plt

    g = dom.grid
    xs = g.x0 + g.hx * np.arange(g.nx)
    ys = g.y0 + g.hy * np.arange(g.ny)
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.contourf(xs, ys, final.u.values, levels=21, cmap="viridis")
    ax.contour(xs, ys, final.u.values, levels=[threshold], colors="white",
               linewidths=1.0)
    for c in final.bundle:
        ax.plot(c.points[:, 0], c.points[:, 1], "r-", lw=1.0)
    if tree is not None:
        for i, j in tree.edges:
            a, b = tree.nodes[i], tree.nodes[j]
            ax.plot([a[0], b[0]], [a[1], b[1]], "w--", lw=0.8)
    ax.plot(mu.atoms[:, 0], mu.atoms[:, 1], "k^", ms=6)
    ax.plot([mu.base_point[0]], [mu.base_point[1]], "ks", ms=6)
    poly = np.vstack([dom.omega0.vertices, dom.omega0.vertices[:1]])
    ax.plot(poly[:, 0], poly[:, 1], "k:", lw=0.8)
    ax.set_aspect("equal")
    fig.savefig(out / "plot.svg")
    plt.close(fig)


DEFAULT_THRESHOLDS = {
    "energy_rel": 0.10,
    "energy_kind": "diffuse",
    "hausdorff_cells": 4.0,
    "distfield_sup": 0.1,
    "farfield_max": 0.02,
    "farfield_dist": 0.2,
}


def run_compare(run_dir, thresholds_path=None) -> int:
    run = Path(run_dir)
    needed = [run / "trace.json", run / "field_final.txt", run / "config.ini"]
    if any(not p.exists() for p in needed):
        print(f"missing artifacts in {run}", file=sys.stderr)
        return 1
    th = dict(DEFAULT_THRESHOLDS)
    if thresholds_path is not None:
        cp = configparser.ConfigParser()
        cp.read(thresholds_path)
        sec = cp["thresholds"]
        for key in th:
            if key in sec:
                th[key] = sec.get(key) if key == "energy_kind" else sec.getfloat(key)

    cfg = load_config(run / "config.ini")
    dom, mu = build_problem(cfg)
    doc = json.loads((run / "trace.json").read_text())
    last = doc["rungs"][-1]
    rec = last["iterations"][-1]
    params = make_params(last["params"]["lambda"], last["params"]["beta_exp"],
                         last["params"]["epsilon"])
    u = load_field(run / "field_final.txt")

    oracle_pts = _oracle_points(cfg)
    if not (2 <= len(oracle_pts) <= 4):
        print("compare needs 2 to 4 distinct terminals", file=sys.stderr)
        return 1
    tree = steiner.exact_steiner(oracle_pts)
    h = dom.grid.spacing_min
    samples = tree.sample_points(h / 2.0)

    report: dict = {"oracle_length": tree.length}
    failures = []

    e_final = rec[th["energy_kind"]] if th["energy_kind"] in rec else rec["total"]
    report["energy_kind"] = th["energy_kind"]
    report["energy"] = e_final
    report["energy_rel_err"] = abs(e_final - tree.length) / tree.length
    if report["energy_rel_err"] > th["energy_rel"]:
        failures.append("energy")

    sub = analysis.sublevel_set(u, doc["threshold"], dom)
    if sub.shape[0] == 0:
        report["sublevel_empty"] = True
        failures.append("sublevel_empty")
    else:
        report["hausdorff"] = analysis.hausdorff(sub, samples)
        if report["hausdorff"] > th["hausdorff_cells"] * h:
            failures.append("hausdorff")

    w = ScalarField(dom.grid, params.delta + u.values**2)
    df = distance_field(w, mu.base_point, dom)
    report["distfield_sup"] = analysis.compare_distance_fields(df, samples, dom)
    if report["distfield_sup"] > th["distfield_sup"]:
        failures.append("distfield")

    from .geodesic import distance_to_set

    dist = distance_to_set(samples, dom).values
    far = dist >= th["farfield_dist"]
    report["farfield_max"] = float(np.abs(1.0 - u.values[far]).max()) if far.any() else 0.0
    if report["farfield_max"] > th["farfield_max"]:
        failures.append("farfield")

    report["failures"] = failures
    (run / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    for key in ("oracle_length", "energy", "energy_rel_err", "hausdorff",
                "distfield_sup", "farfield_max"):
        if key in report:
            print(f"{key}: {report[key]}")
    if failures:
        print(f"threshold failures: {failures}", file=sys.stderr)
        return 3
    return 0


def run_oracle(points_text: str) -> int:
    try:
        pts = _parse_points(points_text)
        if not (2 <= len(pts) <= 4):
            raise ConfigError("oracle needs 2 to 4 points")
        tree = steiner.exact_steiner(pts)
    except (ConfigError, steiner.OracleError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(json.dumps(tree.to_dict(), indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="steinerpf")
    sub = ap.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run the continuation solver")
    ps.add_argument("--config", action="append", required=True,
                    help="config file; repeat for a parallel sweep")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", default=None)

    po = sub.add_parser("oracle", help="print the exact reference tree")
    po.add_argument("--points", required=True, help='"x1,y1; x2,y2; ..."')

    pc = sub.add_parser("compare", help="score a finished run")
    pc.add_argument("--run", required=True)
    pc.add_argument("--thresholds", default=None)

    args = ap.parse_args(argv)
    if args.command == "oracle":
        return run_oracle(args.points)
    if args.command == "compare":
        return run_compare(args.run, args.thresholds)

    configs = args.config
    if len(configs) == 1:
        return run_solve(configs[0], out_dir=args.out, seed=args.seed)
    workers = int(os.environ.get("STEINER_THREADS", os.cpu_count() or 1))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        codes = list(pool.map(lambda c: run_solve(c, seed=args.seed), configs))
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
