"""Command-line interface.

Subcommands::

    conewarp resolve   --group cyclic:n,k,l | --group-file F --epsilon E --out DIR
    conewarp certify   --atlas FILE [--grid N] [--tol T]
    conewarp recursion --group ... | --group-file F
    conewarp plot-data --atlas FILE --field {ricci-min|warp|margin} --out CSV

Config files are plain ``key = value`` lines (grid sizes, tolerances, search
budgets).  Exit codes: 0 pass, 1 certification failure, 2 usage/parameter
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import construct as cn
from .certify import Grid, certify_psd
from .curvature import ricci_cone_berger, ricci_local_glue, ricci_torus_invariant
from .errors import ConewarpError
from .groups import (
    cyclic_group,
    deserialize_group,
    hj_continued_fraction,
    normalize_cyclic,
    resolution_tree,
)
from .pipeline import PipelineConfig, run_full_resolution
from .warpfn import WarpFunction


def _parse_group(args):
    if getattr(args, "group", None):
        spec = args.group
        if spec.startswith("cyclic:"):
            parts = spec.split(":", 1)[1].split(",")
            if len(parts) != 3:
                raise ValueError("cyclic group spec must be cyclic:n,k,l")
            n, k, l = (int(v) for v in parts)
            return cyclic_group(n, k, l)
        raise ValueError(f"unknown group spec {spec!r} (use cyclic:n,k,l or --group-file)")
    if getattr(args, "group_file", None):
        return deserialize_group(Path(args.group_file).read_text())
    raise ValueError("one of --group or --group-file is required")


def _load_config(path):
    if not path:
        return PipelineConfig()
    mapping = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, val = line.partition("=")
        mapping[key.strip()] = val.strip()
    return PipelineConfig.from_mapping(mapping)


def cmd_resolve(args) -> int:
    group = _parse_group(args)
    cfg = _load_config(args.config)
    run = run_full_resolution(group, epsilon=args.epsilon, config=cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, atlas in run.atlases:
        (out / f"atlas_{name}.json").write_text(atlas.to_json())
        (out / f"params_{name}.txt").write_text(atlas.params.ledger_text())
    (out / "run_summary.txt").write_text(run.summary() + "\n")
    (out / "reports.json").write_text(json.dumps(
        {name: {k: json.loads(r.to_json()) for k, r in atlas.reports.items()}
         for name, atlas in run.atlases}, indent=1))
    print(run.summary())
    print(f"wrote {len(run.atlases)} atlases to {out}")
    return 0 if run.passed else 1


def cmd_recursion(args) -> int:
    group = _parse_group(args)
    tree = resolution_tree(group)
    print("\n".join(tree.as_text()))
    if group.kind == "cyclic" and not group.is_trivial:
        n, _, p = normalize_cyclic(group.n, group.k, group.l)
        if p >= 1 and n > p:
            coeffs = hj_continued_fraction(n, p)
            print(f"continued-fraction oracle: {n}/{p} = {coeffs} "
                  f"(informational exceptional-curve data)")
    return 0


def _load_atlas(path):
    return json.loads(Path(path).read_text())


def _warps_of(region):
    return {k: WarpFunction.deserialize(v) for k, v in region["warps"].items()}


def cmd_certify(args) -> int:
    data = _load_atlas(args.atlas)
    n_grid = args.grid
    tol = args.tol
    reports = []
    regions = {r["id"]: r for r in data["regions"]}
    if "edge_body" in regions:
        reg = regions["edge_body"]
        w = _warps_of(reg)
        rho, phi, f = w["rho"], w["phi"], w["f"]
        grid = Grid([(0.0, reg["data"]["r_out"]), (0.0, np.pi / 2)], [n_grid, n_grid])

        def fn(pts):
            return ricci_cone_berger(rho, phi, f, pts[:, 0], pts[:, 1]).entries

        reports.append(certify_psd(fn, grid, tol, target="edge body Ricci >= 0"))
    if "glue_collar" in regions:
        reg = regions["glue_collar"]
        w = _warps_of(reg)
        d = reg["data"]
        from .curvature import LocalGlue
        glue = LocalGlue(rho=w["rho"], n=int(d["n"]), eta1=w["eta1"], eta2=w["eta2"],
                         sigma1=d["sigma1"], sigma2=d["sigma2"], xi0=d["xi0"])
        half = d["xi0"] / 2
        ax_r = np.sort(np.concatenate([cn._sample_open(0, half, n_grid),
                                       cn._sample_open(0, min(2.2 * d["sigma1"], half), n_grid // 2)]))
        ax_x = np.sort(np.concatenate([cn._sample_open(0, half, n_grid),
                                       cn._sample_open(0, min(2.2 * d["sigma2"], half), n_grid // 2)]))
        R, X = np.meshgrid(ax_r, ax_x, indexing="ij")
        eigs = np.linalg.eigvalsh(ricci_local_glue(glue, R.ravel(), X.ravel()).entries)
        from .certify import CertificationReport
        rep = CertificationReport(target="glue collar Ricci >= 0",
                                  grid={"axes": [len(ax_r), len(ax_x)]},
                                  tolerance=tol, min_margin=float(np.min(eigs)),
                                  argmin=[])
        rep.passed = rep.min_margin >= -tol
        reports.append(rep)
    if "conical_cap" in regions:
        reg = regions["conical_cap"]
        w = _warps_of(reg)
        d = reg["data"]
        fams1 = cn.make_cap_families(w["phi1"], None, w["rho_cap"], int(d["n"]), d["zeta"])
        fams2 = cn.make_cap_families(w["phi1"], w["eta_delta"], w["rho_cap"],
                                     int(d["n"]), d["zeta"])
        worst = np.inf
        for fams, hi in ((fams1, d["r0"]), (fams2, d["r0"] / 2)):
            grid = Grid([(d["r0"] * 1e-3, hi), (0.0, np.pi / 2)], [n_grid, n_grid])
            pts = grid.points()
            E = ricci_torus_invariant(*fams, pts[:, 0], pts[:, 1]).entries
            worst = min(worst, float(np.min(cn._block_margins(E))))
        from .certify import CertificationReport
        rep = CertificationReport(target="cap blocks >= 0", grid={"n": n_grid},
                                  tolerance=tol, min_margin=worst, argmin=[])
        rep.passed = worst >= -tol
        reports.append(rep)
    if "berger_body" in regions:
        reg = regions["berger_body"]
        w = _warps_of(reg)
        from .curvature import ricci_berger_general
        r = cn._sample_open(0.0, w["rho"].b, 4096)
        vals = ricci_berger_general(w["rho"], w["phi"], r)
        worst = min(float(np.min(v)) for v in vals)
        from .certify import CertificationReport
        rep = CertificationReport(target="round-base body Ricci >= 0",
                                  grid={"n": 4096}, tolerance=tol,
                                  min_margin=worst, argmin=[])
        rep.passed = worst >= -tol
        reports.append(rep)
    ok = True
    for rep in reports:
        print(rep.summary())
        ok = ok and rep.passed
    if not reports:
        print("no recertifiable regions found in atlas", file=sys.stderr)
        return 2
    return 0 if ok else 1


def cmd_plot_data(args) -> int:
    data = _load_atlas(args.atlas)
    regions = {r["id"]: r for r in data["regions"]}
    out = Path(args.out)
    if args.field == "ricci-min":
        reg = regions["edge_body"]
        w = _warps_of(reg)
        grid = Grid([(0.0, reg["data"]["r_out"]), (0.0, np.pi / 2)], [96, 96])
        pts = grid.points()
        eigs = np.linalg.eigvalsh(
            ricci_cone_berger(w["rho"], w["phi"], w["f"], pts[:, 0], pts[:, 1]).entries)
        rows = np.column_stack([pts, eigs[:, 0]])
        header = "r,xi,min_eigenvalue"
    elif args.field == "warp":
        reg = regions["edge_body"]
        w = _warps_of(reg)
        r = np.linspace(1e-6, reg["data"]["r_out"], 2048)
        rows = np.column_stack([r, w["rho"](r), w["phi"](r)])
        header = "r,rho,phi"
    elif args.field == "margin":
        reg = regions["edge_body"]
        w = _warps_of(reg)
        xi = cn._sample_open(0.0, np.pi / 2, 2048)
        from .certify import scalar_q_inequality
        q = scalar_q_inequality(w["f"], xi)
        rows = np.column_stack([xi, -1.0 - q])
        header = "xi,margin_to_bound_-1"
    else:
        print(f"unknown field {args.field}", file=sys.stderr)
        return 2
    np.savetxt(out, rows, delimiter=",", header=header, comments="")
    print(f"wrote {rows.shape[0]} rows to {out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="conewarp",
                                 description="certified nonnegative-Ricci metrics "
                                             "on resolutions of quotient singularities")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("resolve", help="full resolution run with certification")
    p.add_argument("--group")
    p.add_argument("--group-file")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(fn=cmd_resolve)

    p = sub.add_parser("certify", help="re-certify a written atlas file")
    p.add_argument("--atlas", required=True)
    p.add_argument("--grid", type=int, default=128)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(fn=cmd_certify)

    p = sub.add_parser("recursion", help="print the resolution tree and oracle data")
    p.add_argument("--group")
    p.add_argument("--group-file")
    p.set_defaults(fn=cmd_recursion)

    p = sub.add_parser("plot-data", help="dump CSV fields for plotting")
    p.add_argument("--atlas", required=True)
    p.add_argument("--field", required=True, choices=["ricci-min", "warp", "margin"])
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plot_data)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ConewarpError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
