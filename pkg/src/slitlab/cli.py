"""Command-line front end.

Subcommands mirror the pipeline stages so each quantity is exercisable
in isolation: mesh generation, eigenvalues, capacities, the shape
coefficient table, eigenspace decomposition, raw sweeps, and full
verification runs.  All numeric output uses 17 significant digits and
artifacts are written atomically (temp file + rename).

Exit codes: 0 success, 2 invalid input (message names the offending
field), 1 computation failure.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import eigensolve, experiments, fem
from .asymptotics import (
    INFINITE_ORDER,
    c_coeff,
    combine_tables,
    decompose,
    predict_multiple,
)
from .errors import SlitLabError, ValidationError
from .geometry import generate_mesh, import_mesh_text


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slitlab",
        description="Dirichlet eigenvalue shifts under removal of a small slit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override a config value (repeatable)",
        )
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)

    for name, helptext in [
        ("mesh", "generate and export the slit mesh at the largest eps"),
        ("eigs", "solve the slit-domain eigenproblem"),
        ("capacity", "slit capacities across the eps list"),
        ("decompose", "eigenspace splitting by vanishing order, with predictions"),
        ("sweep", "run the eps sweep and write sweep.csv"),
        ("verify", "run all configured checks and write report.json"),
    ]:
        p = sub.add_parser(name, help=helptext)
        common(p)
    ck = sub.add_parser("ck", help="table of the slit shape constants")
    ck.add_argument("--max-k", type=int, default=6)
    ck.add_argument("--out", default=".")
    return parser


def _load_config(args) -> tuple[experiments.ExperimentConfig, dict]:
    if not args.config:
        raise ValidationError("missing required --config PATH")
    if not os.path.exists(args.config):
        raise ValidationError(f"config file not found: {args.config}")
    sections = experiments.sections_of_file(args.config)
    sections = experiments.apply_overrides(sections, args.overrides)
    if args.seed is not None:
        sections.setdefault("run", {})["seed"] = str(args.seed)
    return experiments.build_config(sections), sections


def _mesh_for(config: experiments.ExperimentConfig, eps: float):
    return generate_mesh(config.domain, config.slit(eps), config.mesh)


def cmd_mesh(args) -> int:
    config, _ = _load_config(args)
    mesh = _mesh_for(config, config.eps_list[0])
    path = os.path.join(args.out, "mesh.txt")
    tmp = path + ".tmp"
    mesh.export_text(tmp)
    os.replace(tmp, path)
    print(
        f"mesh: {mesh.n_vertices} vertices, {len(mesh.triangles)} triangles, "
        f"min angle {_fmt(mesh.min_angle())} deg -> {path}"
    )
    return 0


def cmd_eigs(args) -> int:
    config, sections = _load_config(args)
    mesh_path = sections.get("mesh", {}).get("import_path")
    if mesh_path:
        mesh = import_mesh_text(mesh_path)
    else:
        mesh = _mesh_for(config, config.eps_list[0])
    stiffness, mass = fem.assemble(mesh)
    constrained = np.concatenate([mesh.boundary_nodes, mesh.slit_nodes]).astype(int)
    k_red, m_red, _, _ = fem.constrain(stiffness, mass, constrained)
    count = config.target_index + config.multiplicity + 2
    result = eigensolve.solve_lowest(k_red, m_red, count, seed=config.seed)
    lines = ["index,eigenvalue,residual"]
    for i, (lam, res) in enumerate(zip(result.eigenvalues, result.residuals), 1):
        lines.append(f"{i},{_fmt(lam)},{_fmt(res)}")
        print(f"lambda_{i} = {_fmt(lam)}")
    experiments.write_text_atomic(
        "\n".join(lines) + "\n", os.path.join(args.out, "eigs.csv")
    )
    return 0


def cmd_capacity(args) -> int:
    config, _ = _load_config(args)
    pts = experiments.capacity_sweep(config)
    lines = ["eps,cap,disc_err"]
    for eps, cap, err in pts:
        lines.append(f"{_fmt(eps)},{_fmt(cap)},{_fmt(err)}")
        print(f"eps={_fmt(eps)}  cap={_fmt(cap)}")
    experiments.write_text_atomic(
        "\n".join(lines) + "\n", os.path.join(args.out, "capacity.csv")
    )
    return 0


def cmd_ck(args) -> int:
    if args.max_k < 0:
        raise ValidationError("--max-k must be >= 0")
    lines = ["k,c_k"]
    for k in range(args.max_k + 1):
        val = c_coeff(k)
        lines.append(f"{k},{_fmt(val)}")
        print(f"C_{k} = {_fmt(val)}")
    experiments.write_text_atomic(
        "\n".join(lines) + "\n", os.path.join(args.out, "ck.csv")
    )
    return 0


def cmd_decompose(args) -> int:
    config, _ = _load_config(args)
    lam, tables = experiments._analytic_cluster_tables(config)
    dec = decompose(tables, np.eye(len(tables)))
    out_tables = [
        combine_tables(tables, dec.basis[:, i]) for i in range(len(tables))
    ]
    shifts = predict_multiple(dec, out_tables)
    payload = {
        "eigenvalue": lam,
        "orders": list(dec.orders),
        "kappa": ["inf" if k is INFINITE_ORDER else int(k) for k in dec.kappa],
        "basis_columns": [list(map(float, dec.basis[:, i])) for i in range(dec.basis.shape[1])],
        "predicted_shifts": [
            {
                "scale": s.scale_kind,
                "exponent": s.exponent,
                "coefficient": s.coefficient,
                "description": s.description,
            }
            for s in shifts
        ],
    }
    experiments.write_json_atomic(payload, os.path.join(args.out, "decompose.json"))
    print(f"eigenvalue {_fmt(lam)}: {len(dec.orders)} shifting branch(es)")
    for i, (k, s) in enumerate(zip(dec.kappa, shifts)):
        ktxt = "inf" if k is INFINITE_ORDER else str(int(k))
        print(
            f"branch {i}: kappa1={ktxt} scale={s.scale_kind} "
            f"coefficient={_fmt(s.coefficient)}"
        )
    return 0


def cmd_sweep(args) -> int:
    config, _ = _load_config(args)
    sweep = experiments.run_sweep(config, threads=args.threads)
    csv_text = experiments.sweep_csv(sweep)
    experiments.write_text_atomic(csv_text, os.path.join(args.out, "sweep.csv"))
    print(csv_text, end="")
    try:
        experiments.plot_sweep(sweep, None, os.path.join(args.out, "plot.svg"))
    except ImportError:
        pass
    return 0


def cmd_verify(args) -> int:
    config, _ = _load_config(args)
    report = experiments.verify(config, threads=args.threads)
    experiments.write_json_atomic(report, os.path.join(args.out, "report.json"))
    for name, entry in report["checks"].items():
        print(f"{entry.get('status', 'FAIL'):4s} {name}")
    print(f"overall: {'PASS' if report['pass'] else 'FAIL'}")
    return 0


_HANDLERS = {
    "mesh": cmd_mesh,
    "eigs": cmd_eigs,
    "capacity": cmd_capacity,
    "ck": cmd_ck,
    "decompose": cmd_decompose,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "out", None):
        os.makedirs(args.out, exist_ok=True)
    try:
        return _HANDLERS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SlitLabError as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
