"""Command-line driver: ``sourceshape {list,run,check,convergence}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ..errors import SourceShapeError
from .problems import builtin_examples, get_example
from .runner import run_experiment
from .specfile import load_spec_file

__all__ = ["main", "build_parser", "resolve_output_dir"]

ENV_OUT = "SOURCE_SHAPE_OUT"


def resolve_output_dir(explicit, name: str) -> Path:
    """``--out`` if given, else ``$SOURCE_SHAPE_OUT/<name>``, else ``runs/<name>``."""
    if explicit:
        return Path(explicit)
    base = os.environ.get(ENV_OUT)
    return Path(base) / name if base else Path("runs") / name


def _load_target(target: str):
    names = {s.name for s in builtin_examples()}
    if target in names:
        return get_example(target)
    if Path(target).is_file():
        return load_spec_file(target)
    raise SourceShapeError(f"{target!r} is neither a builtin example ({', '.join(sorted(names))}) nor a file")


def cmd_list(args) -> int:
    for spec in builtin_examples():
        print(f"{spec.name}  {spec.description}")
    return 0


def cmd_run(args) -> int:
    spec = _load_target(args.target)
    changes = {}
    if args.noise is not None:
        changes["sigma"] = args.noise
    if args.noise_mode is not None:
        changes["noise_mode"] = args.noise_mode
    if args.coarse is not None:
        changes["coarse_n"] = args.coarse
    if args.fine is not None:
        changes["fine_n"] = args.fine
    if args.max_iter is not None:
        changes["config"] = dataclasses.replace(spec.config, max_iter=args.max_iter)
    spec = spec.replace(**changes)
    out = resolve_output_dir(args.out, spec.name)
    alpha_pp = None
    if args.alpha_pp:
        alpha_pp = args.alpha_pp[0] if len(args.alpha_pp) == 1 else np.array(args.alpha_pp)
    outcome = run_experiment(spec, seed=args.seed, out_dir=out, snap_every=args.snap_every, alpha_pp=alpha_pp)
    s = outcome.summary
    print(f"{s['example']}: {s['iterations']} iterations ({outcome.result.reason}), "
          f"err_q={s['err_q']:.3e}, post-processed={s['err_q_postprocessed']:.3e}, "
          f"components={s['components']}, {s['wall_seconds']:.1f}s")
    print(f"outputs in {out}")
    return 0


def cmd_check(args) -> int:
    from ..levelset import disk, init_from_expression, measure_perimeter, measure_volume
    from ..mesh import build_square_mesh
    from ..shapeopt import adjoint_state, extend_velocity, h1_norm_sq, shape_gradient_surface
    from .studies import fd_study, setup_geometry, shortcut_residuals

    results = []

    def report(name, ok, detail):
        results.append(ok)
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")

    mesh = build_square_mesh(50)
    phi = init_from_expression(mesh, disk(0.1, -0.05, 0.3))
    area, per = measure_volume(mesh, phi), measure_perimeter(mesh, phi)
    report("disk area", abs(area / (np.pi * 0.09) - 1) < 0.02, f"{area:.5f} vs {np.pi * 0.09:.5f}")
    report("disk perimeter", abs(per / (0.6 * np.pi) - 1) < 0.02, f"{per:.5f} vs {0.6 * np.pi:.5f}")

    spec = get_example(args.example)
    problem, phi = setup_geometry(spec)
    alpha, beta = spec.config.alpha0, spec.config.beta0
    dv, dw, pn = shortcut_residuals(problem, phi, alpha)
    report("adjoint shortcut", dv <= 1e-8 * pn and dw <= 1e-8 * max(pn, 1.0),
           f"|v+p|={dv:.2e}, |w|={dw:.2e}, |p|={pn:.2e}")

    sol = problem.solve(phi, alpha)
    grad = shape_gradient_surface(problem, phi, sol, adjoint_state(problem, phi, sol), beta)
    V = extend_velocity(problem.mesh, grad)
    n2 = h1_norm_sq(problem.mesh, V)
    cert = abs(grad(V) + n2) / n2
    report("descent certificate", cert < 1e-6, f"relative gap {cert:.2e}")

    for i, row in enumerate(fd_study(problem, phi, alpha, beta, n_fields=args.fields, seed=args.seed)):
        report(f"finite differences, field {i}", row["rel_err"] < 1e-2,
               f"dJ={row['dJ']:.4e}, fd={row['fd']:.4e}, rel={row['rel_err']:.2e} at t={row['t']:g}")
    return 0 if all(results) else 1


def cmd_convergence(args) -> int:
    from .studies import convergence_study, observed_rates

    rows = convergence_study(args.n0, args.refinements)
    r2, r1 = observed_rates(rows)
    print(f"{'triangles':>10} {'h':>10} {'L2 error':>12} {'H1 error':>12} {'L2 rate':>8} {'H1 rate':>8}")
    for i, row in enumerate(rows):
        rates = f"{r2[i - 1]:8.3f} {r1[i - 1]:8.3f}" if i else f"{'':8} {'':8}"
        print(f"{row.n_triangles:10d} {row.h:10.4f} {row.l2:12.4e} {row.h1:12.4e} {rates}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sourceshape", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="list builtin examples").set_defaults(func=cmd_list)

    r = sub.add_parser("run", help="run an example or a TOML spec file")
    r.add_argument("target")
    r.add_argument("--noise", type=float, help="Gaussian noise level sigma")
    r.add_argument("--noise-mode", choices=("absolute", "relative"))
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--coarse", type=int, help="coarse mesh subdivisions")
    r.add_argument("--fine", type=int, help="data mesh subdivisions")
    r.add_argument("--max-iter", type=int)
    r.add_argument("--alpha-pp", type=float, nargs="+", help="post-processing alpha (several values: sweep)")
    r.add_argument("--snap-every", type=int, default=10, help="VTK snapshot interval (0 disables)")
    r.add_argument("--out", help=f"output directory (default ${ENV_OUT}/<name> or runs/<name>)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="run invariant, oracle and finite-difference checks")
    c.add_argument("--example", default="e1")
    c.add_argument("--fields", type=int, default=3)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check)

    v = sub.add_parser("convergence", help="manufactured-solution convergence study")
    v.add_argument("--n0", type=int, default=8)
    v.add_argument("--refinements", type=int, default=3)
    v.set_defaults(func=cmd_convergence)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SourceShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
