"""Splitting and merging of the recovered support.

e5 starts from one small disk while the source lives on four; e6 starts
from two disks while the source lives on one. The level set changes
topology without any special treatment. Run with
``python3 demos/04_topology.py``; takes a few minutes.
"""

from sourceshape.harness import build_problem, err_q, generate_data, get_example
from sourceshape.levelset import connected_components, init_from_expression
from sourceshape.mesh import build_square_mesh
from sourceshape.shapeopt import optimize

for name, expected in (("e5", 4), ("e6", 1)):
    spec = get_example(name)
    mesh = build_square_mesh(spec.coarse_n)
    problem = build_problem(spec, generate_data(spec, coarse=mesh), mesh)
    phi0 = init_from_expression(mesh, spec.omega_0)
    counts = [connected_components(mesh, phi0)]

    def track(rec, phi):
        counts.append(connected_components(mesh, phi))

    result = optimize(problem, phi0, spec.config, callback=track)
    changes = [(k, c) for k, (prev, c) in enumerate(zip(counts, counts[1:])) if c != prev]
    print(f"{name}: {counts[0]} component(s) at start, {counts[-1]} at the end (exact support has {expected})")
    print(f"  changes (iteration, components): {changes}")
    print(f"  err_q {err_q(mesh, result.phi, result.q, spec):.3e} after {len(result.history)} iterations")
