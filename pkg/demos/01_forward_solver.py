"""Forward solver and the coupled optimality system on a fixed support.

Run with ``python3 demos/01_forward_solver.py``. Takes a few seconds.
"""

import numpy as np

from sourceshape.harness import get_example
from sourceshape.harness.studies import convergence_study, observed_rates, setup_geometry, shortcut_residuals, \
    stability_sweep

# Neumann problem with a known smooth solution: P1 errors should fall as h^2 in L2 and h in H1.
rows = convergence_study(n0=8, refinements=3)
l2_rates, h1_rates = observed_rates(rows)
print("manufactured solution u = cos(pi x) cos(pi y)")
for i, row in enumerate(rows):
    rates = f"  rates {l2_rates[i - 1]:.2f} / {h1_rates[i - 1]:.2f}" if i else ""
    print(f"  h={row.h:.4f}  L2={row.l2:.3e}  H1={row.h1:.3e}{rates}")

# On the exact support of e1 the coupled state/adjoint pair is solved once.
# Its second adjoint has the closed form (-p, 0), so solving for it is only a check.
spec = get_example("e1")
problem, phi = setup_geometry(spec, coarse_n=36)
dv, dw, pn = shortcut_residuals(problem, phi, alpha=1e-2)
print(f"\nsecond adjoint vs closed form: |v+p|={dv:.1e}, |w|={dw:.1e} (|p|={pn:.2e})")

# The state bound constant should stay flat as alpha shrinks once p is scaled by 1/sqrt(alpha).
alphas = (1e-2, 1e-3, 1e-4, 1e-5)
ratios = stability_sweep(problem, phi, alphas)
for a, r in zip(alphas, ratios):
    print(f"  alpha={a:.0e}  (|u|_1 + |p|_1/sqrt(alpha)) / |data| = {r:.4f}")

# The recovered intensity q = -p/alpha approaches q_e = 1 as alpha decreases.
for a in alphas:
    sol = problem.solve(phi, a)
    inside = phi < 0
    q = -sol.p[inside] / a
    print(f"  alpha={a:.0e}  mean q on the support {q.mean():.3f}, spread {np.ptp(q):.3f}")
