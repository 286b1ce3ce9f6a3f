"""Removing the regularization: solutions for growing k approach a limit.

The term (1/k)|u|^(t-2) u only serves the existence theory.  As k grows,
its energy decays like 1/k and successive solutions move less and less.
"""
from vexflow import ExponentField, FluxLaw, SolverConfig, StressLaw, build_spaces, build_structured, make_mesh_pair, sweep_k
from vexflow.scenarios import boundary_concentration, forcing

base = build_structured(2, [2, 2], [(0.0, 1.0), (0.0, 1.0)])
spaces = build_spaces(make_mesh_pair(base, 2, 3))
laws = (StressLaw(exponent=ExponentField(1.6, 2.4, gamma=8.0, c_mid=0.5)), FluxLaw(1.0, 0.5))

for amplitude in (20.0, 100.0):
    print(f"vortex amplitude {amplitude:g}")
    cfg = SolverConfig(inner_method="newton")
    rows = sweep_k(spaces, laws, forcing("vortex", amplitude), boundary_concentration("affine"), cfg, ks=(1e1, 1e2, 1e3, 1e4))
    for r in rows:
        print(f"  k={r.k:8.0e}  E_reg={r.E_reg:.3e}  dist_prev={r.dist_prev:.3e}")
