"""Convergence against manufactured solutions.

The Newtonian preset shows the classical rates of the P2/P0 pair and how
the piecewise-constant pressure eventually limits the velocity.  The
variable-exponent preset has no known rate; the errors simply shrink.
"""
from vexflow import build_structured, make_mms_case, run_convergence_study

print("stokes2d, two-triangle base, levels 1-4")
print(run_convergence_study(make_mms_case("stokes2d"), 4).to_text())

print("stokes2d, nodal interpolants only (no solve)")
print(run_convergence_study(make_mms_case("stokes2d"), 4, interpolate_only=True).to_text())

print("coupled2d, 2x2 base, levels 1-3")
base = build_structured(2, [2, 2], [(0.0, 1.0), (0.0, 1.0)])
table = run_convergence_study(make_mms_case("coupled2d"), 3, base=base)
print(table.to_text())
for lev, E in zip(table.column("level"), table.energies):
    print(f"level {int(lev)}: E_visc={E.E_visc:.4f} E_stress={E.E_stress:.4f} E_grad_c={E.E_grad_c:.4f} E_reg={E.E_reg:.1e}")
