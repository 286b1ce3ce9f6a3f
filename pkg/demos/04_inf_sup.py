"""Which velocity/pressure pairs are stable?

The discrete inf-sup constant of a stable pair stays bounded away from
zero under refinement.  Equal-order linear velocity with discontinuous
linear pressure has spurious pressure modes (beta = 0); on the remaining
modes its constant still halves with every refinement.
"""
from vexflow.verify import inf_sup_levels

for vel, pres, mode in (
    ("VectorP2", "P0", "full"),
    ("VectorP2Bubble", "P1Discontinuous", "full"),
    ("VectorP1", "P1Discontinuous", "full"),
    ("VectorP1", "P1Discontinuous", "reduced"),
):
    rows = inf_sup_levels(2, [1, 2, 3], vel, pres, mode=mode)
    print(f"{vel:>15s}/{pres:<16s} {mode:>7s}: " + "  ".join(f"{b:.4f}" for _, _, b in rows))
