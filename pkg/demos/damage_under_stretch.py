"""Damage under a fixed stretch, and why a pre-damaged spot stays put.

The bar is held at a constant stretch.  With the quadratic interpolation
Phi(z) = z**2 the force driving damage is 2 z (W1 - W2), which weakens as z
falls.  Intact material therefore loses stiffness until that force balances
the damage threshold alpha.  The seeded disc starts below that balance level
and does not change.  Damage never heals (z_new <= z_old at every node) and
the energy decreases step by step.
"""

import numpy as np

from phasedamage import energy_ledger_check, parse_config, run_simulation

from _common import CONFIGS, ascii_field

cfg = parse_config(CONFIGS / "static_load.toml").with_(T_final=0.3)
traj = run_simulation(cfg)
n = cfg.grid.nx

print(f"{'t':>5} {'min z':>8} {'mean z':>8} {'E':>12} {'damage dissipation':>19}")
for s, r in zip(traj.states[::3], traj.records[::3]):
    print(f"{s.t:5.2f} {r.min_z:8.4f} {s.z.mean():8.4f} {r.total:12.6g} "
          f"{r.damage_dissipation:19.4e}")

increments = [np.max(b.z - a.z) for a, b in zip(traj.states[:-1], traj.states[1:])]
print(f"\nlargest increase of z in any step: {max(increments):.1e}")
ledger = energy_ledger_check(traj)
print(f"energy ledger per step: max {ledger.residuals.max():.2e} "
      f"(allowed {ledger.tolerance_step:.1e}) -> {'ok' if ledger.passed else 'VIOLATED'}")

mid = traj.final.z.reshape(n + 1, n + 1)[n // 2]
print("\nz along the middle row:", " ".join(f"{v:.2f}" for v in mid[::3]))
print("\nfinal damage field (darker = more intact):")
print(ascii_field(traj.final.z, n, lo=mid.min(), hi=1.0))
