"""Vanishing regularization: the same run for epsilon = 1e-2 ... 1e-5.

The quartic term epsilon*|grad u|^4 only exists to make the elastic problem
well posed when the material is fully damaged.  As epsilon shrinks, its
energy must go to zero while the displacement norms stay bounded and the
final fields settle down (each step of the sweep changes them less).
"""

from phasedamage import epsilon_sweep, parse_config

from _common import CONFIGS

cfg = parse_config(CONFIGS / "default.toml")
report = epsilon_sweep(cfg, [1e-2, 1e-3, 1e-4, 1e-5])

print(f"{'epsilon':>8} {'max |u|_W1p':>12} {'max eps int|grad u|^4':>22} {'L2 diff to next':>16}")
for row in report.rows():
    print(f"{row['epsilon']:8.0e} {row['max_w1p']:12.6g} {row['max_quartic_energy']:22.4e} "
          f"{row['l2_diff_next']:16.4e}")
print(f"\nquartic energy decreasing: {report.quartic_decreasing}")
print(f"W1p bound ratio max/min:   {report.w1p_ratio:.4f}")
print(f"differences decreasing:    {report.cauchy_decreasing}")
