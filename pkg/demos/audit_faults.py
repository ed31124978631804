"""The audit as a safety net: break a good trajectory and watch it get caught.

A clean run is stored and audited from disk.  Then three copies are
corrupted on purpose: one node heals (z increases), mass leaks between
components, and the displacement gets an energy-raising bump.  The audit
must flag each one, which the command-line tool reports as exit code 3.
"""

from phasedamage import parse_config, run_simulation, write_trajectory
from phasedamage.cli import main
from phasedamage.verify import FAULT_KINDS, inject_fault

from _common import CONFIGS, out_dir

cfg = parse_config(CONFIGS / "default.toml").with_(T_final=0.1)
traj = run_simulation(cfg)
root = out_dir("audit")

write_trajectory(traj, root / "clean")
print("== clean run")
code = main(["audit", str(root / "clean"), "--max-report", "3"])
print(f"exit code {code}\n")

for kind in FAULT_KINDS:
    write_trajectory(inject_fault(traj, kind, step=5), root / kind)
    print(f"== injected fault: {kind}")
    code = main(["audit", str(root / kind), "--max-report", "3"])
    print(f"exit code {code}\n")
