"""Configuration files, snapshots, diagnostics CSV and trajectory directories.

Configuration is TOML with one table per solver component::

    [mesh]           nx, ny, lx, ly, origin, dirichlet
    [energy]         material constants (see ``ENERGY_KEYS``)
    [elasticity]     Newton controls for the displacement solve
    [cahn_hilliard]  newton_tol, max_iter, splitting, elastic_coupling
    [damage]         active_set_tol, max_iter
    [timeloop]       T_final, tau, snapshot_stride, seed, order
    [boundary]       gradient, offset, ramp_times, ramp_values
    [force]          vector, ramp_times, ramp_values
    [initial]        c0, amplitude, mode, z0, z_defects

Snapshots are a small binary container: a fixed header followed by
little-endian float64 arrays ``u, c, w, z``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import re
import struct
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .elasticity import ElasticSolveConfig
from .energy import (ChemicalEnergy, DamageInterpolation, ElasticLawW1, ElasticLawW2,
                     MaterialParams, calibrated_w2, default_eigenstrains, minimal_w2_offset)
from .exceptions import ConfigError, SnapshotFormatError
from .mesh import Grid2D, State
from .timeloop import (BoundaryProgram, DiagnosticsRecord, ForceProgram, GridSpec,
                       InitialData, Ramp, SimulationConfig, Tolerances, Trajectory)

OUT_ENV = "PHASEDAMAGE_OUT"

MESH_KEYS = {"nx", "ny", "lx", "ly", "origin", "dirichlet"}
ENERGY_KEYS = {"damage_interp", "theta", "mobility", "gamma_c", "gamma", "delta", "alpha",
               "beta", "epsilon", "s", "mu0", "mu1", "lam0", "lam1", "misfit", "eigenstrains",
               "w2_p", "w2_scale", "w2_ridge", "w2_offset", "w2_mu0", "w2_mu1", "w2_lam0",
               "w2_lam1", "w2_misfit"}
ELASTICITY_KEYS = {"newton_tol", "max_newton_iters", "armijo", "backtrack", "min_step"}
CH_KEYS = {"newton_tol", "max_iter", "splitting", "elastic_coupling"}
DAMAGE_KEYS = {"active_set_tol", "max_iter"}
TIMELOOP_KEYS = {"T_final", "tau", "snapshot_stride", "seed", "order"}
BOUNDARY_KEYS = {"gradient", "offset", "ramp_times", "ramp_values"}
FORCE_KEYS = {"vector", "ramp_times", "ramp_values"}
INITIAL_KEYS = {"c0", "amplitude", "mode", "z0", "z_defects"}
TOLERANCE_KEYS = set(Tolerances.__dataclass_fields__)
SECTIONS = {"mesh": MESH_KEYS, "energy": ENERGY_KEYS, "elasticity": ELASTICITY_KEYS,
            "cahn_hilliard": CH_KEYS, "damage": DAMAGE_KEYS, "timeloop": TIMELOOP_KEYS,
            "boundary": BOUNDARY_KEYS, "force": FORCE_KEYS, "initial": INITIAL_KEYS,
            "tolerances": TOLERANCE_KEYS}

# which config key is blamed for a validation message
_MESSAGE_KEYS = [
    ("tau", ("timeloop", "tau")), ("T_final", ("timeloop", "T_final")),
    ("snapshot_stride", ("timeloop", "snapshot_stride")), ("order", ("timeloop", "order")),
    ("simplex", ("initial", "c0")), ("c_mean", ("initial", "c0")),
    ("initial concentration", ("initial", "c0")), ("initial damage", ("initial", "z0")),
    ("epsilon", ("energy", "epsilon")), ("mobility", ("energy", "mobility")),
    ("gamma_c", ("energy", "gamma_c")), ("gamma and delta", ("energy", "gamma")),
    ("alpha", ("energy", "alpha")), ("beta", ("energy", "beta")),
    ("theta", ("energy", "theta")), ("W1", ("energy", "mu0")), ("W2", ("energy", "w2_p")),
    ("splitting", ("cahn_hilliard", "splitting")),
    ("elastic_coupling", ("cahn_hilliard", "elastic_coupling")),
]


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------
def _locate(text: str, section: str, key: Optional[str]) -> Optional[int]:
    """1-based line of ``key`` inside ``[section]`` (or of the header)."""
    current = None
    header_line = None
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_.]+)\s*\]", stripped)
        if m:
            current = m.group(1)
            if current == section:
                header_line = i
            continue
        if current == section and key is not None and re.match(
                rf"^{re.escape(key)}\s*=", stripped):
            return i
    return header_line


def _err(text: str, path: str, section: str, key: Optional[str], msg: str) -> ConfigError:
    line = _locate(text, section, key) if text else None
    where = f"{path}:{line}" if line else path
    label = f"[{section}]" + (f" {key}" if key else "")
    return ConfigError(f"{where}: {label}: {msg}")


def _vec(value, n: int, name: str) -> Tuple[float, ...]:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"{name} must be a list of {n} numbers")
    return tuple(float(x) for x in arr)


def _mat2(value, name: str) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (2, 2):
        raise ValueError(f"{name} must be a 2x2 nested list")
    return tuple(tuple(float(x) for x in row) for row in arr)


def _ramp(sec: Dict[str, Any]) -> Ramp:
    times = sec.get("ramp_times", [0.0])
    values = sec.get("ramp_values", [1.0] * len(times))
    return Ramp(tuple(times), tuple(values))


def _material(sec: Dict[str, Any], n_comp: int) -> MaterialParams:
    if "eigenstrains" in sec:
        E = np.asarray(sec["eigenstrains"], dtype=float)
    else:
        E = default_eigenstrains(float(sec.get("misfit", 0.01)), n_comp)
    w1 = ElasticLawW1(mu0=float(sec.get("mu0", 1.0)), mu1=float(sec.get("mu1", 0.0)),
                      lam0=float(sec.get("lam0", 1.0)), lam1=float(sec.get("lam1", 0.0)),
                      eigenstrains=E)
    p = float(sec.get("w2_p", 1.5))
    scale = float(sec.get("w2_scale", 0.5))
    ridge = float(sec.get("w2_ridge", 1e-8))
    offset = sec.get("w2_offset", "auto")
    if offset == "auto":
        offset = minimal_w2_offset(p, scale, ridge)
    elif isinstance(offset, str):
        raise ValueError("w2_offset must be a number or \"auto\"")
    E2 = (default_eigenstrains(float(sec["w2_misfit"]), E.shape[0]) if "w2_misfit" in sec
          else E)
    w2 = ElasticLawW2(mu0=float(sec.get("w2_mu0", w1.mu0)), mu1=float(sec.get("w2_mu1", w1.mu1)),
                      lam0=float(sec.get("w2_lam0", w1.lam0)),
                      lam1=float(sec.get("w2_lam1", w1.lam1)), eigenstrains=E2,
                      p=p, scale=scale, ridge=ridge, offset=float(offset))
    return MaterialParams(
        w1=w1, w2=w2, wch=ChemicalEnergy(float(sec.get("theta", 1.0))),
        damage_interp=DamageInterpolation(sec.get("damage_interp", "quadratic")),
        mobility=float(sec.get("mobility", 1.0)), gamma_c=float(sec.get("gamma_c", 1e-3)),
        alpha=float(sec.get("alpha", 0.05)), beta=float(sec.get("beta", 1.0)),
        epsilon=float(sec.get("epsilon", 1e-4)), gamma=float(sec.get("gamma", 1.0)),
        delta=float(sec.get("delta", 1.0)), s=float(sec.get("s", 1.0)))


def config_from_dict(data: Dict[str, Any], path: str = "<dict>", text: str = "") -> SimulationConfig:
    """Build and validate a :class:`SimulationConfig` from a nested mapping."""
    for section, body in data.items():
        if section not in SECTIONS:
            raise _err(text, path, section, None, f"unknown section (expected one of "
                                                  f"{', '.join(sorted(SECTIONS))})")
        if not isinstance(body, dict):
            raise _err(text, path, section, None, "must be a table")
        for key in body:
            if key not in SECTIONS[section]:
                raise _err(text, path, section, key, "unknown key")

    def build(section, fn):
        sec = data.get(section, {})
        try:
            return fn(sec)
        except (ValueError, TypeError) as exc:
            # blame the first key mentioned in the message, else the section
            key = next((k for k in sec if re.search(rf"\b{re.escape(k)}\b", str(exc))), None)
            raise _err(text, path, section, key, str(exc)) from None

    mesh = build("mesh", lambda s: GridSpec(
        int(s.get("nx", 32)), int(s.get("ny", 32)), float(s.get("lx", 1.0)),
        float(s.get("ly", 1.0)), _vec(s.get("origin", (0.0, 0.0)), 2, "origin"),
        tuple(s["dirichlet"]) if isinstance(s.get("dirichlet"), list)
        else s.get("dirichlet", "left_right")))
    build("mesh", lambda s: mesh.build())

    def initial(s):
        c0 = s.get("c0", [0.5, 0.5])
        z_def = tuple(_vec(d, 4, "z_defects entry") for d in s.get("z_defects", []))
        return InitialData(tuple(float(x) for x in c0), float(s.get("amplitude", 0.0)),
                           s.get("mode", "random"), float(s.get("z0", 1.0)), z_def)

    init = build("initial", initial)
    mat = build("energy", lambda s: _material(s, len(init.c_mean)))
    el = build("elasticity", lambda s: ElasticSolveConfig(**{k: (int(v) if k == "max_newton_iters"
                                                                  else float(v))
                                                              for k, v in s.items()}))
    ch = data.get("cahn_hilliard", {})
    dmg = data.get("damage", {})
    tl = data.get("timeloop", {})
    bnd = build("boundary", lambda s: BoundaryProgram(
        _mat2(s.get("gradient", ((0.0, 0.0), (0.0, 0.0))), "gradient"),
        _vec(s.get("offset", (0.0, 0.0)), 2, "offset"), _ramp(s)))
    frc = build("force", lambda s: ForceProgram(_vec(s.get("vector", (0.0, 0.0)), 2, "vector"),
                                                _ramp(s)))
    tols = build("tolerances", lambda s: Tolerances(**{k: float(v) for k, v in s.items()}))
    try:
        cfg = SimulationConfig(
            grid=mesh, mat=mat, T_final=float(tl.get("T_final", 0.1)),
            tau=float(tl.get("tau", 0.01)), boundary=bnd, force=frc, initial=init,
            snapshot_stride=int(tl.get("snapshot_stride", 1)), seed=int(tl.get("seed", 0)),
            elastic=el, ch_newton_tol=float(ch.get("newton_tol", 1e-10)),
            ch_max_iter=int(ch.get("max_iter", 50)), splitting=ch.get("splitting", "convex"),
            elastic_coupling=ch.get("elastic_coupling", "implicit"),
            damage_tol=float(dmg.get("active_set_tol", 1e-12)),
            damage_max_iter=int(dmg.get("max_iter", 100)),
            order=tl.get("order", "elasticity-damage-ch"), tolerances=tols)
    except (ValueError, TypeError) as exc:
        raise _err(text, path, "timeloop", None, str(exc)) from None
    try:
        cfg.validate()
    except ConfigError as exc:
        msg = str(exc)
        section, key = next((loc for word, loc in _MESSAGE_KEYS if word in msg),
                            ("timeloop", None))
        raise _err(text, path, section, key, msg) from None
    return cfg


def parse_config(path) -> SimulationConfig:
    """Read and validate a TOML configuration file.

    Raises
    ------
    ConfigError
        With ``file:line`` location for syntax errors, unknown keys and
        violated invariants.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read configuration: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    return config_from_dict(data, str(path), text)


def config_to_dict(cfg: SimulationConfig) -> Dict[str, Any]:
    """Nested plain-data form of a configuration (inverse of :func:`config_from_dict`)."""
    mat = cfg.mat
    w1, w2 = mat.w1, mat.w2
    g = cfg.grid
    d = g.dirichlet
    if isinstance(d, np.ndarray):
        d = [int(x) for x in d]
    elif isinstance(d, tuple):
        d = list(d)
    return {
        "mesh": {"nx": g.nx, "ny": g.ny, "lx": g.lx, "ly": g.ly, "origin": list(g.origin),
                 "dirichlet": d},
        "energy": {
            "damage_interp": mat.damage_interp.kind, "theta": mat.wch.theta,
            "mobility": mat.mobility, "gamma_c": mat.gamma_c, "gamma": mat.gamma,
            "delta": mat.delta, "alpha": mat.alpha, "beta": mat.beta, "epsilon": mat.epsilon,
            "s": mat.s, "mu0": w1.mu0, "mu1": w1.mu1, "lam0": w1.lam0, "lam1": w1.lam1,
            "eigenstrains": w1.eigenstrains.tolist(), "w2_p": w2.p, "w2_scale": w2.scale,
            "w2_ridge": w2.ridge, "w2_offset": w2.offset, "w2_mu0": w2.mu0, "w2_mu1": w2.mu1,
            "w2_lam0": w2.lam0, "w2_lam1": w2.lam1,
        },
        "elasticity": asdict(cfg.elastic),
        "cahn_hilliard": {"newton_tol": cfg.ch_newton_tol, "max_iter": cfg.ch_max_iter,
                          "splitting": cfg.splitting, "elastic_coupling": cfg.elastic_coupling},
        "damage": {"active_set_tol": cfg.damage_tol, "max_iter": cfg.damage_max_iter},
        "timeloop": {"T_final": cfg.T_final, "tau": cfg.tau,
                     "snapshot_stride": cfg.snapshot_stride, "seed": cfg.seed,
                     "order": cfg.order},
        "boundary": {"gradient": [list(r) for r in cfg.boundary.gradient],
                     "offset": list(cfg.boundary.offset),
                     "ramp_times": list(cfg.boundary.ramp.times),
                     "ramp_values": list(cfg.boundary.ramp.values)},
        "force": {"vector": list(cfg.force.vector), "ramp_times": list(cfg.force.ramp.times),
                  "ramp_values": list(cfg.force.ramp.values)},
        "initial": {"c0": list(cfg.initial.c_mean), "amplitude": cfg.initial.amplitude,
                    "mode": cfg.initial.c_mode, "z0": cfg.initial.z_value,
                    "z_defects": [list(x) for x in cfg.initial.z_defects]},
        "tolerances": asdict(cfg.tolerances),
    }


def config_hash(cfg_or_dict) -> str:
    """SHA-256 of the canonical JSON form; independent of key order."""
    data = cfg_or_dict if isinstance(cfg_or_dict, dict) else config_to_dict(cfg_or_dict)
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ----------------------------------------------------------------------
# snapshots
# ----------------------------------------------------------------------
SNAPSHOT_MAGIC = b"PHDSNAP\x00"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<8sIIIQId")


def write_snapshot(state: State, path, grid: Optional[Grid2D] = None) -> None:
    """Write ``state`` as header plus little-endian float64 ``u, c, w, z``."""
    nn = state.z.shape[0]
    ncomp = state.c.shape[1]
    if state.u.shape != (nn, 2) or state.c.shape != (nn, ncomp) or state.w.shape != (nn, ncomp):
        raise ValueError("inconsistent state field shapes")
    nx = grid.nx if grid is not None else int(state.meta.get("nx", 0))
    ny = grid.ny if grid is not None else int(state.meta.get("ny", 0))
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, nx, ny, nn, ncomp, float(state.t))
    with open(path, "wb") as fh:
        fh.write(header)
        for a in (state.u, state.c, state.w, state.z):
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_snapshot(path) -> State:
    """Inverse of :func:`write_snapshot`; the payload round-trips bit-exactly.

    Raises
    ------
    SnapshotFormatError
        Empty or truncated file, wrong magic, unsupported version, or a
        payload whose size does not match the header.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotFormatError(f"{path}: malformed snapshot header "
                                  f"({len(data)} bytes, need {_HEADER.size})")
    magic, version, nx, ny, nn, ncomp, t = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"{path}: malformed snapshot header (bad magic {magic!r})")
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"{path}: snapshot version {version} is not supported "
                                  f"(expected {SNAPSHOT_VERSION})")
    if nx and ny and nn != (nx + 1) * (ny + 1):
        raise SnapshotFormatError(f"{path}: malformed snapshot header (node count {nn} "
                                  f"does not match {nx}x{ny} grid)")
    sizes = [nn * 2, nn * ncomp, nn * ncomp, nn]
    expected = _HEADER.size + 8 * sum(sizes)
    if len(data) != expected:
        raise SnapshotFormatError(f"{path}: payload has {len(data) - _HEADER.size} bytes, "
                                  f"header implies {expected - _HEADER.size}")
    arrays, off = [], _HEADER.size
    for size in sizes:
        arrays.append(np.frombuffer(data, dtype="<f8", count=size, offset=off).astype(float))
        off += 8 * size
    u, c, w, z = arrays
    return State(u.reshape(nn, 2), c.reshape(nn, ncomp), w.reshape(nn, ncomp), z, t,
                 {"nx": nx, "ny": ny})


# ----------------------------------------------------------------------
# diagnostics CSV
# ----------------------------------------------------------------------
def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_diagnostics(records: List[DiagnosticsRecord], path, n_components: int) -> None:
    cols = DiagnosticsRecord.columns(n_components)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for r in records:
            row = r.as_row()
            wr.writerow([_fmt(row[c]) for c in cols])


def read_diagnostics(path) -> List[DiagnosticsRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [DiagnosticsRecord.from_row(row) for row in csv.DictReader(fh)]


# ----------------------------------------------------------------------
# manifests and trajectory directories
# ----------------------------------------------------------------------
@dataclass
class RunManifest:
    config_hash: str
    version: str = __version__
    start_time: str = ""
    end_time: str = ""
    seed: int = 0
    outcome: str = "pending"
    extra: dict = field(default_factory=dict)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def output_dir(explicit=None, default="runs") -> Path:
    """``explicit`` if given, else ``$PHASEDAMAGE_OUT``, else ``default``."""
    if explicit:
        return Path(explicit)
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else Path(default)


def write_trajectory(traj: Trajectory, out_dir, all_states: bool = False) -> Path:
    """Write config, diagnostics and snapshots (every ``snapshot_stride``-th step).

    The first and last states are always written.  ``all_states`` overrides
    the stride.
    """
    out = Path(out_dir)
    snap_dir = out / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    stride = 1 if all_states else traj.cfg.snapshot_stride
    n = len(traj.states)
    index = []
    for k, s in enumerate(traj.states):
        if k % stride == 0 or k == n - 1:
            name = f"step_{k:06d}.snap"
            write_snapshot(s, snap_dir / name, traj.grid)
            index.append({"step": k, "time": s.t, "file": f"snapshots/{name}"})
    cfg_dict = config_to_dict(traj.cfg)
    (out / "config.json").write_text(json.dumps(cfg_dict, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    meta = {"format": "phasedamage-trajectory", "version": 1,
            "config_hash": config_hash(cfg_dict), "grid": [traj.grid.nx, traj.grid.ny],
            "n_components": traj.states[0].c.shape[1], "snapshots": index,
            "diagnostics": "diagnostics.csv"}
    (out / "trajectory.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    write_diagnostics(traj.records, out / "diagnostics.csv", traj.states[0].c.shape[1])
    return out


def read_trajectory(path) -> Trajectory:
    """Load a trajectory directory written by :func:`write_trajectory`."""
    root = Path(path)
    if root.is_file():
        root = root.parent
    meta_path = root / "trajectory.json"
    if not meta_path.exists():
        raise SnapshotFormatError(f"{root}: not a trajectory directory (no trajectory.json)")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        cfg = config_from_dict(json.loads((root / "config.json").read_text(encoding="utf-8")),
                               str(root / "config.json"))
    except (json.JSONDecodeError, KeyError) as exc:
        raise SnapshotFormatError(f"{root}: malformed trajectory metadata: {exc}") from None
    states = [read_snapshot(root / entry["file"]) for entry in meta["snapshots"]]
    grid = cfg.grid.build()
    for s in states:
        if s.z.shape[0] != grid.node_count:
            raise SnapshotFormatError(f"{root}: snapshot does not match the configured grid")
    diag = root / meta.get("diagnostics", "diagnostics.csv")
    records = read_diagnostics(diag) if diag.exists() else []
    return Trajectory(cfg, grid, states, records)
