"""Experiment configuration files (YAML).

Example::

    system:
      V: [[2, 1], [1, 2]]      # inline, N <= 4
      # matrix_file: v.txt     # path relative to this file
      # chain: {N: 8, omega: 1.0, coupling: 1.0}
      alpha: 1.0
      sigma: 1.0
      n: 1                     # 1-based
      psi0: [0, 0, 0, 0]       # optional, defaults to the origin
    run:
      scheme: euler-maruyama   # or semi-implicit
      dt: 1.0e-3
      t_end: 15                # or "auto": 20 decay times
      checkpoints: [0, 5, 15]  # or an integer count of equispaced times
      M: 20000
      seed: 1
      workers: 1
    output:
      dir: out
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .model import Hamiltonian, ModelError, SystemSpec, chain_hamiltonian, load_matrix

INLINE_MAX_N = 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    scheme: str = "euler-maruyama"
    dt: float = 1e-3
    t_end: float | str = "auto"
    checkpoints: tuple | int = 16
    M: int = 2000
    seed: int = 0
    workers: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    spec: SystemSpec
    psi0: np.ndarray
    run: RunConfig = field(default_factory=RunConfig)
    out_dir: str | None = None
    extra: dict = field(default_factory=dict)

    def checkpoint_times(self, t_end: float) -> list[float]:
        cps = self.run.checkpoints
        if isinstance(cps, int):
            if cps < 1:
                raise ConfigError("checkpoint count must be >= 1")
            return [float(t) for t in np.linspace(0.0, t_end, cps + 1)] if cps > 1 else [t_end]
        return [float(t) for t in cps]


def _system_matrix(system: dict, base: str) -> np.ndarray:
    given = [k for k in ("V", "matrix_file", "chain") if k in system]
    if len(given) != 1:
        raise ConfigError("system needs exactly one of V, matrix_file, chain")
    if "V" in system:
        V = np.atleast_2d(np.array(system["V"], dtype=float))
        if V.shape[0] > INLINE_MAX_N:
            raise ConfigError(f"inline V is limited to N <= {INLINE_MAX_N}; use matrix_file")
        return V
    if "matrix_file" in system:
        path = system["matrix_file"]
        if not os.path.isabs(path):
            path = os.path.join(base, path)
        if not os.path.exists(path):
            raise ConfigError(f"matrix file not found: {path}")
        return load_matrix(path)
    c = system["chain"]
    try:
        return chain_hamiltonian(int(c["N"]), float(c["omega"]), float(c.get("coupling", 0.0))).V
    except KeyError as exc:
        raise ConfigError(f"chain needs key {exc}") from None


def load_config(path) -> ExperimentConfig:
    """Parse and validate a config file.  Raises :class:`ConfigError` or
    :class:`ModelError` on bad input; nothing is computed here."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw, base=os.path.dirname(os.path.abspath(path)))


def config_from_dict(raw: dict, base: str = ".") -> ExperimentConfig:
    if not isinstance(raw, dict) or "system" not in raw:
        raise ConfigError("config needs a 'system' section")
    system = raw["system"]
    V = _system_matrix(system, base)
    try:
        spec = SystemSpec(Hamiltonian(V), system.get("alpha", 1.0), system.get("sigma", 1.0),
                          system.get("n", 1))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    psi0 = np.asarray(system.get("psi0", np.zeros(2 * spec.N)), dtype=float).ravel()
    if psi0.size != 2 * spec.N:
        raise ConfigError(f"psi0 must have length {2 * spec.N}")
    run_raw = dict(raw.get("run") or {})
    unknown = set(run_raw) - set(RunConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown run keys: {sorted(unknown)}")
    run = RunConfig(**run_raw)
    if not (isinstance(run.t_end, (int, float)) and run.t_end > 0) and run.t_end != "auto":
        raise ConfigError("run.t_end must be positive or 'auto'")
    if not run.dt > 0:
        raise ConfigError("run.dt must be positive")
    if int(run.M) < 2:
        raise ConfigError("run.M must be >= 2")
    if not 0 <= int(run.seed) < 2**64:
        raise ConfigError("run.seed must be an unsigned 64-bit integer")
    if run.scheme not in ("euler-maruyama", "semi-implicit"):
        raise ConfigError(f"unknown scheme {run.scheme!r}")
    out_dir = (raw.get("output") or {}).get("dir")
    extra = {k: v for k, v in raw.items() if k not in ("system", "run", "output")}
    return ExperimentConfig(spec, psi0, run, out_dir, extra)


__all__ = ["ConfigError", "ExperimentConfig", "ModelError", "RunConfig", "config_from_dict", "load_config"]
