"""Scenario files: one YAML document pinning a reproducible experiment.

The schema is documented in docs/scenario.md; ``reference.yaml`` ships with
the package.
"""

from __future__ import annotations

import os
import zlib
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np
import yaml

from .cost import CostFunction
from .errors import ConfigurationError
from .kernel import ExecTrace, LoopSpec, SimConfig
from .neural.lm import LmConfig

BUILTIN = "reference"


def derive_seed(seed: int, consumer: str) -> int:
    """Independent, stable 63-bit seed for one consumer of the scenario seed."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(consumer.encode())])
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def _grid(spec) -> list[float]:
    if isinstance(spec, dict):
        start, stop, step = (float(spec[k]) for k in ("start", "stop", "step"))
        if step <= 0 or stop < start:
            raise ConfigurationError(f"bad range {spec}")
        k = int(round((stop - start) / step))
        return [round(start + i * step, 12) for i in range(k + 1)]
    return [float(v) for v in spec]


@dataclass
class Scenario:
    seed: Optional[int]
    sim: dict
    loops: list
    disturbance_period: float
    trace: ExecTrace
    dataset_path: str = "dataset.csv"
    ranges: list = field(default_factory=list)
    training: dict = field(default_factory=dict)
    bench: dict = field(default_factory=dict)
    source: str = ""

    def costs(self) -> list[CostFunction]:
        return [CostFunction.reciprocal(lp.gamma, weight=lp.weight) for lp in self.loops]

    def lm_config(self) -> LmConfig:
        keys = ("mu_init", "mu_up", "mu_down", "max_epochs", "target_mse", "holdout_fraction")
        kw = {k: self.training[k] for k in keys if k in self.training}
        return LmConfig(rng_seed=derive_seed(self.require_seed(), "train"), **kw)

    @property
    def hidden(self) -> int:
        return int(self.training.get("hidden", 8))

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigurationError("scenario has no seed; set 'seed' or pass --seed")
        return self.seed

    def resolve(self, path: str, out_dir: str) -> str:
        return path if os.path.isabs(path) else os.path.join(out_dir, path)

    def sim_config(self, mode: str, out_dir: str = ".") -> SimConfig:
        s = self.sim
        model_path = s.get("model_path")
        return SimConfig(
            duration=float(s.get("duration", 12.0)),
            mode=mode,
            t_fs=float(s.get("t_fs", 0.4)),
            u_target=float(s.get("u_target", 0.75)),
            loops=list(self.loops),
            disturbance_period=self.disturbance_period,
            exec_trace=self.trace,
            micro_step=float(s.get("micro_step", 5e-4)),
            seed=derive_seed(self.require_seed(), "simulate"),
            model_path=self.resolve(model_path, out_dir) if model_path else None,
            f_bounds=tuple(float(v) for v in s.get("f_bounds", (5.0, 200.0))),
            c_fbs=float(s.get("c_fbs", 0.0)),
            period_tick=float(s.get("period_tick", 5e-4)),
            log_interval=float(s.get("log_interval", 0.01)),
            noise=bool(s.get("noise", True)),
        )


def parse_scenario(doc: dict, source: str = "<dict>") -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{source}: scenario must be a mapping")
    try:
        loops = [LoopSpec(float(d["omega0"]), float(d["f0"]), float(d["gamma"]),
                          float(d.get("weight", 1.0))) for d in doc["loops"]]
        trace = ExecTrace([(float(seg["start"]), [float(v) for v in seg["exec"]])
                           for seg in doc["trace"]])
        dist = float(doc.get("disturbance", {}).get("period", 0.01))
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"{source}: missing or malformed field {exc}") from None
    ds = doc.get("dataset", {}) or {}
    seed = doc.get("seed")
    return Scenario(
        seed=None if seed is None else int(seed),
        sim=dict(doc.get("simulation", {}) or {}),
        loops=loops,
        disturbance_period=dist,
        trace=trace,
        dataset_path=ds.get("path", "dataset.csv"),
        ranges=[_grid(r) for r in ds.get("ranges", [])],
        training=dict(doc.get("training", {}) or {}),
        bench=dict(doc.get("bench", {}) or {}),
        source=source,
    )


def load_scenario(path: Optional[str] = None) -> Scenario:
    """Read a scenario file; ``None`` or ``"reference"`` selects the built-in one."""
    if path in (None, BUILTIN):
        text = resources.files("fbsched.data").joinpath("reference.yaml").read_text()
        source = "builtin:reference.yaml"
    else:
        if not os.path.exists(path):
            raise FileNotFoundError(path)
        with open(path) as fh:
            text = fh.read()
        source = path
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{source}: {exc}") from None
    return parse_scenario(doc, source)
