"""Scenario files: strict TOML loading into dataclass configs.

Unknown keys are errors (with a did-you-mean hint), every covariance-like
matrix is PSD-checked at load time, and all defaults are materialized so a
run manifest can reproduce the run.
"""

from __future__ import annotations

import difflib
import json
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .channels import check_psd, max_correlated
from .errors import ParseError, QsnError, ValidationError
from .probes import FAMILIES, ProbeSpec
from .tensor_core import SiteSpec, SpaceSpec

TASKS = ("qfi", "qfi_multi", "echo", "sweep_K", "rayleigh", "nogo_passive", "cv_advantage")
V_PATTERNS = ("max_correlated", "identity")
BACKENDS = ("exact", "first_order", "oracle")


@dataclass
class SpaceConfig:
    K: int = 2
    kind: str = "qubit"
    generator: str | None = None
    truncation: int | None = None


@dataclass
class ProbeConfig:
    family: str = "qubit_ghz"
    N: int | None = None
    nbar: float | None = None
    occupations: list[int] | None = None
    amplitudes: list | None = None


@dataclass
class NoiseConfig:
    g: list[float] = field(default_factory=lambda: [1e-3])
    v: Any = "max_correlated"
    V: list | None = None
    Sigma: list | None = None
    sigma2: list[float] | None = None


@dataclass
class MethodConfig:
    backend: str = "exact"
    oracle: bool = True
    oracle_method: str = "gauss_hermite"
    quadrature_points: int = 40
    mc_samples: int = 100_000
    shots: int = 100_000
    repetitions: int = 20
    seed: int = 0
    delta: float | None = None


@dataclass
class SweepConfig:
    K: list[int] = field(default_factory=lambda: [2, 3, 4, 5, 6])
    separable: str = "product_plus"


@dataclass
class MultiConfig:
    W: Any = "uniform"
    paired: bool = False
    n: int = 1
    nbar: float = 1.0


@dataclass
class NogoConfig:
    networks: int = 20
    depth: int = 2
    photon_budget: int | None = None


@dataclass
class OutputConfig:
    path: str = "out"
    plot_data: bool = True


@dataclass
class Scenario:
    name: str
    task: str
    space: SpaceConfig = field(default_factory=SpaceConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    method: MethodConfig = field(default_factory=MethodConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    multi: MultiConfig = field(default_factory=MultiConfig)
    nogo: NogoConfig = field(default_factory=NogoConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    # -- resolved objects --
    def space_spec(self, K: int | None = None) -> SpaceSpec:
        s = self.space
        site = SiteSpec(s.kind, s.generator, s.truncation)
        return SpaceSpec(tuple(site for _ in range(K or s.K)))

    def probe_spec(self, space: SpaceSpec, family: str | None = None) -> ProbeSpec:
        p = self.probe
        amps = None
        if p.amplitudes is not None:
            amps = np.array([complex(a[0], a[1]) if isinstance(a, list) else a for a in p.amplitudes])
        occ = tuple(p.occupations) if p.occupations is not None else None
        return ProbeSpec(family or p.family, space, N=p.N, occupations=occ, nbar=p.nbar, amplitudes=amps)

    def v_matrix(self, K: int | None = None) -> np.ndarray:
        return resolve_v(self.noise.v, K or self.space.K)


def resolve_v(v, K: int) -> np.ndarray:
    if isinstance(v, str):
        if v == "max_correlated":
            return max_correlated(K)
        if v == "identity":
            return np.eye(K)
        raise ValidationError(f"unknown v pattern {v!r}; use one of {V_PATTERNS} or a matrix")
    m = np.asarray(v, dtype=float)
    if m.shape != (K, K):
        raise ValidationError(f"v has shape {m.shape}, expected ({K}, {K})")
    return m


_SECTIONS = {
    "space": SpaceConfig,
    "probe": ProbeConfig,
    "noise": NoiseConfig,
    "method": MethodConfig,
    "sweep": SweepConfig,
    "multi": MultiConfig,
    "nogo": NogoConfig,
    "output": OutputConfig,
}


def _unknown(key: str, allowed, where: str) -> ValidationError:
    hint = difflib.get_close_matches(key, list(allowed), n=1)
    msg = f"unknown key {key!r} in {where}"
    if hint:
        msg += f"; did you mean {hint[0]!r}?"
    return ValidationError(msg)


def _build(cls, table: dict, where: str):
    if not isinstance(table, dict):
        raise ValidationError(f"{where} must be a table")
    names = {f.name for f in fields(cls)}
    for key in table:
        if key not in names:
            raise _unknown(key, names, where)
    try:
        return cls(**table)
    except TypeError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def _check_types(s: Scenario):
    def need(cond, field_name, msg):
        if not cond:
            raise ValidationError(f"{field_name}: {msg}")

    need(isinstance(s.name, str) and s.name, "name", "must be a non-empty string")
    need(re.fullmatch(r"[A-Za-z0-9_.-]+", s.name) is not None, "name", "use letters, digits, '_', '-', '.'")
    need(s.task in TASKS, "task", f"must be one of {TASKS}")
    need(isinstance(s.space.K, int) and s.space.K >= 1, "space.K", "must be a positive integer")
    need(s.probe.family in FAMILIES, "probe.family", f"must be one of {FAMILIES}")
    need(s.method.backend in BACKENDS, "method.backend", f"must be one of {BACKENDS}")
    need(s.method.oracle_method in ("gauss_hermite", "monte_carlo"), "method.oracle_method", "gauss_hermite or monte_carlo")
    need(isinstance(s.noise.g, list) and s.noise.g, "noise.g", "must be a non-empty list")
    need(all(isinstance(x, (int, float)) and x >= 0 for x in s.noise.g), "noise.g", "entries must be >= 0")
    if s.noise.sigma2 is not None:
        need(all(isinstance(x, (int, float)) and x >= 0 for x in s.noise.sigma2), "noise.sigma2", "entries must be >= 0")
    need(s.method.shots >= 1, "method.shots", "must be >= 1")
    need(s.method.repetitions >= 1, "method.repetitions", "must be >= 1")
    need(isinstance(s.method.seed, int) and s.method.seed >= 0, "method.seed", "must be a non-negative integer")
    need(all(isinstance(k, int) and k >= 1 for k in s.sweep.K), "sweep.K", "must be positive integers")
    need(s.sweep.separable in FAMILIES, "sweep.separable", f"must be one of {FAMILIES}")


def validate(s: Scenario) -> Scenario:
    _check_types(s)
    if s.task != "cv_advantage":  # the Gaussian backend needs no Fock space
        try:
            space = s.space_spec()
            s.probe_spec(space)
        except QsnError as exc:
            raise ValidationError(f"space/probe: {exc}") from exc
    K = s.space.K
    if not isinstance(s.noise.v, str):
        check_psd(resolve_v(s.noise.v, K), "noise.v")
    else:
        resolve_v(s.noise.v, K)
    for name in ("V", "Sigma"):
        m = getattr(s.noise, name)
        if m is not None:
            m = check_psd(m, f"noise.{name}")
            if m.shape != (K, K):
                raise ValidationError(f"noise.{name} has shape {m.shape}, expected ({K}, {K})")
    if s.task == "sweep_K" and not isinstance(s.noise.v, str):
        raise ValidationError("noise.v: sweep_K needs a named pattern so it can be resized")
    if s.task == "rayleigh" and not s.noise.sigma2:
        raise ValidationError("noise.sigma2: rayleigh needs a background grid")
    if s.task == "qfi_multi" and not isinstance(s.multi.W, str):
        W = np.asarray(s.multi.W, dtype=float)
        if W.shape != (K, K) or np.max(np.abs(W @ W.T - np.eye(K))) > 1e-10:
            raise ValidationError("multi.W must be a K x K orthogonal matrix")
    if s.task == "cv_advantage" and not 1 <= s.multi.n <= K:
        raise ValidationError("multi.n must satisfy 1 <= n <= space.K")
    if s.task == "nogo_passive":
        if s.space.kind != "boson" or s.space.generator not in (None, "number"):
            raise ValidationError("space: nogo_passive needs boson sites with number generators")
        if s.nogo.networks < 1 or s.nogo.depth < 1:
            raise ValidationError("nogo.networks and nogo.depth must be >= 1")
        budget = s.nogo.photon_budget
        if budget is not None and not 0 <= budget < s.space_spec().dims[0]:
            raise ValidationError("nogo.photon_budget must lie in [0, truncation)")
    return s


def scenario_from_dict(data: dict) -> Scenario:
    data = dict(data)
    allowed = {"name", "task", *_SECTIONS}
    for key in data:
        if key not in allowed:
            raise _unknown(key, allowed, "scenario")
    for key in ("name", "task"):
        if key not in data:
            raise ValidationError(f"missing required key {key!r}")
    kwargs = {"name": data.pop("name"), "task": data.pop("task")}
    for section, cls in _SECTIONS.items():
        kwargs[section] = _build(cls, data.pop(section, {}), f"[{section}]")
    return validate(Scenario(**kwargs))


def parse_toml(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ParseError(f"TOML parse error: {exc}", line, col) from exc


def load_scenario(path) -> Scenario:
    """Load a TOML scenario, or the ``scenario`` block of a run manifest (.json)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"JSON parse error: {exc}", exc.lineno, exc.colno) from exc
        data = data.get("scenario", data)
    else:
        data = parse_toml(text)
    return scenario_from_dict(data)
