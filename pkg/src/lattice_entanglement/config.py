"""Run configuration (YAML) and JSON serialization of lattice states."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .fock_space import DensityOperator, LatticeGeometry, ManyBodyState, State, as_statistics
from .state_builders import (
    DefectBudget,
    build_bell_chain,
    build_delocalized_atoms,
    build_mott,
    inject_defects,
    random_occupation_state,
    random_one_atom_state,
)
from .tof_observables import MomentumGrid, WannierEnvelope


class ConfigError(ValueError):
    """Unknown keys, unresolvable names or inconsistent settings."""


@dataclass
class GeometryConfig:
    L: int = 4
    d: float = 1.0
    max_occ: int = 1


@dataclass
class BuilderConfig:
    name: str = "mott"
    params: dict = field(default_factory=dict)


@dataclass
class EnvelopeConfig:
    model: str = "ideal"
    sigma: float | None = None
    zones: int | None = None


@dataclass
class BudgetConfig:
    epsilon: float = 0.0
    r: int = 1
    inject: bool = False


@dataclass
class ScheduleConfig:
    random_times: bool = False
    M: int | None = None


@dataclass
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    statistics: str = "boson"
    builder: BuilderConfig = field(default_factory=BuilderConfig)
    envelope: EnvelopeConfig = field(default_factory=EnvelopeConfig)
    x: list = field(default_factory=lambda: [1])
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    regimes: list = field(default_factory=lambda: ["occupation"])
    shots: int | None = None
    seed: int = 0
    output_dir: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        return _build(cls, data or {}, "config")

    @classmethod
    def load(cls, path) -> "RunConfig":
        data = yaml.safe_load(Path(path).read_text())
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
        return cls.from_dict(data)

    def dump(self, path=None) -> str:
        text = yaml.safe_dump(self.to_dict(), sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text

    def lattice(self) -> LatticeGeometry:
        g = self.geometry
        return LatticeGeometry(int(g.L), float(g.d), int(g.max_occ))

    def wannier(self) -> WannierEnvelope:
        return WannierEnvelope(self.envelope.model, float(self.geometry.d), self.envelope.sigma)

    def grid(self) -> MomentumGrid:
        env = self.wannier()
        grid = MomentumGrid.for_ring(self.lattice(), env, self.envelope.zones)
        grid.check(env)
        return grid

    def defect_budget(self) -> DefectBudget:
        return DefectBudget(float(self.budget.epsilon), int(self.budget.r))

    def validate(self) -> "RunConfig":
        if self.builder.name not in BUILDERS:
            raise ConfigError(f"unknown builder {self.builder.name!r}; choose from {sorted(BUILDERS)}")
        as_statistics(self.statistics)
        geom = self.lattice()
        for x in self.x:
            if int(x) % geom.L == 0:
                raise ConfigError(f"offset x={x} is a multiple of L={geom.L}")
        unknown = set(self.regimes) - {"occupation", "occupation_defects", "one_atom_fidelity", "general"}
        if unknown:
            raise ConfigError(f"unknown regimes {sorted(unknown)}")
        self.defect_budget()
        self.grid()
        return self


_NESTED = {"geometry": GeometryConfig, "builder": BuilderConfig, "envelope": EnvelopeConfig,
           "budget": BudgetConfig, "schedule": ScheduleConfig}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name for f in fields(cls)}
    extra = set(data) - names
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")
    kwargs = {}
    for key, value in data.items():
        if cls is RunConfig and key in _NESTED:
            value = _build(_NESTED[key], value or {}, key)
        kwargs[key] = value
    return cls(**kwargs)


# --- builders ----------------------------------------------------------------


def _hardcore_random(geom, statistics, rng, n_atoms=1, n_terms=4, levels=("a",)):
    return random_occupation_state(geom, int(n_atoms), int(n_terms), rng, tuple(levels), statistics)


def _one_atom_random(geom, statistics, rng, n_terms=None):
    return random_one_atom_state(geom, rng, statistics, None if n_terms is None else int(n_terms))


BUILDERS = {
    "mott": lambda geom, st, rng, filling=1, level="a": build_mott(geom, int(filling), level, st),
    "delocalized": lambda geom, st, rng, n_atoms=1, level="a": build_delocalized_atoms(geom, int(n_atoms), level, st),
    "bell_chain": lambda geom, st, rng, bell="phi-", pair_offset=1: build_bell_chain(geom, bell, int(pair_offset), st),
    "hardcore_random": _hardcore_random,
    "one_atom_random": _one_atom_random,
}


def build_from_config(cfg: RunConfig) -> tuple[ManyBodyState, DefectBudget]:
    """Builder output, with random defects injected when ``budget.inject`` is set."""
    cfg.validate()
    geom = cfg.lattice()
    rng = np.random.default_rng(cfg.seed)
    try:
        state = BUILDERS[cfg.builder.name](geom, as_statistics(cfg.statistics), rng, **cfg.builder.params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for builder {cfg.builder.name!r}: {exc}") from None
    budget = cfg.defect_budget()
    if cfg.budget.inject and budget.epsilon > 0:
        state, budget = inject_defects(state, budget, seed=cfg.seed)
    return state, budget


# --- state files -------------------------------------------------------------


def state_to_dict(rho: State) -> dict:
    g = rho.geometry
    out = {"geometry": {"L": g.L, "d": g.d, "max_occ": g.max_occ}, "statistics": rho.statistics.value}
    if isinstance(rho, ManyBodyState):
        out["kind"] = "pure"
        out["truncated"] = rho.truncated
        out["amplitudes"] = [[list(k), float(v.real), float(v.imag)] for k, v in sorted(rho.amplitudes.items())]
    else:
        out["kind"] = "mixed"
        out["basis"] = [list(k) for k in rho.basis]
        out["real"] = rho.matrix.real.tolist()
        out["imag"] = rho.matrix.imag.tolist()
    return out


def state_from_dict(data: dict) -> State:
    try:
        g = data["geometry"]
        geom = LatticeGeometry(int(g["L"]), float(g["d"]), int(g["max_occ"]))
        stats = as_statistics(data["statistics"])
        if data["kind"] == "pure":
            amps = {tuple(k): complex(re, im) for k, re, im in data["amplitudes"]}
            return ManyBodyState(geom, stats, amps, bool(data.get("truncated", False)))
        basis = tuple(tuple(k) for k in data["basis"])
        mat = np.array(data["real"]) + 1j * np.array(data["imag"])
        return DensityOperator(geom, stats, basis, mat)
    except KeyError as exc:
        raise ConfigError(f"state file lacks field {exc}") from None


def write_state(rho: State, path, metadata: dict | None = None) -> Path:
    data = state_to_dict(rho)
    if metadata:
        data["metadata"] = metadata
    path = Path(path)
    path.write_text(json.dumps(data, indent=1, sort_keys=True))
    return path


def read_state(path) -> State:
    return state_from_dict(json.loads(Path(path).read_text()))
