"""YAML scenario files.

A scenario has four top-level sections::

    agents:                 # a list of agents, or {gridmap: {...}}
      - tau_set: [1, 2, 3]
        tx_len: mapping_rule          # or identity, or {1: 6, 2: 6, 3: 7}
        delta_wait: "1/2"             # optional; omitted means (tau - 1) / 2
        cost: {kind: entropy, flip_prob: 0.01, cells: 1600}
    optimizer:  {mode: hybrid, eps_f: 0.001}
    simulation: {T: 100000, seeds: 20, policies: [whittle, round-robin]}
    output:     {dir: out, trace: false}

Unknown keys are rejected. Errors name the offending field and its line.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Any, Optional

import yaml

from .aoi import TX_RULES, AgentSpec, DomainError
from .codesign import OptimizerConfig
from .costs import cost_from_descriptor
from .gridmap import MappingScenario, build_scenario

DEFAULT_POLICIES = ("whittle", "round-robin", "randomized")
POLICY_NAMES = ("whittle", "round-robin", "randomized", "randomized-optimized",
                "max-age")


class ScenarioError(ValueError):
    def __init__(self, message: str, path: str = "", line: Optional[int] = None):
        self.path = path
        self.line = line
        where = path or "<root>"
        if line is not None:
            where = f"line {line}: {where}"
        super().__init__(f"{where}: {message}")


def _line_map(node, path: str = "", out: Optional[dict] = None) -> dict:
    """Map dotted field paths to 1-based source lines."""
    if out is None:
        out = {}
    if node is None:
        return out
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            sub = f"{path}.{k.value}" if path else str(k.value)
            out[sub] = k.start_mark.line + 1
            _line_map(v, sub, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, f"{path}[{i}]", out)
    return out


class _Ctx:
    def __init__(self, lines: dict):
        self.lines = lines

    def fail(self, msg: str, path: str):
        # fall back to the nearest enclosing field that has a source line
        probe = path
        while probe not in self.lines and probe:
            cut = max(probe.rfind("."), probe.rfind("["))
            probe = probe[:cut] if cut > 0 else ""
        raise ScenarioError(msg, path, self.lines.get(probe))

    def mapping(self, value, path: str, allowed: set, required: set = frozenset()) -> dict:
        if value is None:
            value = {}
        if not isinstance(value, dict):
            self.fail("expected a mapping", path)
        for k in value:
            if k not in allowed:
                self.fail(f"unknown key; allowed: {sorted(allowed)}", _join(path, k))
        for k in required:
            if k not in value:
                self.fail(f"missing required field {k!r}", path)
        return value


def _join(path: str, key) -> str:
    return f"{path}.{key}" if path else str(key)


@dataclass
class SimulationConfig:
    horizon: int = 100_000
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    burn_in: float = 0.1
    policies: list[str] = field(default_factory=lambda: list(DEFAULT_POLICIES))
    taus: Optional[list[int]] = None

    def __post_init__(self):
        if self.horizon < 1:
            raise DomainError("T must be positive")
        if not 0.0 <= self.burn_in < 1.0:
            raise DomainError("burn_in is a fraction of T in [0, 1)")
        for p in self.policies:
            if p not in POLICY_NAMES:
                raise DomainError(f"unknown policy {p!r}; known: {POLICY_NAMES}")
        if not self.seeds:
            raise DomainError("need at least one seed")

    @property
    def burn_in_slots(self) -> int:
        return int(self.burn_in * self.horizon)


@dataclass
class OutputConfig:
    dir: Optional[str] = None
    trace: bool = False


@dataclass
class Scenario:
    agents: Any  # list of agent dicts, or {"gridmap": {...}}
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    name: str = "scenario"

    def build_agents(self) -> list[AgentSpec]:
        if isinstance(self.agents, dict):
            return _gridmap_agents(self.agents["gridmap"])
        return [_agent(i, a) for i, a in enumerate(self.agents)]

    def to_dict(self) -> dict:
        out = {"name": self.name, "agents": self.agents,
               "optimizer": asdict(self.optimizer),
               "simulation": _sim_dict(self.simulation),
               "output": asdict(self.output)}
        return out


AGENT_KEYS = {"id", "tau_set", "tx_len", "delta_wait", "cost"}
GRID_KEYS = {"n", "p_min", "p_max", "flip_probs", "cells", "tau_set", "q_scale",
             "q_rate", "delta_wait"}
def _sim_dict(sim: SimulationConfig) -> dict:
    out = asdict(sim)
    out["T"] = out.pop("horizon")
    return out


SIM_KEYS = {"T", "seeds", "burn_in", "policies", "taus"}
OUT_KEYS = {"dir", "trace"}
TOP_KEYS = {"name", "agents", "optimizer", "simulation", "output"}


def _fraction_field(ctx: _Ctx, value, path: str):
    if value is None:
        return None
    try:
        frac = Fraction(str(value)) if not isinstance(value, bool) else None
    except (ValueError, ZeroDivisionError):
        frac = None
    if frac is None:
        ctx.fail("expected a rational number such as 0, 2 or '1/2'", path)
    return str(frac) if frac.denominator != 1 else int(frac)


def _int_list(ctx: _Ctx, value, path: str) -> list[int]:
    if not isinstance(value, list) or not value:
        ctx.fail("expected a non-empty list of integers", path)
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, int):
            ctx.fail("expected an integer", f"{path}[{i}]")
    return [int(v) for v in value]


def _parse_agent(ctx: _Ctx, raw, path: str) -> dict:
    a = ctx.mapping(raw, path, AGENT_KEYS, {"tau_set", "tx_len", "cost"})
    out: dict[str, Any] = {}
    if "id" in a:
        out["id"] = a["id"]
    out["tau_set"] = _int_list(ctx, a["tau_set"], _join(path, "tau_set"))
    tx = a["tx_len"]
    if isinstance(tx, str):
        if tx not in TX_RULES:
            ctx.fail(f"unknown rule; known: {sorted(TX_RULES)}", _join(path, "tx_len"))
        out["tx_len"] = tx
    elif isinstance(tx, dict):
        table = {}
        for k, v in tx.items():
            if isinstance(v, bool) or not isinstance(k, int) or not isinstance(v, int):
                ctx.fail("table entries must map integer tau to integer slots",
                         _join(path, f"tx_len.{k}"))
            table[int(k)] = int(v)
        out["tx_len"] = table
    else:
        ctx.fail("expected a rule name or a table {tau: slots}", _join(path, "tx_len"))
    if "delta_wait" in a:
        out["delta_wait"] = _fraction_field(ctx, a["delta_wait"], _join(path, "delta_wait"))
    cost = a["cost"]
    if not isinstance(cost, dict):
        ctx.fail("expected a cost descriptor mapping", _join(path, "cost"))
    try:
        cost_from_descriptor(cost)
    except (DomainError, TypeError) as e:
        ctx.fail(str(e), _join(path, "cost"))
    out["cost"] = dict(cost)
    try:
        _agent(0, out)
    except DomainError as e:
        ctx.fail(str(e), path)
    return out


def _agent(idx: int, a: dict) -> AgentSpec:
    cost = cost_from_descriptor(a["cost"])
    dw = a.get("delta_wait")
    dw = None if dw is None else Fraction(str(dw))
    aid = a.get("id", idx)
    if isinstance(a["tx_len"], str):
        return AgentSpec.with_rule(aid, a["tau_set"], a["tx_len"], cost, dw)
    return AgentSpec(id=aid, tau_set=tuple(a["tau_set"]), tx_len=dict(a["tx_len"]),
                     cost=cost, delta_wait=dw)


def _gridmap_agents(g: dict) -> list[AgentSpec]:
    kw = {k: g[k] for k in ("cells", "q_scale", "q_rate") if k in g}
    if "tau_set" in g:
        kw["tau_set"] = tuple(g["tau_set"])
    if "flip_probs" in g:
        from .gridmap import RegionModel
        scen = MappingScenario([RegionModel(float(p), **kw) for p in g["flip_probs"]])
    else:
        scen = MappingScenario.log_spaced(g.get("n", 9), g.get("p_min", 5e-4),
                                          g.get("p_max", 1e-1), **kw)
    dw = g.get("delta_wait")
    return build_scenario(scen, None if dw is None else Fraction(str(dw)))


def _parse_gridmap(ctx: _Ctx, raw, path: str) -> dict:
    g = ctx.mapping(raw, path, GRID_KEYS)
    out = dict(g)
    if "tau_set" in g:
        out["tau_set"] = _int_list(ctx, g["tau_set"], _join(path, "tau_set"))
    if "delta_wait" in g:
        out["delta_wait"] = _fraction_field(ctx, g["delta_wait"], _join(path, "delta_wait"))
    try:
        _gridmap_agents(out)
    except (DomainError, TypeError, ValueError) as e:
        ctx.fail(str(e), path)
    return out


def _build(ctx: _Ctx, cls, raw: dict, path: str):
    names = {fd.name for fd in fields(cls)}
    try:
        return cls(**{k: v for k, v in raw.items() if k in names})
    except (DomainError, TypeError, ValueError) as e:
        ctx.fail(str(e), path)


def parse_scenario(text: str, default_name: str = "scenario") -> Scenario:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ScenarioError(f"invalid YAML: {getattr(e, 'problem', e)}", "",
                            mark.line + 1 if mark else None) from None
    ctx = _Ctx(_line_map(node))
    top = ctx.mapping(data, "", TOP_KEYS, {"agents"})

    raw_agents = top["agents"]
    if isinstance(raw_agents, list):
        if not raw_agents:
            ctx.fail("need at least one agent", "agents")
        agents: Any = [_parse_agent(ctx, a, f"agents[{i}]") for i, a in enumerate(raw_agents)]
    elif isinstance(raw_agents, dict):
        ctx.mapping(raw_agents, "agents", {"gridmap"}, {"gridmap"})
        agents = {"gridmap": _parse_gridmap(ctx, raw_agents["gridmap"], "agents.gridmap")}
    else:
        ctx.fail("expected a list of agents or {gridmap: ...}", "agents")

    opt_raw = ctx.mapping(top.get("optimizer"), "optimizer",
                          {fd.name for fd in fields(OptimizerConfig)})
    optimizer = _build(ctx, OptimizerConfig, opt_raw, "optimizer")

    sim_raw = dict(ctx.mapping(top.get("simulation"), "simulation", SIM_KEYS))
    if "T" in sim_raw:
        sim_raw["horizon"] = sim_raw.pop("T")
    if isinstance(sim_raw.get("seeds"), int) and not isinstance(sim_raw["seeds"], bool):
        sim_raw["seeds"] = list(range(sim_raw["seeds"]))
    elif "seeds" in sim_raw:
        sim_raw["seeds"] = _int_list(ctx, sim_raw["seeds"], "simulation.seeds")
    if sim_raw.get("taus") is not None:
        sim_raw["taus"] = _int_list(ctx, sim_raw["taus"], "simulation.taus")
    if "policies" in sim_raw and not isinstance(sim_raw["policies"], list):
        ctx.fail("expected a list of policy names", "simulation.policies")
    simulation = _build(ctx, SimulationConfig, sim_raw, "simulation")

    out_raw = ctx.mapping(top.get("output"), "output", OUT_KEYS)
    output = _build(ctx, OutputConfig, out_raw, "output")

    scen = Scenario(agents, optimizer, simulation, output, str(top.get("name", default_name)))
    n_agents = len(scen.build_agents())
    if scen.simulation.taus is not None and len(scen.simulation.taus) != n_agents:
        ctx.fail(f"need one tau per agent ({n_agents})", "simulation.taus")
    return scen


def load_scenario(path) -> Scenario:
    from pathlib import Path
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ScenarioError(f"cannot read scenario: {e.strerror}", str(p)) from None
    return parse_scenario(text, default_name=p.stem)


def dump_scenario(scen: Scenario) -> str:
    return yaml.safe_dump(scen.to_dict(), sort_keys=False)
