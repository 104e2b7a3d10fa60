"""YAML experiment configuration: parsing, validation and normalized dumps.

Two kinds of document are accepted. A *run* document describes one set of
layers explicitly::

    kind: run
    protocol: switching
    seed: 7
    layers:
      - {topology: k-regular, k: 30, zeta: 0.5}
      - {topology: scale-free, d: 2, zeta: 0.25}

A *sweep* document describes a grid::

    kind: sweep
    topology: k-regular
    layers: [1, 2, 3]
    k: [1, 10]
    zeta: "0:1:0.05"      # start:stop:step, inclusive

Every problem found is reported with the line it occurs on.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

import yaml

from .engine import PERMEABILITY, PROTOCOLS, SWITCHING
from .experiment import CUSTOM, K_REGULAR, MIXED, SCALE_FREE, TOPOLOGIES, Cell, LayerSpec, SweepSpec
from .network import ParameterError


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("\n".join(problems))


@dataclass(frozen=True)
class LayerConfig:
    topology: str
    param: int
    zeta: float = 0.0


@dataclass(frozen=True)
class RunSpec:
    """A single configuration, run ``runs`` times with seeds derived from ``seed``."""

    protocol: str = PERMEABILITY
    layers: tuple[LayerConfig, ...] = ()
    agents: int = 100
    max_cycles: int = 2000
    seed: int = 0
    runs: int = 1
    record_series: bool = False
    initial_opinions: str = "random"

    @property
    def cell(self) -> Cell:
        """The layers as a cell, which names the run seeds and builds instances."""
        zeta = tuple(l.zeta for l in self.layers) if self.protocol == SWITCHING else ()
        plan = tuple(LayerSpec(l.topology, l.param) for l in self.layers)
        return Cell(self.protocol, CUSTOM, len(plan), zeta=zeta, plan=plan)


_RUN_KEYS = {"kind", "protocol", "layers", "agents", "max_cycles", "seed", "runs",
             "record_series", "initial_opinions", "topology", "k", "d", "zeta"}
_SWEEP_KEYS = {"kind", "protocol", "topology", "layers", "k", "d", "zeta", "zeta_mode", "runs",
               "instances", "agents", "max_cycles", "seed", "frozen_networks", "initial_opinions"}
_LAYER_KEYS = {"topology", "k", "d", "zeta"}


class _Reader:
    def __init__(self):
        self.problems: list[str] = []

    def fail(self, node, msg):
        self.problems.append(f"line {node.start_mark.line + 1}: {msg}")

    def mapping(self, node, allowed, where):
        if not isinstance(node, yaml.MappingNode):
            self.fail(node, f"{where} must be a mapping")
            return {}
        out = {}
        for key, value in node.value:
            name = key.value
            if name not in allowed:
                self.fail(key, f"unknown key {name!r} in {where}")
            elif name in out:
                self.fail(key, f"duplicate key {name!r}")
            else:
                out[name] = value
        return out

    def scalar(self, node, field, kind):
        if not isinstance(node, yaml.ScalarNode):
            self.fail(node, f"field {field!r}: expected a single value")
            return None
        value = yaml.safe_load(yaml.serialize(node))
        if kind is bool:
            if not isinstance(value, bool):
                self.fail(node, f"field {field!r}: expected true or false")
                return None
            return value
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self.fail(node, f"field {field!r}: expected an integer, got {node.value!r}")
                return None
            return value
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.fail(node, f"field {field!r}: expected a number, got {node.value!r}")
                return None
            return float(value)
        return str(value)

    def int_in(self, node, field, lo, hi=None):
        v = self.scalar(node, field, int)
        if v is not None and (v < lo or (hi is not None and v > hi)):
            bound = f">= {lo}" if hi is None else f"in [{lo}, {hi}]"
            self.fail(node, f"field {field!r}: must be {bound}, got {v}")
            return None
        return v

    def choice(self, node, field, options):
        v = self.scalar(node, field, str)
        if v is not None and v not in options:
            self.fail(node, f"field {field!r}: must be one of {', '.join(options)}, got {v!r}")
            return None
        return v

    def int_list(self, node, field, lo):
        if isinstance(node, yaml.SequenceNode):
            items = [self.int_in(item, field, lo) for item in node.value]
        else:
            items = [self.int_in(node, field, lo)]
        if not items:
            self.fail(node, f"field {field!r}: list is empty")
        return tuple(items)

    def prob(self, node, field):
        v = self.scalar(node, field, float)
        if v is not None and not 0.0 <= v <= 1.0:
            self.fail(node, f"field {field!r}: probability must be in [0, 1], got {v}")
            return None
        return v

    def prob_grid(self, node, field):
        if isinstance(node, yaml.SequenceNode):
            return tuple(self.prob(item, field) for item in node.value)
        if isinstance(node, yaml.ScalarNode) and ":" in node.value:
            try:
                return parse_range(node.value)
            except ValueError as exc:
                self.fail(node, f"field {field!r}: {exc}")
                return ()
        return (self.prob(node, field),)


def parse_range(text: str) -> tuple[float, ...]:
    """``"start:stop:step"`` to an inclusive tuple of probabilities."""
    try:
        start, stop, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise ValueError(f"range must look like start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise ValueError(f"range {text!r} must have step > 0 and stop >= start")
    if start < 0 or stop > 1:
        raise ValueError(f"range {text!r} leaves [0, 1]")
    count = int(round((stop - start) / step)) + 1
    values = tuple(round(start + i * step, 10) for i in range(count))
    if values[-1] > stop + 1e-9:
        values = values[:-1]
    return values


def new_seed() -> int:
    return secrets.randbits(64)


def parse_config(text: str) -> SweepSpec | RunSpec:
    """Parse and validate a configuration document.

    Raises :class:`ConfigError` listing every problem with its line number.
    A missing ``seed`` is filled with a fresh random one.
    """
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"not valid YAML: {exc}"]) from None
    r = _Reader()
    if root is None:
        raise ConfigError(["line 1: empty configuration"])
    top = r.mapping(root, _RUN_KEYS | _SWEEP_KEYS, "configuration")
    if r.problems:
        raise ConfigError(r.problems)
    kind = r.choice(top["kind"], "kind", ("run", "sweep")) if "kind" in top else "run"
    if kind == "sweep":
        spec = _parse_sweep(r, root)
    elif kind == "run":
        spec = _parse_run(r, root)
    else:
        spec = None
    if r.problems:
        raise ConfigError(r.problems)
    return spec


def _common(r, top, out):
    if "protocol" in top:
        out["protocol"] = r.choice(top["protocol"], "protocol", PROTOCOLS)
    if "agents" in top:
        out["agents"] = r.int_in(top["agents"], "agents", 1)
    if "max_cycles" in top:
        out["max_cycles"] = r.int_in(top["max_cycles"], "max_cycles", 1)
    if "initial_opinions" in top:
        out["initial_opinions"] = r.choice(top["initial_opinions"], "initial_opinions", ("random", "exact"))
    out["seed"] = r.int_in(top["seed"], "seed", 0, 2**64 - 1) if "seed" in top else new_seed()


def _parse_run(r, root) -> RunSpec | None:
    top = r.mapping(root, _RUN_KEYS, "run configuration")
    out = {}
    _common(r, top, out)
    if "runs" in top:
        out["runs"] = r.int_in(top["runs"], "runs", 1)
    if "record_series" in top:
        out["record_series"] = r.scalar(top["record_series"], "record_series", bool)

    if "layers" not in top:
        r.fail(root, "missing required field 'layers'")
        return None
    node = top["layers"]
    layers = []
    if isinstance(node, yaml.SequenceNode):
        for item in node.value:
            layers.append(_layer(r, r.mapping(item, _LAYER_KEYS, "layer"), item))
        if not layers:
            r.fail(node, "field 'layers': at least one layer is required")
    else:
        # shorthand: layers: <count> with a shared topology block at top level
        count = r.int_in(node, "layers", 1)
        shared = {k: v for k, v in top.items() if k in _LAYER_KEYS}
        layer = _layer(r, shared, root)
        layers = [layer] * (count or 0)
    if any(l is None for l in layers):
        return None
    return RunSpec(layers=tuple(layers), **out)


def _layer(r, block, node) -> LayerConfig | None:
    if "topology" not in block:
        r.fail(node, "layer is missing required field 'topology'")
        return None
    topo = r.choice(block["topology"], "topology", (K_REGULAR, SCALE_FREE))
    want, other = ("k", "d") if topo == K_REGULAR else ("d", "k")
    if other in block:
        r.fail(block[other], f"field {other!r} does not apply to a {topo} layer")
    if want not in block:
        r.fail(node, f"{topo} layer is missing required field {want!r}")
        return None
    param = r.int_in(block[want], want, 1)
    zeta = r.prob(block["zeta"], "zeta") if "zeta" in block else 0.0
    if topo is None or param is None or zeta is None:
        return None
    return LayerConfig(topo, param, zeta)


def _parse_sweep(r, root) -> SweepSpec | None:
    top = r.mapping(root, _SWEEP_KEYS, "sweep configuration")
    out = {}
    _common(r, top, out)
    if "topology" not in top:
        r.fail(root, "missing required field 'topology'")
        return None
    topo = r.choice(top["topology"], "topology", TOPOLOGIES)
    out["topology"] = topo
    if topo in (K_REGULAR, MIXED):
        if "k" not in top:
            r.fail(root, f"{topo} sweep is missing required field 'k'")
        else:
            out["k_values"] = r.int_list(top["k"], "k", 1)
    elif "k" in top:
        r.fail(top["k"], f"field 'k' does not apply to a {topo} sweep")
    if topo in (SCALE_FREE, MIXED):
        if "d" not in top:
            r.fail(root, f"{topo} sweep is missing required field 'd'")
        else:
            out["d_values"] = r.int_list(top["d"], "d", 1)
    elif "d" in top:
        r.fail(top["d"], f"field 'd' does not apply to a {topo} sweep")
    if "layers" in top:
        out["layer_counts"] = r.int_list(top["layers"], "layers", 1)
        if topo == MIXED and out["layer_counts"] != (2,):
            r.fail(top["layers"], "field 'layers': a mixed sweep always has 2 layers")
    elif topo == MIXED:
        out["layer_counts"] = (2,)
    if "zeta" in top:
        out["zeta_values"] = r.prob_grid(top["zeta"], "zeta")
    if "zeta_mode" in top:
        out["zeta_mode"] = r.choice(top["zeta_mode"], "zeta_mode", ("symmetric", "grid"))
    if "runs" in top:
        out["runs_per_cell"] = r.int_in(top["runs"], "runs", 1)
    if "instances" in top:
        out["instances"] = r.int_in(top["instances"], "instances", 1)
    if "frozen_networks" in top:
        out["frozen_networks"] = r.scalar(top["frozen_networks"], "frozen_networks", bool)
    if "seed" in out:
        out["master_seed"] = out.pop("seed")
    if r.problems:
        return None
    try:
        return SweepSpec(**out)
    except ParameterError as exc:
        r.fail(root, str(exc))
        return None


def dump_config(spec: SweepSpec | RunSpec) -> str:
    """Normalized YAML with every field spelled out; ``parse_config`` reads it back unchanged."""
    if isinstance(spec, RunSpec):
        doc = {
            "kind": "run",
            "protocol": spec.protocol,
            "agents": spec.agents,
            "max_cycles": spec.max_cycles,
            "seed": spec.seed,
            "runs": spec.runs,
            "record_series": spec.record_series,
            "initial_opinions": spec.initial_opinions,
            "layers": [
                {"topology": l.topology, ("k" if l.topology == K_REGULAR else "d"): l.param, "zeta": l.zeta}
                for l in spec.layers
            ],
        }
    else:
        doc = {
            "kind": "sweep",
            "protocol": spec.protocol,
            "topology": spec.topology,
            "layers": list(spec.layer_counts),
        }
        if spec.topology in (K_REGULAR, MIXED):
            doc["k"] = list(spec.k_values)
        if spec.topology in (SCALE_FREE, MIXED):
            doc["d"] = list(spec.d_values)
        doc.update({
            "zeta": list(spec.zeta_values),
            "zeta_mode": spec.zeta_mode,
            "runs": spec.runs_per_cell,
            "instances": spec.instances,
            "agents": spec.agents,
            "max_cycles": spec.max_cycles,
            "seed": spec.master_seed,
            "frozen_networks": spec.frozen_networks,
            "initial_opinions": spec.initial_opinions,
        })
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)

