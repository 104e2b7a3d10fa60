"""Binary consensus game with the External Majority rule on multiplex networks.

Two protocols share the same agent state:

* ``permeability`` - each step an agent picks a layer uniformly, then a
  partner uniformly from its neighbours in that layer.
* ``switching`` - each agent is active in one layer (its context), only meets
  neighbours active in the same layer, and after every step leaves its layer
  with that layer's switching probability.

All randomness for one run comes from a single ``numpy.random.Generator``
consumed in a fixed order: initial opinions, initial contexts, then per cycle
the agent permutation followed by each agent's draws in execution order.
The hot loops are compiled with numba and advance the same generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .network import Graph, ParameterError

PERMEABILITY = "permeability"
SWITCHING = "switching"
PROTOCOLS = (PERMEABILITY, SWITCHING)
_PROTOCOL_CODE = {PERMEABILITY: 0, SWITCHING: 1}

DEFAULT_MAX_CYCLES = 2000


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class SocialSpace:
    """Network layers over one agent population plus per-layer switching probabilities."""

    layers: tuple[Graph, ...]
    switching_probs: tuple[float, ...] = ()

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ParameterError("a social space needs at least one layer")
        n = layers[0].node_count
        if any(g.node_count != n for g in layers):
            raise ParameterError("all layers must share the same node_count")
        probs = tuple(float(p) for p in self.switching_probs) or (0.0,) * len(layers)
        if len(probs) != len(layers):
            raise ParameterError(
                f"got {len(probs)} switching probabilities for {len(layers)} layers"
            )
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ParameterError("switching probabilities must lie in [0, 1]")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "switching_probs", probs)

    @property
    def agent_count(self) -> int:
        return self.layers[0].node_count

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """``(offsets, neighbours)``: layer ``l`` neighbours of ``v`` are
        ``neighbours[offsets[l, v]:offsets[l, v + 1]]``."""
        cached = self.__dict__.get("_packed")
        if cached is None:
            n = self.agent_count
            offsets = np.empty((self.layer_count, n + 1), dtype=np.int64)
            chunks = []
            base = 0
            for l, g in enumerate(self.layers):
                indptr, indices = g.csr
                offsets[l] = indptr + base
                chunks.append(indices)
                base += len(indices)
            cached = (offsets, np.concatenate(chunks).astype(np.int64))
            object.__setattr__(self, "_packed", cached)
        return cached


@dataclass(frozen=True)
class SimConfig:
    space: SocialSpace
    protocol: str = PERMEABILITY
    max_cycles: int = DEFAULT_MAX_CYCLES
    seed: int = 0
    record_series: bool = False
    # "random": independent fair coin per agent; "exact": n//2 agents hold opinion 1
    initial_opinions: str = "random"

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ParameterError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.max_cycles < 1:
            raise ParameterError("max_cycles must be >= 1")
        if self.initial_opinions not in ("random", "exact"):
            raise ParameterError("initial_opinions must be 'random' or 'exact'")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class Agent:
    opinion: int
    memory: tuple[int, int]
    context: int


@dataclass(frozen=True)
class Series:
    """Per-cycle observations; row ``t`` describes the state after cycle ``t + 1``."""

    count_opinion0: np.ndarray
    count_opinion1: np.ndarray
    mean_mem_diff: np.ndarray
    var_mem_diff: np.ndarray

    def __len__(self):
        return len(self.count_opinion0)

    def rows(self):
        for t in range(len(self)):
            yield (
                t + 1,
                int(self.count_opinion0[t]),
                int(self.count_opinion1[t]),
                float(self.mean_mem_diff[t]),
                float(self.var_mem_diff[t]),
            )

    def __eq__(self, other):
        if not isinstance(other, Series):
            return NotImplemented
        return all(
            np.array_equal(a, b)
            for a, b in zip(
                (self.count_opinion0, self.count_opinion1, self.mean_mem_diff, self.var_mem_diff),
                (other.count_opinion0, other.count_opinion1, other.mean_mem_diff, other.var_mem_diff),
            )
        )


@dataclass(frozen=True)
class RunResult:
    converged: bool
    cycles_used: int
    encounters: int
    final_opinion: int | None
    steps: int
    seed: int = 0
    protocol: str = PERMEABILITY
    series: Series | None = field(default=None, compare=False)


@dataclass
class SimState:
    config: SimConfig
    opinion: np.ndarray
    memory: np.ndarray
    context: np.ndarray
    cycles: int = 0
    encounters: int = 0
    steps: int = 0
    _series: list = field(default_factory=list, repr=False)

    @property
    def agent_count(self) -> int:
        return len(self.opinion)

    def agent(self, i: int) -> Agent:
        return Agent(int(self.opinion[i]), (int(self.memory[i, 0]), int(self.memory[i, 1])), int(self.context[i]))

    def _kernel_args(self):
        offsets, nbrs = self.config.space.packed()
        zeta = np.asarray(self.config.space.switching_probs, dtype=np.float64)
        return self.opinion, self.memory, self.context, offsets, nbrs, zeta


# ---------------------------------------------------------------------------
# Compiled kernels


@njit(cache=True)
def _below(rng, m):
    # uniform integer in [0, m); bias is below 2**-50 for the sizes used here
    r = int(rng.random() * m)
    return r if r < m else m - 1


@njit(cache=True)
def _observe(memory, opinion, i, observed):
    memory[i, observed] += 1
    if memory[i, observed] > memory[i, opinion[i]]:
        opinion[i] = observed


@njit(cache=True)
def _step_permeability(i, opinion, memory, offsets, nbrs, rng):
    layer = _below(rng, offsets.shape[0])
    start = offsets[layer, i]
    degree = offsets[layer, i + 1] - start
    if degree == 0:
        return False
    partner = nbrs[start + _below(rng, degree)]
    _observe(memory, opinion, i, opinion[partner])
    return True


@njit(cache=True)
def _step_switching(i, opinion, memory, context, offsets, nbrs, zeta, rng):
    here = context[i]
    start = offsets[here, i]
    stop = offsets[here, i + 1]
    available = 0
    for j in range(start, stop):
        if context[nbrs[j]] == here:
            available += 1
    met = False
    if available > 0:
        pick = _below(rng, available)
        for j in range(start, stop):
            if context[nbrs[j]] == here:
                if pick == 0:
                    _observe(memory, opinion, i, opinion[nbrs[j]])
                    break
                pick -= 1
        met = True
    layers = offsets.shape[0]
    if rng.random() < zeta[here] and layers > 1:
        other = _below(rng, layers - 1)
        if other >= here:
            other += 1
        context[i] = other
    return met


@njit(cache=True)
def _permutation(rng, n):
    order = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = _below(rng, i + 1)
        order[i], order[j] = order[j], order[i]
    return order


@njit(cache=True)
def _cycle(protocol, opinion, memory, context, offsets, nbrs, zeta, rng):
    n = opinion.shape[0]
    met = 0
    for i in _permutation(rng, n):
        if protocol == 0:
            ok = _step_permeability(i, opinion, memory, offsets, nbrs, rng)
        else:
            ok = _step_switching(i, opinion, memory, context, offsets, nbrs, zeta, rng)
        if ok:
            met += 1
    return met


@njit(cache=True)
def _all_same(opinion):
    for i in range(1, opinion.shape[0]):
        if opinion[i] != opinion[0]:
            return False
    return True


@njit(cache=True)
def _record(opinion, memory, t, c0, c1, mean_out, var_out):
    n = opinion.shape[0]
    ones = 0
    total = 0.0
    for i in range(n):
        ones += opinion[i]
        total += abs(memory[i, 0] - memory[i, 1])
    mean = total / n
    sq = 0.0
    for i in range(n):
        dev = abs(memory[i, 0] - memory[i, 1]) - mean
        sq += dev * dev
    c0[t] = n - ones
    c1[t] = ones
    mean_out[t] = mean
    var_out[t] = sq / n


@njit(cache=True)
def _run(protocol, opinion, memory, context, offsets, nbrs, zeta, max_cycles, record,
         c0, c1, mean_out, var_out, rng):
    cycles = 0
    met = 0
    while cycles < max_cycles and not _all_same(opinion):
        met += _cycle(protocol, opinion, memory, context, offsets, nbrs, zeta, rng)
        if record:
            _record(opinion, memory, cycles, c0, c1, mean_out, var_out)
        cycles += 1
    return cycles, met


# ---------------------------------------------------------------------------
# Public API


def em_update(memory: tuple[int, int], current: int, observed: int) -> tuple[tuple[int, int], int]:
    """External Majority: count the observation, switch only on a strict majority."""
    mem = list(memory)
    mem[observed] += 1
    opinion = observed if mem[observed] > mem[current] else current
    return (mem[0], mem[1]), opinion


def init_run(config: SimConfig, rng: np.random.Generator) -> SimState:
    n = config.space.agent_count
    if config.initial_opinions == "exact":
        opinion = np.zeros(n, dtype=np.int64)
        opinion[rng.permutation(n)[: n // 2]] = 1
    else:
        opinion = rng.integers(0, 2, size=n).astype(np.int64)
    if config.protocol == SWITCHING:
        context = rng.integers(0, config.space.layer_count, size=n).astype(np.int64)
    else:
        context = np.zeros(n, dtype=np.int64)
    return SimState(config, opinion, np.zeros((n, 2), dtype=np.int64), context)


def step_permeability(state: SimState, agent_id: int, rng: np.random.Generator) -> bool:
    opinion, memory, _, offsets, nbrs, _ = state._kernel_args()
    return bool(_step_permeability(agent_id, opinion, memory, offsets, nbrs, rng))


def step_switching(state: SimState, agent_id: int, rng: np.random.Generator) -> bool:
    opinion, memory, context, offsets, nbrs, zeta = state._kernel_args()
    return bool(_step_switching(agent_id, opinion, memory, context, offsets, nbrs, zeta, rng))


def run_cycle(state: SimState, rng: np.random.Generator) -> None:
    """One cycle: every agent steps once, in a fresh uniformly random order."""
    code = _PROTOCOL_CODE[state.config.protocol]
    state.encounters += int(_cycle(code, *state._kernel_args(), rng))
    state.steps += state.agent_count
    state.cycles += 1
    if state.config.record_series:
        state._series.append(_series_row(state.opinion, state.memory))


def _series_row(opinion, memory):
    c0, c1 = np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64)
    mean, var = np.zeros(1), np.zeros(1)
    _record(opinion, memory, 0, c0, c1, mean, var)
    return int(c0[0]), int(c1[0]), float(mean[0]), float(var[0])


def is_consensus(state: SimState) -> bool:
    """True when every agent holds the same opinion (vacuously true with no agents)."""
    return len(state.opinion) == 0 or bool(np.all(state.opinion == state.opinion[0]))


def run_simulation(config: SimConfig, rng: np.random.Generator | None = None) -> RunResult:
    """Run until consensus or ``max_cycles``; deterministic in ``config.seed``.

    ``rng`` overrides the generator derived from the seed, letting callers
    that already drew network layers from a stream continue it.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    state = init_run(config, rng)
    size = config.max_cycles if config.record_series else 0
    c0 = np.zeros(size, dtype=np.int64)
    c1 = np.zeros(size, dtype=np.int64)
    mean = np.zeros(size, dtype=np.float64)
    var = np.zeros(size, dtype=np.float64)
    cycles, met = _run(
        _PROTOCOL_CODE[config.protocol], *state._kernel_args(),
        config.max_cycles, config.record_series, c0, c1, mean, var, rng,
    )
    state.cycles, state.encounters, state.steps = int(cycles), int(met), int(cycles) * state.agent_count
    return result_from_state(state, c0[:cycles], c1[:cycles], mean[:cycles], var[:cycles])


def result_from_state(state: SimState, *series_columns) -> RunResult:
    converged = is_consensus(state)
    final = int(state.opinion[0]) if converged and state.agent_count else None
    series = None
    if state.config.record_series:
        if not series_columns:
            rows = np.array(state._series, dtype=np.float64).reshape(-1, 4)
            series_columns = (rows[:, 0].astype(np.int64), rows[:, 1].astype(np.int64), rows[:, 2], rows[:, 3])
        series = Series(*series_columns)
    return RunResult(
        converged=converged,
        cycles_used=state.cycles,
        encounters=state.encounters,
        final_opinion=final,
        steps=state.steps,
        seed=state.config.seed,
        protocol=state.config.protocol,
        series=series,
    )
