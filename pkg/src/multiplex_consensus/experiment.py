"""Seeded Monte Carlo sweeps over multiplex configurations.

A sweep is a grid of *cells*; each cell fixes the protocol, the layer
topologies and the switching probabilities. Every run of a cell draws fresh,
independently relabelled layer instances and then plays the consensus game,
both from one generator seeded with the run seed.

Run seeds come from :class:`numpy.random.SeedSequence` with the master seed as
entropy and ``(cell key, run index)`` as spawn key, where the cell key is the
first 8 bytes of the SHA-256 of the cell id. Adding or removing cells never
changes the streams of other cells, and results do not depend on how cells
are scheduled across workers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .engine import PERMEABILITY, SWITCHING, RunResult, SimConfig, SocialSpace, run_simulation
from .metrics import CorrelationReport, GraphProperties, UndefinedMetricError
from .network import (
    Graph,
    KRegularParams,
    ParameterError,
    ScaleFreeParams,
    generate_k_regular,
    generate_scale_free,
    merge_graphs,
    shuffle_labels,
)

log = logging.getLogger(__name__)

K_REGULAR = "k-regular"
SCALE_FREE = "scale-free"
MIXED = "mixed"
CUSTOM = "custom"
TOPOLOGIES = (K_REGULAR, SCALE_FREE, MIXED)

SWEEP_COLUMNS = [
    "cell_id", "protocol", "layers", "topology", "k", "d", "zeta", "runs",
    "convergence_ratio", "enc_mean", "enc_sd",
    "enc_min", "enc_q1", "enc_median", "enc_q3", "enc_max",
]
PROPERTY_COLUMNS = [
    "config_id", "instance", "edges", "clustering_coefficient", "avg_path_length", "reachable_fraction",
]
CORRELATION_COLUMNS = ["family", "x", "y", "rho", "p_value", "ci_low", "ci_high"]
RUN_COLUMNS = ["seed", "protocol", "converged", "cycles", "encounters", "final_opinion"]
SERIES_COLUMNS = ["cycle", "count_opinion0", "count_opinion1", "mean_mem_diff", "var_mem_diff"]


class InsufficientDataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Layers and cells


@dataclass(frozen=True)
class LayerSpec:
    topology: str
    param: int

    def build(self, n: int, rng: np.random.Generator) -> Graph:
        if self.topology == K_REGULAR:
            g = generate_k_regular(KRegularParams(n, self.param))
        elif self.topology == SCALE_FREE:
            g = generate_scale_free(ScaleFreeParams(n, self.param), rng)
        else:
            raise ParameterError(f"unknown layer topology {self.topology!r}")
        return shuffle_labels(g, rng)

    def validate(self, n: int) -> None:
        if self.topology == K_REGULAR:
            KRegularParams(n, self.param)
        else:
            ScaleFreeParams(n, self.param)


@dataclass(frozen=True)
class Cell:
    protocol: str
    topology: str
    layers: int
    k: int | None = None
    d: int | None = None
    zeta: tuple[float, ...] = ()
    # explicit per-layer topologies for CUSTOM cells
    plan: tuple[LayerSpec, ...] = ()

    def layer_specs(self) -> list[LayerSpec]:
        if self.topology == CUSTOM:
            return list(self.plan)
        if self.topology == K_REGULAR:
            return [LayerSpec(K_REGULAR, self.k)] * self.layers
        if self.topology == SCALE_FREE:
            return [LayerSpec(SCALE_FREE, self.d)] * self.layers
        return [LayerSpec(K_REGULAR, self.k), LayerSpec(SCALE_FREE, self.d)]

    @property
    def config_id(self) -> str:
        """Structural identity, shared by every protocol and switching setting."""
        if self.topology == CUSTOM:
            names = {K_REGULAR: "kreg", SCALE_FREE: "sf"}
            return f"{CUSTOM}/" + "+".join(f"{names[l.topology]}{l.param}" for l in self.plan)
        parts = [self.topology, f"L{self.layers}"]
        if self.k is not None:
            parts.append(f"k{self.k}")
        if self.d is not None:
            parts.append(f"d{self.d}")
        return "/".join(parts)

    @property
    def cell_id(self) -> str:
        cid = f"{self.protocol}/{self.config_id}"
        if self.protocol == SWITCHING:
            cid += "/z" + ",".join(_fmt(z) for z in self.zeta)
        return cid

    def structural(self) -> "Cell":
        """The permeability cell with the same layers (whose run seeds name the network instances)."""
        return Cell(PERMEABILITY, self.topology, self.layers, self.k, self.d, (), self.plan)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def cell_key(cell_id: str) -> int:
    return int.from_bytes(hashlib.sha256(cell_id.encode()).digest()[:8], "big")


def derive_seed(master_seed: int, cell_id: str, run_index: int) -> int:
    """64-bit run seed from the master seed, cell id and run index."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(cell_key(cell_id), run_index))
    return int(ss.generate_state(1, np.uint64)[0])


def frozen_seed(master_seed: int, cell_id: str) -> int:
    """Seed for the single set of layer instances shared by a frozen cell."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(cell_key(cell_id),))
    return int(ss.generate_state(1, np.uint64)[0])


def build_layers(cell: Cell, agents: int, rng: np.random.Generator) -> tuple[Graph, ...]:
    return tuple(spec.build(agents, rng) for spec in cell.layer_specs())


def simulate(cell: Cell, seed: int, agents: int = 100, max_cycles: int = 2000,
             record_series: bool = False, initial_opinions: str = "random",
             layers: tuple[Graph, ...] | None = None) -> RunResult:
    """One run of ``cell``: draw layers (unless given) then play, all from ``seed``."""
    rng = np.random.default_rng(seed)
    if layers is None:
        layers = build_layers(cell, agents, rng)
    zeta = cell.zeta if cell.protocol == SWITCHING else ()
    config = SimConfig(
        space=SocialSpace(layers, zeta),
        protocol=cell.protocol,
        max_cycles=max_cycles,
        seed=seed,
        record_series=record_series,
        initial_opinions=initial_opinions,
    )
    return run_simulation(config, rng)


# ---------------------------------------------------------------------------
# Sweep specification


@dataclass(frozen=True)
class SweepSpec:
    protocol: str = PERMEABILITY
    topology: str = K_REGULAR
    layer_counts: tuple[int, ...] = (1,)
    k_values: tuple[int, ...] = ()
    d_values: tuple[int, ...] = ()
    zeta_values: tuple[float, ...] = (0.0,)
    zeta_mode: str = "symmetric"
    runs_per_cell: int = 300
    instances: int = 100
    agents: int = 100
    max_cycles: int = 2000
    master_seed: int = 0
    frozen_networks: bool = False
    initial_opinions: str = "random"

    def __post_init__(self):
        if self.runs_per_cell < 1:
            raise ParameterError("runs_per_cell must be >= 1")
        if self.instances < 1:
            raise ParameterError("instances must be >= 1")
        if any(not 0.0 <= z <= 1.0 for z in self.zeta_values):
            raise ParameterError("switching probabilities must lie in [0, 1]")
        if self.topology not in TOPOLOGIES:
            raise ParameterError(f"topology must be one of {TOPOLOGIES}")
        if self.zeta_mode not in ("symmetric", "grid"):
            raise ParameterError("zeta_mode must be 'symmetric' or 'grid'")

    def cells(self) -> list[Cell]:
        if self.topology == MIXED:
            structures = [(2, k, d) for k in self.k_values for d in self.d_values]
        elif self.topology == K_REGULAR:
            structures = [(n, k, None) for n in self.layer_counts for k in self.k_values]
        else:
            structures = [(n, None, d) for n in self.layer_counts for d in self.d_values]
        out = []
        for n, k, d in structures:
            if self.protocol == PERMEABILITY:
                out.append(Cell(PERMEABILITY, self.topology, n, k, d))
                continue
            if self.zeta_mode == "symmetric":
                settings = [(z,) * n for z in self.zeta_values]
            else:
                settings = list(itertools.product(self.zeta_values, repeat=n))
            out.extend(Cell(SWITCHING, self.topology, n, k, d, tuple(z)) for z in settings)
        return out


@dataclass(frozen=True)
class CellStats:
    convergence_ratio: float
    encounters_mean: float
    encounters_sd: float
    encounter_quantiles: tuple[float, float, float, float, float]
    run_count: int
    converged_runs: int


def cell_stats(results: list[RunResult]) -> CellStats:
    enc = np.array([r.encounters for r in results], dtype=np.float64)
    conv = sum(r.converged for r in results)
    sd = float(enc.std(ddof=1)) if len(enc) > 1 else 0.0
    q = tuple(float(v) for v in np.quantile(enc, [0.0, 0.25, 0.5, 0.75, 1.0]))
    return CellStats(conv / len(results), float(enc.mean()), sd, q, len(results), conv)


@dataclass
class SweepResult:
    spec: SweepSpec
    stats: dict[Cell, CellStats] = field(default_factory=dict)
    errors: dict[Cell, str] = field(default_factory=dict)
    runs: dict[Cell, list[RunResult]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors


# ---------------------------------------------------------------------------
# Sweep execution


def _run_chunk(spec: SweepSpec, cell: Cell, indices: range) -> list[RunResult]:
    frozen = None
    if spec.frozen_networks:
        rng = np.random.default_rng(frozen_seed(spec.master_seed, cell.structural().cell_id))
        frozen = build_layers(cell, spec.agents, rng)
    return [
        simulate(cell, derive_seed(spec.master_seed, cell.cell_id, i), spec.agents,
                 spec.max_cycles, initial_opinions=spec.initial_opinions, layers=frozen)
        for i in indices
    ]


def _check_cell(spec: SweepSpec, cell: Cell) -> None:
    for layer in cell.layer_specs():
        layer.validate(spec.agents)


def run_sweep(spec: SweepSpec, workers: int = 1, chunk_size: int = 100) -> SweepResult:
    """Run every cell of ``spec``; infeasible cells are reported in ``errors``."""
    result = SweepResult(spec)
    tasks = []
    for cell in spec.cells():
        try:
            _check_cell(spec, cell)
        except ParameterError as exc:
            result.errors[cell] = str(exc)
            log.warning("cell %s skipped: %s", cell.cell_id, exc)
            continue
        for start in range(0, spec.runs_per_cell, chunk_size):
            tasks.append((cell, range(start, min(start + chunk_size, spec.runs_per_cell))))

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, spec, cell, idx) for cell, idx in tasks]
            chunks = [f.result() for f in futures]
    else:
        chunks = [_run_chunk(spec, cell, idx) for cell, idx in tasks]

    for (cell, _), runs in zip(tasks, chunks):
        result.runs.setdefault(cell, []).extend(runs)
    for cell in spec.cells():
        if cell in result.runs:
            result.stats[cell] = cell_stats(result.runs[cell])
            log.info("%s ratio=%.4f", cell.cell_id, result.stats[cell].convergence_ratio)
    return result


# ---------------------------------------------------------------------------
# Network properties


@dataclass(frozen=True)
class PropertyStats:
    config_id: str
    instances: tuple[GraphProperties, ...]

    def _values(self, name):
        return np.array([getattr(p, name) for p in self.instances], dtype=np.float64)

    def mean(self, name: str) -> float:
        return float(self._values(name).mean())

    def sd(self, name: str) -> float:
        # exact arithmetic: identical instances give a spread of exactly zero
        v = self._values(name)
        return statistics.stdev(v.tolist()) if len(v) > 1 else 0.0

    def quantiles(self, name: str) -> tuple[float, ...]:
        return tuple(float(q) for q in np.quantile(self._values(name), [0.0, 0.25, 0.5, 0.75, 1.0]))


def structural_cells(spec: SweepSpec) -> list[Cell]:
    seen = {}
    for cell in spec.cells():
        seen.setdefault(cell.config_id, cell.structural())
    return list(seen.values())


def network_property_sweep(spec: SweepSpec) -> tuple[dict[str, PropertyStats], dict[str, str]]:
    """Merged-layer properties for ``spec.instances`` instances of each configuration.

    Instance ``i`` is the set of layers that permeability run ``i`` of the same
    configuration plays on.
    """
    out, errors = {}, {}
    for cell in structural_cells(spec):
        try:
            _check_cell(spec, cell)
            props = []
            for i in range(spec.instances):
                rng = np.random.default_rng(derive_seed(spec.master_seed, cell.cell_id, i))
                merged = merge_graphs(list(build_layers(cell, spec.agents, rng)))
                props.append(metrics.graph_properties(merged))
        except (ParameterError, UndefinedMetricError) as exc:
            errors[cell.config_id] = str(exc)
            continue
        out[cell.config_id] = PropertyStats(cell.config_id, tuple(props))
    return out, errors


# ---------------------------------------------------------------------------
# Correlation


def correlate_structure_convergence(
    sweep: SweepResult, properties: dict[str, PropertyStats], method: str = "spearman"
) -> tuple[CorrelationReport, CorrelationReport]:
    """Correlation of convergence ratio with mean APL and mean CC (Spearman unless told otherwise)."""
    corr = metrics.CORRELATIONS[method]
    ratios, apl, cc = [], [], []
    for cell, stats in sweep.stats.items():
        prop = properties.get(cell.config_id)
        if prop is None:
            continue
        ratios.append(stats.convergence_ratio)
        apl.append(prop.mean("avg_path_length"))
        cc.append(prop.mean("clustering_coefficient"))
    if len(ratios) < 4:
        raise InsufficientDataError(f"need at least 4 matched configurations, got {len(ratios)}")
    return corr(ratios, apl), corr(ratios, cc)


# ---------------------------------------------------------------------------
# CSV output


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if math.isnan(x):
        return "NA"
    return repr(float(x))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def sweep_rows(result: SweepResult):
    for cell, s in result.stats.items():
        yield [
            cell.cell_id, cell.protocol, cell.layers, cell.topology,
            _num(cell.k), _num(cell.d), ";".join(_fmt(z) for z in cell.zeta), s.run_count,
            _num(s.convergence_ratio), _num(s.encounters_mean), _num(s.encounters_sd),
            *(_num(q) for q in s.encounter_quantiles),
        ]


def sweep_csv(result: SweepResult) -> str:
    return _csv(SWEEP_COLUMNS, sweep_rows(result))


def property_csv(props: dict[str, PropertyStats]) -> str:
    rows = (
        [cid, i, p.edge_count, _num(p.clustering_coefficient), _num(p.avg_path_length),
         _num(p.reachable_pair_fraction)]
        for cid, stats in props.items()
        for i, p in enumerate(stats.instances)
    )
    return _csv(PROPERTY_COLUMNS, rows)


def correlation_rows(family: str, pair: tuple[CorrelationReport, CorrelationReport]):
    for label, rep in zip(("APL", "CC"), pair):
        yield [family, "CR", label, _num(rep.rho), _num(rep.p_value), _num(rep.ci_low), _num(rep.ci_high)]


def correlation_csv(rows) -> str:
    return _csv(CORRELATION_COLUMNS, rows)


def run_row(r: RunResult) -> list[str]:
    return [str(r.seed), r.protocol, _num(r.converged), str(r.cycles_used), str(r.encounters),
            "" if r.final_opinion is None else str(r.final_opinion)]


def run_records_csv(results, cell_ids=None) -> str:
    if cell_ids is None:
        return _csv(RUN_COLUMNS, (run_row(r) for r in results))
    return _csv(["cell_id", *RUN_COLUMNS], ([c, *run_row(r)] for c, r in zip(cell_ids, results)))


def series_csv(result: RunResult) -> str:
    if result.series is None:
        raise ValueError("run was executed without series recording")
    return _csv(SERIES_COLUMNS, ([c, a, b, _num(m), _num(v)] for c, a, b, m, v in result.series.rows()))


def read_sweep_csv(text: str) -> SweepResult:
    """Rebuild the per-cell statistics needed for correlation from sweep CSV text."""
    result = SweepResult(SweepSpec())
    for row in csv.DictReader(io.StringIO(text)):
        zeta = tuple(float(z) for z in row["zeta"].split(";")) if row["zeta"] else ()
        cell = Cell(
            row["protocol"], row["topology"], int(row["layers"]),
            int(row["k"]) if row["k"] else None, int(row["d"]) if row["d"] else None, zeta,
        )
        quant = tuple(float(row[c]) for c in ("enc_min", "enc_q1", "enc_median", "enc_q3", "enc_max"))
        runs = int(row["runs"])
        ratio = float(row["convergence_ratio"])
        result.stats[cell] = CellStats(ratio, float(row["enc_mean"]), float(row["enc_sd"]), quant,
                                       runs, round(ratio * runs))
    return result


def read_property_csv(text: str) -> dict[str, PropertyStats]:
    grouped: dict[str, list[GraphProperties]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        grouped.setdefault(row["config_id"], []).append(GraphProperties(
            avg_path_length=float(row["avg_path_length"]),
            clustering_coefficient=float(row["clustering_coefficient"]),
            edge_count=int(row["edges"]),
            reachable_pair_fraction=float(row["reachable_fraction"]),
        ))
    return {cid: PropertyStats(cid, tuple(p)) for cid, p in grouped.items()}

