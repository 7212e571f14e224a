"""Algorithmic steps of the patch-update kernel and their dependency DAG.

One kernel launch performs, per patch: copy the interior into the output,
evaluate directional fluxes and wave speeds into per-axis temporaries over
the extended (halo-including) ranges, fold the face fluxes into the output
axis by axis, and optionally reduce the maximal wave speed of the updated
solution. The serialized step order drives the batched and patch-wise
executors; the per-patch DAG drives the task-graph executor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .patchdata import BatchShape, cells_linear

__all__ = [
    "StepOp",
    "StepKind",
    "StepSpec",
    "TaskDag",
    "KernelPlan",
    "GraphCycleError",
    "step_sequence",
    "iteration_range",
    "mask_predicate",
    "build_task_graph",
    "build_plan",
    "topological_order",
    "has_path",
    "dump_dag_edges",
    "invocations_per_patch",
    "masked_per_patch",
]

_AXIS_NAMES = "xyz"


class GraphCycleError(RuntimeError):
    """The task DAG contains a cycle (must never happen for built plans)."""


class StepOp(Enum):
    COPY = "copy"
    FLUX = "flux"
    EIGENVALUE = "lambda"
    ACCUMULATE = "acc"
    REDUCE = "reduce"


@dataclass(frozen=True)
class StepKind:
    """One step type, with its axis for the directional steps."""

    op: StepOp
    axis: int | None = None

    def __post_init__(self) -> None:
        directional = self.op in (StepOp.FLUX, StepOp.EIGENVALUE, StepOp.ACCUMULATE)
        if directional and self.axis is None:
            raise ValueError(f"{self.op.value} step needs an axis")
        if not directional and self.axis is not None:
            raise ValueError(f"{self.op.value} step takes no axis")

    @property
    def name(self) -> str:
        if self.axis is None:
            return self.op.value
        return f"{self.op.value}_{_AXIS_NAMES[self.axis]}"


@dataclass(frozen=True)
class StepSpec:
    """A step plus its per-patch iteration range and data roles.

    ``cells`` lists the range's cell coordinates in canonical order
    (ascending haloed linearization). The precomputed linearizations are what
    the executors feed to the field views: ``lins_haloed`` addresses input
    and temporaries, ``lins_interior`` addresses the output (interior steps
    only), and ``lins_left``/``lins_right`` are the face neighbors along the
    accumulation axis.
    """

    kind: StepKind
    cells: np.ndarray
    reads: frozenset[str]
    writes: str
    lins_haloed: np.ndarray
    lins_interior: np.ndarray | None = None
    lins_left: np.ndarray | None = None
    lins_right: np.ndarray | None = None

    @property
    def range_size(self) -> int:
        return len(self.cells)


@dataclass
class TaskDag:
    """(patch, step) nodes with dependency edges; no edges cross patches."""

    shape: BatchShape
    with_reduction: bool
    steps: list[StepKind]
    edges: list[tuple[int, int]]
    successors: list[list[int]]
    indegree: list[int]

    @property
    def node_count(self) -> int:
        return self.shape.patch_count * len(self.steps)

    def node_id(self, patch: int, step_index: int) -> int:
        return patch * len(self.steps) + step_index

    def node_of(self, node: int) -> tuple[int, int]:
        return divmod(node, len(self.steps))


@dataclass
class KernelPlan:
    """Everything an executor needs: shape, serialized steps, and the DAG."""

    shape: BatchShape
    with_reduction: bool
    steps: list[StepSpec]
    dag: TaskDag = field(repr=False)


def _range_cells(shape: BatchShape, kind: StepKind) -> np.ndarray:
    """Cell coordinates of the step's per-patch range, coordinate 0 fastest."""
    p = shape.patch_size
    spans = []
    for k in range(shape.dim):
        if kind.op in (StepOp.FLUX, StepOp.EIGENVALUE) and k == kind.axis:
            spans.append(np.arange(-1, p + 1, dtype=np.int64))
        else:
            spans.append(np.arange(0, p, dtype=np.int64))
    # Cartesian product with coordinate 0 innermost so the canonical order
    # coincides with ascending linearization.
    grids = np.meshgrid(*reversed(spans), indexing="ij")
    cells = np.empty((grids[0].size, shape.dim), dtype=np.int64)
    for k in range(shape.dim):
        cells[:, k] = grids[shape.dim - 1 - k].ravel()
    return cells


def iteration_range(kind: StepKind, shape: BatchShape) -> np.ndarray:
    """Per-patch cell set of a step.

    Interior steps (copy, accumulate, reduce) run over [0,p)^d; flux and
    eigenvalue steps extend to [-1,p] along their axis, (p+2)*p^(d-1) cells.
    """
    return _range_cells(shape, kind)


def mask_predicate(kind: StepKind, cell: Sequence[int], shape: BatchShape) -> bool:
    """True iff ``cell`` from the union range [-1,p]^d belongs to the step."""
    p = shape.patch_size
    for k, c in enumerate(cell):
        if kind.op in (StepOp.FLUX, StepOp.EIGENVALUE) and k == kind.axis:
            if not -1 <= c <= p:
                return False
        elif not 0 <= c <= p - 1:
            return False
    return True


def step_sequence(shape: BatchShape, with_reduction: bool) -> list[StepKind]:
    """Serialized step order: copy, all fluxes, all wave speeds, all
    accumulations, then the optional reduction. Length 1 + 3d (+1)."""
    steps = [StepKind(StepOp.COPY)]
    steps += [StepKind(StepOp.FLUX, n) for n in range(shape.dim)]
    steps += [StepKind(StepOp.EIGENVALUE, n) for n in range(shape.dim)]
    steps += [StepKind(StepOp.ACCUMULATE, n) for n in range(shape.dim)]
    if with_reduction:
        steps.append(StepKind(StepOp.REDUCE))
    return steps


def _roles(kind: StepKind) -> tuple[frozenset[str], str]:
    if kind.op is StepOp.COPY:
        return frozenset({"input"}), "output"
    if kind.op is StepOp.FLUX:
        return frozenset({"input"}), f"tmp_flux{kind.axis}"
    if kind.op is StepOp.EIGENVALUE:
        return frozenset({"input"}), f"tmp_lambda{kind.axis}"
    if kind.op is StepOp.ACCUMULATE:
        reads = {"input", "output", f"tmp_flux{kind.axis}", f"tmp_lambda{kind.axis}"}
        return frozenset(reads), "output"
    return frozenset({"output"}), "reduction"


def _make_step_spec(shape: BatchShape, kind: StepKind) -> StepSpec:
    cells = _range_cells(shape, kind)
    reads, writes = _roles(kind)
    lins_h = cells_linear(shape, True, cells)
    lins_i = None
    lins_l = None
    lins_r = None
    if kind.op in (StepOp.COPY, StepOp.ACCUMULATE, StepOp.REDUCE):
        lins_i = cells_linear(shape, False, cells)
    if kind.op is StepOp.ACCUMULATE:
        step = np.zeros(shape.dim, dtype=np.int64)
        step[kind.axis] = 1
        lins_l = cells_linear(shape, True, cells - step)
        lins_r = cells_linear(shape, True, cells + step)
    return StepSpec(kind, cells, reads, writes, lins_h, lins_i, lins_l, lins_r)


def build_task_graph(shape: BatchShape, with_reduction: bool) -> TaskDag:
    """Per-patch DAG: copy, fluxes and wave speeds are roots; accumulation
    along axis n waits for copy, flux n and wave speed n, and is chained
    after axis n-1 because all accumulations read-modify-write the shared
    output; the reduction waits for the last accumulation. Patches are
    fully independent of each other.
    """
    kinds = step_sequence(shape, with_reduction)
    index = {kind: i for i, kind in enumerate(kinds)}
    per_patch_edges: list[tuple[int, int]] = []
    for n in range(shape.dim):
        acc = index[StepKind(StepOp.ACCUMULATE, n)]
        per_patch_edges.append((index[StepKind(StepOp.COPY)], acc))
        per_patch_edges.append((index[StepKind(StepOp.FLUX, n)], acc))
        per_patch_edges.append((index[StepKind(StepOp.EIGENVALUE, n)], acc))
        if n > 0:
            per_patch_edges.append((index[StepKind(StepOp.ACCUMULATE, n - 1)], acc))
    if with_reduction:
        per_patch_edges.append(
            (index[StepKind(StepOp.ACCUMULATE, shape.dim - 1)], index[StepKind(StepOp.REDUCE)])
        )

    n_steps = len(kinds)
    edges = []
    successors: list[list[int]] = [[] for _ in range(shape.patch_count * n_steps)]
    indegree = [0] * (shape.patch_count * n_steps)
    for patch in range(shape.patch_count):
        base = patch * n_steps
        for src, dst in per_patch_edges:
            edges.append((base + src, base + dst))
            successors[base + src].append(base + dst)
            indegree[base + dst] += 1
    return TaskDag(shape, with_reduction, kinds, edges, successors, indegree)


def build_plan(shape: BatchShape, with_reduction: bool) -> KernelPlan:
    """Construct the full plan: step specs in serialized order plus the DAG."""
    kinds = step_sequence(shape, with_reduction)
    steps = [_make_step_spec(shape, k) for k in kinds]
    return KernelPlan(shape, with_reduction, steps, build_task_graph(shape, with_reduction))


def topological_order(dag: TaskDag) -> list[int]:
    """Kahn topological order of the DAG; raises GraphCycleError on a cycle."""
    indeg = list(dag.indegree)
    ready = [node for node, deg in enumerate(indeg) if deg == 0]
    order = []
    while ready:
        node = ready.pop()
        order.append(node)
        for succ in dag.successors[node]:
            indeg[succ] -= 1
            if indeg[succ] == 0:
                ready.append(succ)
    if len(order) != dag.node_count:
        raise GraphCycleError(f"cycle among {dag.node_count - len(order)} nodes")
    return order


def has_path(dag: TaskDag, src: int, dst: int) -> bool:
    """Reachability src -> dst along DAG edges."""
    seen = {src}
    stack = [src]
    while stack:
        node = stack.pop()
        if node == dst:
            return True
        for succ in dag.successors[node]:
            if succ not in seen:
                seen.add(succ)
                stack.append(succ)
    return False


def dump_dag_edges(dag: TaskDag) -> str:
    """Textual edge list, one sorted "patch:step -> patch:step" per line."""
    lines = []
    for src, dst in dag.edges:
        sp, si = dag.node_of(src)
        dp, di = dag.node_of(dst)
        lines.append(f"{sp}:{dag.steps[si].name} -> {dp}:{dag.steps[di].name}")
    return "\n".join(sorted(lines))


def invocations_per_patch(shape: BatchShape, with_reduction: bool) -> int:
    """Microkernel invocations one patch costs: (1+d)p^d + 2d(p+2)p^(d-1),
    plus p^d when the reduction runs."""
    return sum(
        _range_cells(shape, kind).shape[0] for kind in step_sequence(shape, with_reduction)
    )


def masked_per_patch(shape: BatchShape, with_reduction: bool) -> int:
    """Union-range lanes the patch-wise realization masks out per patch."""
    union = shape.haloed_cells
    return sum(
        union - _range_cells(shape, kind).shape[0]
        for kind in step_sequence(shape, with_reduction)
    )
