"""Per-volume compute bodies wrapped behind the offset enumerators.

Each microkernel exists twice:

* a scalar form working one volume at a time through ``FieldView.read`` and
  plain Python floats -- this is what the sequential golden executor runs;
* a vectorized form working on a whole set of volumes of one patch through
  numpy -- this is what the parallel realizations run.

Both forms evaluate the same floating-point expression tree per volume
(identical association, identical operation order), so the realizations
must agree with the sequential run bit for bit. Keep the expressions in the
two forms literally in sync when editing.

The face flux folded in by the accumulate kernels is the central-average
flux damped by the larger adjacent wave speed:

    F_face = 1/2 (F(Q_left) + F(Q_right))
             - 1/2 max(lam_left, lam_right) (Q_right - Q_left)

and a cell update gains (dt/h) * (F_left_face - F_right_face) per axis,
applied as one fused add so a uniform state is preserved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import equations
from .equations import EulerParameters, InvalidStateError
from .kernelgraph import StepOp, StepSpec
from .patchdata import BatchShape, FieldView, FlatFieldView, Layout

__all__ = [
    "TimeStepContext",
    "ScratchArrays",
    "StepOffsets",
    "compute_step_offsets",
    "copy_cell",
    "flux_cell",
    "eigenvalue_cell",
    "accumulate_cell",
    "reduce_cell_value",
    "copy_cells",
    "flux_cells",
    "eigenvalue_cells",
    "accumulate_cells",
    "reduce_cell_values",
]


@dataclass(frozen=True)
class TimeStepContext:
    """Launch metadata: time step size, volume edge length, closure, checks."""

    dt: float
    h: float
    params: EulerParameters
    check: bool = False

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.h > 0.0:
            raise ValueError(f"h must be positive, got {self.h}")


class ScratchArrays:
    """Per-axis temporaries of one launch.

    tmp_flux[n] holds N * T * (p+2)^d doubles under ``layout``; tmp_lambda[n]
    holds T * (p+2)^d doubles. Both are sized for the full haloed cube even
    though only the per-axis flux range is ever written; entries outside that
    range are never read.
    """

    def __init__(
        self,
        shape: BatchShape,
        layout: Layout,
        tmp_flux: list[np.ndarray],
        tmp_lambda: list[np.ndarray],
    ) -> None:
        if len(tmp_flux) != shape.dim or len(tmp_lambda) != shape.dim:
            raise ValueError("need one flux and one lambda temporary per axis")
        self.shape = shape
        self.layout = layout
        self.tmp_flux = tmp_flux
        self.tmp_lambda = tmp_lambda
        self._flux_views = [
            FlatFieldView(arr, layout, shape, haloed=True) for arr in tmp_flux
        ]
        self._lambda_views = [
            FlatFieldView(arr, layout, shape, haloed=True, unknowns=1)
            for arr in tmp_lambda
        ]

    @staticmethod
    def flux_entry_count(shape: BatchShape) -> int:
        return shape.unknowns * shape.patch_count * shape.haloed_cells

    @staticmethod
    def lambda_entry_count(shape: BatchShape) -> int:
        return shape.patch_count * shape.haloed_cells

    def flux_view(self, axis: int) -> FlatFieldView:
        return self._flux_views[axis]

    def lambda_view(self, axis: int) -> FlatFieldView:
        return self._lambda_views[axis]


# ----------------------------------------------------------------------
# scalar microkernels (sequential golden path)
# ----------------------------------------------------------------------


def _state_at(view: FieldView, patch: int, lin: int) -> tuple[float, ...]:
    return tuple(view.read(patch, lin, k) for k in range(view.unknowns))


def copy_cell(inp: FieldView, out: FieldView, patch: int, lin_h: int, lin_i: int) -> None:
    for k in range(inp.unknowns):
        out.write(patch, lin_i, k, inp.read(patch, lin_h, k))


def flux_cell(
    inp: FieldView,
    scratch: ScratchArrays,
    patch: int,
    lin_h: int,
    axis: int,
    ctx: TimeStepContext,
) -> None:
    q = _state_at(inp, patch, lin_h)
    f = equations.flux(q, axis, ctx.params, ctx.check)
    view = scratch.flux_view(axis)
    for k in range(len(f)):
        view.write(patch, lin_h, k, f[k])


def eigenvalue_cell(
    inp: FieldView,
    scratch: ScratchArrays,
    patch: int,
    lin_h: int,
    axis: int,
    ctx: TimeStepContext,
) -> None:
    q = _state_at(inp, patch, lin_h)
    lam = equations.max_eigenvalue(q, axis, ctx.params, ctx.check)
    scratch.lambda_view(axis).write(patch, lin_h, 0, lam)


def accumulate_cell(
    inp: FieldView,
    out: FieldView,
    scratch: ScratchArrays,
    patch: int,
    lin_v: int,
    lin_l: int,
    lin_r: int,
    lin_i: int,
    axis: int,
    ctx: TimeStepContext,
) -> None:
    fview = scratch.flux_view(axis)
    lview = scratch.lambda_view(axis)
    lam_v = lview.read(patch, lin_v, 0)
    w_l = max(lview.read(patch, lin_l, 0), lam_v)
    w_r = max(lam_v, lview.read(patch, lin_r, 0))
    scale = ctx.dt / ctx.h
    for k in range(inp.unknowns):
        q_v = inp.read(patch, lin_v, k)
        f_v = fview.read(patch, lin_v, k)
        f_face_l = 0.5 * (fview.read(patch, lin_l, k) + f_v) - 0.5 * w_l * (
            q_v - inp.read(patch, lin_l, k)
        )
        f_face_r = 0.5 * (f_v + fview.read(patch, lin_r, k)) - 0.5 * w_r * (
            inp.read(patch, lin_r, k) - q_v
        )
        out.add(patch, lin_i, k, scale * (f_face_l - f_face_r))


def reduce_cell_value(out: FieldView, patch: int, lin_i: int, ctx: TimeStepContext) -> float:
    q = _state_at(out, patch, lin_i)
    d = len(q) - 2
    value = equations.max_eigenvalue(q, 0, ctx.params, ctx.check)
    for n in range(1, d):
        value = max(value, equations.max_eigenvalue(q, n, ctx.params, ctx.check))
    return value


# ----------------------------------------------------------------------
# vectorized microkernels (parallel realizations)
# ----------------------------------------------------------------------


@dataclass
class StepOffsets:
    """Patch-independent within-block offsets of one step, precomputed once
    per launch and sliced per work chunk."""

    q_h: np.ndarray | None = None
    out_i: np.ndarray | None = None
    f_v: np.ndarray | None = None
    lam_v: np.ndarray | None = None
    q_l: np.ndarray | None = None
    q_r: np.ndarray | None = None
    f_l: np.ndarray | None = None
    f_r: np.ndarray | None = None
    lam_l: np.ndarray | None = None
    lam_r: np.ndarray | None = None


def compute_step_offsets(
    step: StepSpec, inp: FieldView, out: FieldView, scratch: ScratchArrays
) -> StepOffsets:
    kind = step.kind
    offs = StepOffsets()
    if kind.op is StepOp.COPY:
        offs.q_h = inp.offsets(step.lins_haloed)
        offs.out_i = out.offsets(step.lins_interior)
    elif kind.op is StepOp.FLUX:
        offs.q_h = inp.offsets(step.lins_haloed)
        offs.f_v = scratch.flux_view(kind.axis).offsets(step.lins_haloed)
    elif kind.op is StepOp.EIGENVALUE:
        offs.q_h = inp.offsets(step.lins_haloed)
        offs.lam_v = scratch.lambda_view(kind.axis).offsets(step.lins_haloed)[0]
    elif kind.op is StepOp.ACCUMULATE:
        fview = scratch.flux_view(kind.axis)
        lview = scratch.lambda_view(kind.axis)
        offs.q_h = inp.offsets(step.lins_haloed)
        offs.q_l = inp.offsets(step.lins_left)
        offs.q_r = inp.offsets(step.lins_right)
        offs.f_v = fview.offsets(step.lins_haloed)
        offs.f_l = fview.offsets(step.lins_left)
        offs.f_r = fview.offsets(step.lins_right)
        offs.lam_v = lview.offsets(step.lins_haloed)[0]
        offs.lam_l = lview.offsets(step.lins_left)[0]
        offs.lam_r = lview.offsets(step.lins_right)[0]
        offs.out_i = out.offsets(step.lins_interior)
    else:
        offs.out_i = out.offsets(step.lins_interior)
    return offs


def _pressure_of(q: np.ndarray, gamma: float, check: bool) -> np.ndarray:
    # Mirrors equations.pressure term for term.
    d = q.shape[0] - 2
    rho = q[0]
    if check and np.any(rho <= 0.0):
        raise InvalidStateError("non-positive density in batch")
    ke = q[1] * q[1] + q[2] * q[2]
    if d == 3:
        ke = ke + q[3] * q[3]
    p = (gamma - 1.0) * (q[d + 1] - ke / (2.0 * rho))
    if check and np.any(p <= 0.0):
        raise InvalidStateError("non-positive pressure in batch")
    return p


def copy_cells(
    inp: FieldView, out: FieldView, patch: int, offs: StepOffsets, sl: slice
) -> None:
    arr_i, base_i = inp.block(patch)
    arr_o, base_o = out.block(patch)
    arr_o[base_o + offs.out_i[:, sl]] = arr_i[base_i + offs.q_h[:, sl]]


def flux_cells(
    inp: FieldView,
    scratch: ScratchArrays,
    patch: int,
    offs: StepOffsets,
    sl: slice,
    axis: int,
    ctx: TimeStepContext,
) -> None:
    arr_i, base_i = inp.block(patch)
    q = arr_i[base_i + offs.q_h[:, sl]]
    d = q.shape[0] - 2
    gamma = ctx.params.gamma
    p = _pressure_of(q, gamma, ctx.check)
    rho = q[0]
    energy = q[d + 1]
    un = q[1 + axis] / rho
    f = np.empty_like(q)
    f[0] = q[1 + axis]
    for i in range(d):
        f[1 + i] = q[1 + i] * un + p if i == axis else q[1 + i] * un
    f[d + 1] = un * (energy + p)
    arr_f, base_f = scratch.flux_view(axis).block(patch)
    arr_f[base_f + offs.f_v[:, sl]] = f


def eigenvalue_cells(
    inp: FieldView,
    scratch: ScratchArrays,
    patch: int,
    offs: StepOffsets,
    sl: slice,
    axis: int,
    ctx: TimeStepContext,
) -> None:
    arr_i, base_i = inp.block(patch)
    q = arr_i[base_i + offs.q_h[:, sl]]
    gamma = ctx.params.gamma
    p = _pressure_of(q, gamma, ctx.check)
    rho = q[0]
    lam = np.abs(q[1 + axis] / rho) + np.sqrt(gamma * p / rho)
    arr_l, base_l = scratch.lambda_view(axis).block(patch)
    arr_l[base_l + offs.lam_v[sl]] = lam


def accumulate_cells(
    inp: FieldView,
    out: FieldView,
    scratch: ScratchArrays,
    patch: int,
    offs: StepOffsets,
    sl: slice,
    axis: int,
    ctx: TimeStepContext,
) -> None:
    arr_i, base_i = inp.block(patch)
    q_v = arr_i[base_i + offs.q_h[:, sl]]
    q_l = arr_i[base_i + offs.q_l[:, sl]]
    q_r = arr_i[base_i + offs.q_r[:, sl]]
    arr_f, base_f = scratch.flux_view(axis).block(patch)
    f_v = arr_f[base_f + offs.f_v[:, sl]]
    f_l = arr_f[base_f + offs.f_l[:, sl]]
    f_r = arr_f[base_f + offs.f_r[:, sl]]
    arr_lam, base_lam = scratch.lambda_view(axis).block(patch)
    lam_v = arr_lam[base_lam + offs.lam_v[sl]]
    w_l = np.maximum(arr_lam[base_lam + offs.lam_l[sl]], lam_v)
    w_r = np.maximum(lam_v, arr_lam[base_lam + offs.lam_r[sl]])
    scale = ctx.dt / ctx.h
    f_face_l = 0.5 * (f_l + f_v) - 0.5 * w_l * (q_v - q_l)
    f_face_r = 0.5 * (f_v + f_r) - 0.5 * w_r * (q_r - q_v)
    arr_o, base_o = out.block(patch)
    dst = base_o + offs.out_i[:, sl]
    arr_o[dst] = arr_o[dst] + scale * (f_face_l - f_face_r)


def reduce_cell_values(
    out: FieldView, patch: int, offs: StepOffsets, sl: slice, ctx: TimeStepContext
) -> np.ndarray:
    arr_o, base_o = out.block(patch)
    q = arr_o[base_o + offs.out_i[:, sl]]
    d = q.shape[0] - 2
    gamma = ctx.params.gamma
    p = _pressure_of(q, gamma, ctx.check)
    rho = q[0]
    c = np.sqrt(gamma * p / rho)
    value = np.abs(q[1] / rho) + c
    for n in range(1, d):
        value = np.maximum(value, np.abs(q[1 + n] / rho) + c)
    return value
