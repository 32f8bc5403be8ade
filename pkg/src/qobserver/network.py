"""Composition of dynamic and static components into field networks.

A network is a bag of named blocks (state-space models or static scatterers)
plus a set of directed internal edges, each sending one output channel into
one input channel.  Composition is pure-functional: :func:`concatenate`,
:func:`connect` and :func:`with_io` all return new immutable values.

:func:`reduce` eliminates the internal edges.  Writing the direct sum of all
blocks in doubled form as ``dx = Ax + Bw``, ``y = Cx + Dw`` and splitting the
channel signals into external and internal parts, the internal inputs solve

    (I - D_loop) w_int = T_int (C x + D S_ext u),   D_loop = T_int D S_int,

which exists whenever the instantaneous scattering loop is nonsingular.  The
eliminated model keeps every mode and only the unconsumed channels.  Since
internal edges carry a channel's annihilation and creation sectors together
and all selection matrices are real, the reduced blocks inherit the
conjugation-swap symmetry and drop back to a single-sector
:class:`~qobserver.model.StateSpace`.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .model import (
    DEFAULT_TOL,
    DoubledForm,
    InvalidSpecError,
    StateSpace,
    _frozen,
    _unitarity_defect,
    from_doubled,
    matrix_from_json,
    matrix_to_json,
    to_doubled,
)

__all__ = [
    "PortNotFoundError",
    "PortInUseError",
    "SingularLoopError",
    "StaticComponent",
    "NetPort",
    "ComposedNetwork",
    "beamsplitter",
    "beamsplitter_5050",
    "concatenate",
    "connect",
    "with_io",
    "reduce",
    "network_to_json",
    "network_from_json",
]


class PortNotFoundError(ValueError):
    """A referenced port does not exist in the network."""


class PortInUseError(ValueError):
    """A referenced port was already consumed by an internal edge."""


class SingularLoopError(ValueError):
    """The instantaneous scattering loop is algebraically singular."""


_PORT_RE = re.compile(r"^([A-Za-z_]\w*)\.(in|out)\[(\d+)\]$")


@dataclass(frozen=True, eq=False)
class StaticComponent:
    """Instantaneous k-channel scatterer with unitary matrix ``s``."""

    s: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        s = np.atleast_2d(np.array(self.s, dtype=np.complex128))
        if s.shape[0] != s.shape[1] or s.shape[0] < 1:
            raise InvalidSpecError(f"scattering matrix must be square, got {s.shape}")
        if _unitarity_defect(s) > DEFAULT_TOL:
            raise InvalidSpecError("scattering matrix must be unitary")
        labels = tuple(self.labels) or tuple(f"port{k}" for k in range(s.shape[0]))
        if len(labels) != s.shape[0]:
            raise InvalidSpecError("one label per channel required")
        object.__setattr__(self, "s", _frozen(s))
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.s.shape[0]


def beamsplitter(theta: float) -> StaticComponent:
    """Two-port mixer ``[[cos t, sin t], [sin t, -cos t]]`` (self-inverse)."""
    c, s = math.cos(theta), math.sin(theta)
    return StaticComponent(np.array([[c, s], [s, -c]]))


def beamsplitter_5050() -> StaticComponent:
    """Balanced mixer sending means ``(x, y)`` to ``((x+y)/sqrt2, (x-y)/sqrt2)``."""
    return beamsplitter(math.pi / 4)


Block = Union[StateSpace, StaticComponent]


def _block_channels(block: Block) -> int:
    return block.n


def _block_modes(block: Block) -> int:
    return block.m if isinstance(block, StateSpace) else 0


@dataclass(frozen=True, eq=False)
class NetPort:
    """One externally visible channel endpoint."""

    label: str
    block: str
    channel: int
    direction: str  # "in" or "out"

    @property
    def canonical(self) -> str:
        return f"{self.block}.{self.direction}[{self.channel}]"


@dataclass(frozen=True, eq=False)
class ComposedNetwork:
    """Immutable network of named blocks, internal edges, and external ports."""

    blocks: tuple[tuple[str, Block], ...]
    internal_edges: tuple[tuple[tuple[str, int], tuple[str, int]], ...]
    external_inputs: tuple[NetPort, ...]
    external_outputs: tuple[NetPort, ...]

    def block(self, name: str) -> Block:
        for blk_name, blk in self.blocks:
            if blk_name == name:
                return blk
        raise PortNotFoundError(f"no component named {name!r}")

    @property
    def input_labels(self) -> tuple[str, ...]:
        return tuple(p.label for p in self.external_inputs)

    @property
    def output_labels(self) -> tuple[str, ...]:
        return tuple(p.label for p in self.external_outputs)

    @property
    def total_modes(self) -> int:
        return sum(_block_modes(blk) for _, blk in self.blocks)

    def mode_labels(self) -> tuple[str, ...]:
        out: list[str] = []
        for name, blk in self.blocks:
            m = _block_modes(blk)
            out.extend(name if m == 1 else f"{name}[{i}]" for i in range(m))
        return tuple(out)


def concatenate(blocks: Sequence[Block | tuple[str, Block]]) -> ComposedNetwork:
    """Direct sum of components with no internal edges.

    Blocks may be passed bare (auto-named ``block0``, ``block1``, ...) or as
    ``(name, block)`` pairs.  Port order follows declaration order.
    """
    named: list[tuple[str, Block]] = []
    for k, item in enumerate(blocks):
        if isinstance(item, tuple):
            name, blk = item
        else:
            name, blk = f"block{k}", item
        if not isinstance(blk, (StateSpace, StaticComponent)):
            raise InvalidSpecError(f"cannot place {type(blk).__name__} in a network")
        if any(name == existing for existing, _ in named):
            raise InvalidSpecError(f"duplicate component name {name!r}")
        named.append((name, blk))
    inputs = []
    outputs = []
    for name, blk in named:
        for ch in range(_block_channels(blk)):
            inputs.append(NetPort(f"{name}.in[{ch}]", name, ch, "in"))
            outputs.append(NetPort(f"{name}.out[{ch}]", name, ch, "out"))
    return ComposedNetwork(tuple(named), (), tuple(inputs), tuple(outputs))


def _find_port(net: ComposedNetwork, ref: str, direction: str) -> NetPort:
    ports = net.external_outputs if direction == "out" else net.external_inputs
    for port in ports:
        if ref in (port.label, port.canonical):
            return port
    # Distinguish "never existed" from "already consumed".
    match = _PORT_RE.match(ref)
    if match:
        name, kind, idx = match.group(1), match.group(2), int(match.group(3))
        try:
            blk = net.block(name)
        except PortNotFoundError:
            raise PortNotFoundError(f"no component named {name!r}") from None
        if kind != direction:
            raise PortNotFoundError(
                f"{ref!r} is not an {'output' if direction == 'out' else 'input'} port")
        if idx < _block_channels(blk):
            raise PortInUseError(f"port {ref!r} was already connected")
        raise PortNotFoundError(f"{ref!r} is out of range for component {name!r}")
    raise PortNotFoundError(f"no external {direction}put port {ref!r}")


def connect(net: ComposedNetwork, out_port: str, in_port: str) -> ComposedNetwork:
    """New network with the given output channel feeding the given input channel."""
    src = _find_port(net, out_port, "out")
    dst = _find_port(net, in_port, "in")
    edge = ((src.block, src.channel), (dst.block, dst.channel))
    return ComposedNetwork(
        blocks=net.blocks,
        internal_edges=net.internal_edges + (edge,),
        external_inputs=tuple(p for p in net.external_inputs if p is not dst),
        external_outputs=tuple(p for p in net.external_outputs if p is not src),
    )


def _relabel(ports: tuple[NetPort, ...], aliases: Sequence[tuple[str, str]],
             direction: str, net: ComposedNetwork) -> tuple[NetPort, ...]:
    chosen: list[NetPort] = []
    remaining = list(ports)
    for alias, ref in aliases:
        found = None
        for port in remaining:
            if ref in (port.label, port.canonical):
                found = port
                break
        if found is None:
            _find_port(net, ref, direction)  # raise with a precise reason
            raise PortInUseError(f"port {ref!r} aliased twice")
        remaining.remove(found)
        chosen.append(NetPort(alias, found.block, found.channel, direction))
    return tuple(chosen) + tuple(remaining)


def with_io(net: ComposedNetwork,
            inputs: Sequence[tuple[str, str]] = (),
            outputs: Sequence[tuple[str, str]] = ()) -> ComposedNetwork:
    """Alias and reorder external ports; aliased ports come first, in order."""
    return ComposedNetwork(
        blocks=net.blocks,
        internal_edges=net.internal_edges,
        external_inputs=_relabel(net.external_inputs, inputs, "in", net),
        external_outputs=_relabel(net.external_outputs, outputs, "out", net),
    )


def _doubled_direct_sum(net: ComposedNetwork):
    """Direct-sum doubled blocks plus the per-block mode/channel offsets."""
    mode_offset: dict[str, int] = {}
    chan_offset: dict[str, int] = {}
    total_m = 0
    total_n = 0
    for name, blk in net.blocks:
        mode_offset[name] = total_m
        chan_offset[name] = total_n
        total_m += _block_modes(blk)
        total_n += _block_channels(blk)
    mm, nn = total_m, total_n
    abar = np.zeros((2 * mm, 2 * mm), dtype=np.complex128)
    bbar = np.zeros((2 * mm, 2 * nn), dtype=np.complex128)
    cbar = np.zeros((2 * nn, 2 * mm), dtype=np.complex128)
    dbar = np.zeros((2 * nn, 2 * nn), dtype=np.complex128)

    def put(target, row0, col0, rows_half, cols_half, block):
        # block is a doubled matrix whose halves land at (row0, col0) and the
        # mirrored sector positions.
        r, c = block.shape[0] // 2, block.shape[1] // 2
        target[row0:row0 + r, col0:col0 + c] = block[:r, :c]
        target[row0:row0 + r, cols_half + col0:cols_half + col0 + c] = block[:r, c:]
        target[rows_half + row0:rows_half + row0 + r, col0:col0 + c] = block[r:, :c]
        target[rows_half + row0:rows_half + row0 + r,
               cols_half + col0:cols_half + col0 + c] = block[r:, c:]

    for name, blk in net.blocks:
        co = chan_offset[name]
        if isinstance(blk, StateSpace):
            df = to_doubled(blk)
            mo = mode_offset[name]
            put(abar, mo, mo, mm, mm, df.abar)
            put(bbar, mo, co, mm, nn, df.bbar)
            put(cbar, co, mo, nn, mm, df.cbar)
            put(dbar, co, co, nn, nn, df.dbar)
        else:
            k = blk.n
            dbar[co:co + k, co:co + k] = blk.s
            dbar[nn + co:nn + co + k, nn + co:nn + co + k] = blk.s.conj()
    return abar, bbar, cbar, dbar, mode_offset, chan_offset, mm, nn


def reduce(net: ComposedNetwork, rcond: float = 1e-12) -> StateSpace:
    """Eliminate internal edges and return the external input-output model.

    Raises
    ------
    SingularLoopError
        If the instantaneous scattering loop ``I - D_loop`` has reciprocal
        condition number below ``rcond``.
    """
    if not net.external_inputs or not net.external_outputs:
        warnings.warn("network has no external ports on one side; "
                      "the reduced model has dangling io", stacklevel=2)
    abar, bbar, cbar, dbar, _, chan_offset, mm, nn = _doubled_direct_sum(net)

    n_ext = len(net.external_inputs)
    edges = net.internal_edges
    ne = len(edges)

    def chan(block: str, channel: int) -> int:
        return chan_offset[block] + channel

    if ne:
        # Selection matrices, acting identically on both sectors.
        s_int = np.zeros((2 * nn, 2 * ne))
        t_int = np.zeros((2 * ne, 2 * nn))
        for e, ((src_blk, src_ch), (dst_blk, dst_ch)) in enumerate(edges):
            s_int[chan(dst_blk, dst_ch), e] = 1.0
            s_int[nn + chan(dst_blk, dst_ch), ne + e] = 1.0
            t_int[e, chan(src_blk, src_ch)] = 1.0
            t_int[ne + e, nn + chan(src_blk, src_ch)] = 1.0
        s_ext = np.zeros((2 * nn, 2 * n_ext))
        for u, port in enumerate(net.external_inputs):
            s_ext[chan(port.block, port.channel), u] = 1.0
            s_ext[nn + chan(port.block, port.channel), n_ext + u] = 1.0

        d_loop = t_int @ dbar @ s_int
        loop = np.eye(2 * ne) - d_loop
        sv = np.linalg.svd(loop, compute_uv=False)
        if sv[0] == 0.0 or sv[-1] / sv[0] < rcond:
            raise SingularLoopError(
                "internal wiring forms a singular instantaneous loop")
        gain = np.linalg.solve(loop, np.hstack([t_int @ cbar, t_int @ dbar @ s_ext]))
        wx, wu = gain[:, :2 * mm], gain[:, 2 * mm:]
        b_int = bbar @ s_int
        d_int = dbar @ s_int
        abar = abar + b_int @ wx
        bbar_red = bbar @ s_ext + b_int @ wu
        cbar_red = cbar + d_int @ wx
        dbar_red = dbar @ s_ext + d_int @ wu
    else:
        s_ext_cols = [chan(p.block, p.channel) for p in net.external_inputs]
        cols = s_ext_cols + [nn + c for c in s_ext_cols]
        bbar_red = bbar[:, cols]
        cbar_red = cbar
        dbar_red = dbar[:, cols]

    out_rows = [chan(p.block, p.channel) for p in net.external_outputs]
    rows = out_rows + [nn + r for r in out_rows]
    return from_doubled(DoubledForm(
        abar=abar,
        bbar=bbar_red,
        cbar=cbar_red[rows, :],
        dbar=dbar_red[rows, :],
    ))


# ---------------------------------------------------------------------------
# JSON description
# ---------------------------------------------------------------------------

def network_to_json(net: ComposedNetwork) -> dict:
    blocks = []
    for name, blk in net.blocks:
        if isinstance(blk, StateSpace):
            blocks.append({"name": name, "kind": "state_space", "model": blk.to_json()})
        else:
            blocks.append({"name": name, "kind": "static",
                           "s": matrix_to_json(blk.s), "labels": list(blk.labels)})
    return {
        "blocks": blocks,
        "edges": [[f"{sb}.out[{sc}]", f"{db}.in[{dc}]"]
                  for (sb, sc), (db, dc) in net.internal_edges],
        "inputs": [[p.label, p.canonical] for p in net.external_inputs],
        "outputs": [[p.label, p.canonical] for p in net.external_outputs],
    }


def network_from_json(data: dict) -> ComposedNetwork:
    items: list[tuple[str, Block]] = []
    for entry in data["blocks"]:
        if entry["kind"] == "state_space":
            items.append((entry["name"], StateSpace.from_json(entry["model"])))
        elif entry["kind"] == "static":
            items.append((entry["name"], StaticComponent(
                matrix_from_json(entry["s"]), tuple(entry.get("labels", ())))))
        else:
            raise InvalidSpecError(f"unknown block kind {entry['kind']!r}")
    net = concatenate(items)
    for src, dst in data["edges"]:
        net = connect(net, src, dst)
    net = with_io(net,
                  inputs=[(label, ref) for label, ref in data.get("inputs", [])],
                  outputs=[(label, ref) for label, ref in data.get("outputs", [])])
    return net
