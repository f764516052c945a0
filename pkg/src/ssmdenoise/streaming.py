"""Chunked real-time inference with the recurrent form of every SSM layer.

The network is run as a dataflow graph of small stateful nodes. Each node
takes the frames that became available (shape ``(C, k)``) and returns the
frames it can now emit. PreConvs hold back one frame of look-ahead,
downsamplers accumulate partial groups, and residual and skip additions
queue the earlier operand until the later one catches up.

The emitted stream is delayed by exactly ``latency_samples(config)``:
output sample ``t`` is the batch output for input sample ``t - latency``,
and the first ``latency`` samples are zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers
from .config import latency_samples
from .errors import AlignmentError
from .execution import scan_recurrent
from .network import has_norm
from .ssm import discretize_zoh


class FrameQueue:
    """FIFO of frames stored along the last axis."""

    def __init__(self, channels, dtype):
        self.buf = np.zeros((channels, 0), dtype=dtype)

    def __len__(self):
        return self.buf.shape[1]

    def push(self, frames):
        self.buf = np.concatenate([self.buf, frames], axis=1)

    def pop(self, k):
        if k > len(self):
            raise RuntimeError(f"stream underrun: need {k} frames, have {len(self)}")
        out, self.buf = self.buf[:, :k], self.buf[:, k:]
        return out


class PreConvNode:
    """Centered width-3 depthwise conv; frame ``k`` is emitted once ``k+1`` arrives."""

    def __init__(self, weight, bias, dtype):
        self.weight, self.bias = weight, bias
        # frame -1 is the zero padding of the batch path
        self.tail = np.zeros((weight.shape[0], 1), dtype=dtype)

    def push(self, frames):
        ext = np.concatenate([self.tail, frames], axis=1)
        self.tail = ext[:, -2:]
        if ext.shape[1] < 3:
            return ext[:, :0]
        w = self.weight
        y = w[:, 0:1] * ext[:, :-2] + w[:, 1:2] * ext[:, 1:-1] + w[:, 2:3] * ext[:, 2:]
        return y + self.bias[:, None]


class MapNode:
    """Stateless per-frame operation."""

    def __init__(self, fn):
        self.fn = fn

    def push(self, frames):
        return self.fn(frames)


class SSMNode:
    def __init__(self, d, dtype):
        self.d = d
        self.x = np.zeros(d.h, dtype=np.result_type(dtype, np.complex64))

    def push(self, frames):
        if frames.shape[1] == 0:
            return np.zeros((self.d.m, 0), dtype=frames.dtype)
        return scan_recurrent(self.x, self.d, frames).astype(frames.dtype, copy=False)


class DownNode:
    def __init__(self, r, weight, bias, dtype):
        self.r, self.weight, self.bias = r, weight, bias
        self.pending = FrameQueue(weight.shape[1] // r, dtype)

    def push(self, frames):
        self.pending.push(frames)
        k = len(self.pending) // self.r
        return layers.downsample(self.pending.pop(k * self.r), self.r, self.weight, self.bias)


class UpNode:
    def __init__(self, r, weight, bias):
        self.r, self.weight, self.bias = r, weight, bias

    def push(self, frames):
        return layers.upsample(frames, self.r, self.weight, self.bias)


class Chain:
    def __init__(self, nodes):
        self.nodes = list(nodes)

    def push(self, frames):
        for node in self.nodes:
            frames = node.push(frames)
        return frames


class AddNode:
    """``a + b`` where ``b`` lags behind ``a``; ``a`` frames wait in a queue."""

    def __init__(self, channels, dtype):
        self.queue = FrameQueue(channels, dtype)

    def push(self, lead, lag):
        self.queue.push(lead)
        return self.queue.pop(lag.shape[1]) + lag


class ResidualNode:
    def __init__(self, branch, channels, dtype):
        self.branch = branch
        self.add = AddNode(channels, dtype)

    def push(self, frames):
        return self.add.push(frames, self.branch.push(frames))


def _branch_nodes(net, lay, p, dtype):
    name = lay.name
    nodes = []
    if lay.spec.has_preconv:
        nodes.append(PreConvNode(p[f"{name}.preconv.weight"], p[f"{name}.preconv.bias"], dtype))
    if has_norm(lay):
        w, b = p[f"{name}.norm.weight"], p[f"{name}.norm.bias"]
        if lay.spec.norm == "layer":
            nodes.append(MapNode(lambda x, w=w, b=b: layers.layernorm_forward(x, w, b)[0]))
        else:
            mean = net.buffers[f"{name}.norm.running_mean"].astype(dtype)
            var = net.buffers[f"{name}.norm.running_var"].astype(dtype)
            nodes.append(
                MapNode(lambda x, w=w, b=b, mu=mean, v=var: layers.batchnorm_forward(x, w, b, mu, v)[0])
            )
    nodes.append(SSMNode(discretize_zoh(net.ssm(name)).astype(dtype), dtype))
    kind = lay.spec.activation
    nodes.append(MapNode(lambda x, kind=kind: layers.activation_forward(x, kind)[0]))
    return Chain(nodes)


@dataclass
class StreamState:
    """Everything a stream carries between chunks.

    ``blocks`` holds per-block node graphs (complex SSM states, PreConv
    look-ahead buffers, resampling remainders); ``skips`` the queued encoder
    features; ``output`` the delay line in front of the emitted stream.
    """

    net: object
    dtype: np.dtype
    latency: int
    blocks: dict = field(default_factory=dict)
    skips: dict = field(default_factory=dict)
    output: FrameQueue = None
    samples_in: int = 0

    def ssm_states(self):
        """``{block name: complex state vector}`` (live views)."""
        out = {}
        for name, parts in self.blocks.items():
            for node in parts["branch"].branch.nodes:
                if isinstance(node, SSMNode):
                    out[name] = node.x
        return out


def reset_stream(net, dtype=np.float64):
    """Fresh stream state: zero SSM states, zero-padded PreConv history."""
    dtype = np.dtype(dtype)
    p = {k: v.astype(dtype) for k, v in net.params.items()}
    state = StreamState(net=net, dtype=dtype, latency=latency_samples(net.config))
    for lay in net.layouts():
        name, r = lay.name, lay.spec.resample_factor
        parts = {"branch": ResidualNode(_branch_nodes(net, lay, p, dtype), lay.channels, dtype)}
        if lay.spec.stage == "encoder":
            parts["down"] = DownNode(r, p[f"{name}.down.weight"], p[f"{name}.down.bias"], dtype)
        if lay.spec.stage == "decoder":
            parts["up"] = UpNode(r, p[f"{name}.up.weight"], p[f"{name}.up.bias"])
            if lay.skip is not None:
                parts["skip"] = AddNode(lay.channels, dtype)
        state.blocks[name] = parts
    state.output = FrameQueue(1, dtype)
    state.output.push(np.zeros((1, state.latency), dtype=dtype))
    return state


def run_streaming(net, state, chunk):
    """Push one chunk of samples through the network; returns as many samples.

    The chunk length must be a positive multiple of the total resampling
    factor.
    """
    chunk = np.asarray(chunk, dtype=state.dtype).reshape(-1)
    factor = net.config.total_factor
    if chunk.size == 0 or chunk.size % factor:
        raise AlignmentError(f"chunk length {chunk.size} is not a positive multiple of {factor}")
    x = chunk[None, :]
    skips = {}
    for lay in net.layouts():
        parts = state.blocks[lay.name]
        if lay.spec.stage == "decoder":
            x = parts["up"].push(x)
            if "skip" in parts:
                x = parts["skip"].push(skips[lay.skip], x)
        x = parts["branch"].push(x)
        if lay.spec.stage == "encoder":
            skips[lay.name] = x
            x = parts["down"].push(x)
    state.output.push(x)
    state.samples_in += chunk.size
    return state.output.pop(chunk.size)[0]


def stream_signal(net, signal, chunk=256, dtype=np.float64):
    """Run a whole signal through a fresh stream; returns the delayed output."""
    signal = np.asarray(signal).reshape(-1)
    if signal.size % chunk:
        raise AlignmentError(f"signal length {signal.size} is not a multiple of chunk {chunk}")
    state = reset_stream(net, dtype)
    parts = [run_streaming(net, state, signal[i : i + chunk]) for i in range(0, signal.size, chunk)]
    return np.concatenate(parts)
