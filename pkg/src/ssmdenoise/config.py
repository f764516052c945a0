"""Block-structured description of the hourglass network.

A config is an ordered list of blocks in four stages: ``encoder`` blocks
downsample, ``neck`` blocks keep the rate, ``decoder`` blocks upsample and
``output`` blocks post-process at the input rate. Encoder block ``i``
(0-based) feeds a skip connection into decoder block ``E - 1 - i``.

Configs serialize to JSON::

    {"sample_rate": 16000, "ssm_state_size": 256,
     "blocks": [{"stage": "encoder", "factor": 4, "channels": 16,
                 "preconv": false, "norm": "layer", "activation": "silu"}, ...]}
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

from .errors import ConfigError

STAGES = ("encoder", "neck", "decoder", "output")
NORMS = ("layer", "batch")
ACTIVATIONS = ("silu", "relu")
INPUT_CHANNELS = 1


@dataclass(frozen=True)
class BlockSpec:
    stage: str
    resample_factor: int = 1
    out_channels: int = 1
    has_preconv: bool = False
    norm: str = "layer"
    activation: str = "silu"


@dataclass(frozen=True)
class BlockLayout:
    """Resolved shapes of one block.

    ``channels`` is the width the block's SSM runs at and ``period`` the
    spacing of its frames in input samples.
    """

    name: str
    spec: BlockSpec
    in_channels: int
    channels: int
    out_channels: int
    period: int
    skip: str | None = None


@dataclass(frozen=True)
class NetworkConfig:
    sample_rate: int = 16000
    blocks: tuple = field(default_factory=tuple)
    ssm_state_size: int = 256

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        validate(self)

    @property
    def total_factor(self):
        return math.prod(b.resample_factor for b in self.blocks if b.stage == "encoder")

    def layout(self):
        return _layout(self)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_preconv(self, mode):
        """Copy with PreConvs on every eligible block (``"all"``), only in
        the encoder (``"encoder"``) or nowhere (``"none"``)."""
        if mode not in ("all", "encoder", "none"):
            raise ConfigError(f"unknown preconv mode {mode!r}")
        blocks = []
        for lay in _layout(self, check_preconv=False):
            want = preconv_allowed(lay) and (
                mode == "all" or (mode == "encoder" and lay.spec.stage == "encoder")
            )
            blocks.append(dataclasses.replace(lay.spec, has_preconv=want))
        return self.replace(blocks=tuple(blocks))

    def with_norm_activation(self, norm, activation):
        blocks = tuple(dataclasses.replace(b, norm=norm, activation=activation) for b in self.blocks)
        return self.replace(blocks=blocks)


def preconv_allowed(lay):
    return lay.channels > 1 and lay.spec.stage in ("encoder", "decoder")


def _layout(cfg, check_preconv=True):
    layouts = []
    counters = dict.fromkeys(STAGES, 0)
    c, period = INPUT_CHANNELS, 1
    enc_names = []
    n_enc = sum(b.stage == "encoder" for b in cfg.blocks)
    for b in cfg.blocks:
        idx = counters[b.stage]
        counters[b.stage] += 1
        name = {"encoder": "enc", "neck": "neck", "decoder": "dec", "output": "out"}[b.stage] + str(idx)
        r = b.resample_factor
        skip = None
        if b.stage == "encoder":
            lay = BlockLayout(name, b, c, c, b.out_channels, period)
            enc_names.append(name)
            period *= r
        elif b.stage == "decoder":
            if c % r:
                raise ConfigError(f"{name}: {c} channels not divisible by factor {r}")
            period, rem = divmod(period, r)
            if rem or period < 1:
                raise ConfigError(f"{name}: upsampling past the input rate")
            skip = enc_names[n_enc - 1 - idx] if n_enc - 1 - idx >= 0 else None
            lay = BlockLayout(name, b, c, b.out_channels, b.out_channels, period, skip)
        else:
            if r != 1:
                raise ConfigError(f"{name}: {b.stage} blocks cannot resample")
            if b.out_channels != c:
                raise ConfigError(f"{name}: {b.stage} block must keep {c} channels")
            lay = BlockLayout(name, b, c, c, c, period)
        if check_preconv and b.has_preconv and not preconv_allowed(lay):
            raise ConfigError(f"{name}: PreConv not allowed (neck/output stage or single channel)")
        layouts.append(lay)
        c = b.out_channels
    return layouts


def validate(cfg):
    if cfg.sample_rate <= 0:
        raise ConfigError("sample_rate must be positive")
    if cfg.ssm_state_size < 1:
        raise ConfigError("ssm_state_size must be >= 1")
    if not cfg.blocks:
        raise ConfigError("config has no blocks")
    order = [STAGES.index(b.stage) if b.stage in STAGES else -1 for b in cfg.blocks]
    if min(order) < 0:
        raise ConfigError(f"unknown stage in {[b.stage for b in cfg.blocks]}")
    if order != sorted(order):
        raise ConfigError("blocks must be ordered encoder, neck, decoder, output")
    for b in cfg.blocks:
        if b.resample_factor < 1 or b.out_channels < 1:
            raise ConfigError(f"bad block {b}")
        if b.norm not in NORMS or b.activation not in ACTIVATIONS:
            raise ConfigError(f"bad norm/activation in {b}")
    enc = [b for b in cfg.blocks if b.stage == "encoder"]
    dec = [b for b in cfg.blocks if b.stage == "decoder"]
    if len(enc) != len(dec):
        raise ConfigError(f"{len(enc)} encoder blocks but {len(dec)} decoder blocks")
    if math.prod(b.resample_factor for b in enc) != math.prod(b.resample_factor for b in dec):
        raise ConfigError("encoder and decoder resampling products differ")
    layouts = _layout(cfg)
    by_name = {lay.name: lay for lay in layouts}
    for lay in layouts:
        if lay.skip is None:
            continue
        src = by_name[lay.skip]
        if src.spec.resample_factor != lay.spec.resample_factor or src.channels != lay.channels:
            raise ConfigError(f"{lay.name} does not mirror {src.name}")
    if layouts[-1].out_channels != INPUT_CHANNELS:
        raise ConfigError("network must end with a single channel")


def default_config(preconv="all", norm="layer", activation="silu"):
    """The 6/2/6/2-block network at 16 kHz with h = 256."""
    cfg = loads_config(resources.files(__package__).joinpath("default_config.json").read_text())
    if norm != "layer" or activation != "silu":
        cfg = cfg.with_norm_activation(norm, activation)
    return cfg if preconv == "all" else cfg.with_preconv(preconv)


def to_dict(cfg):
    return {
        "sample_rate": cfg.sample_rate,
        "ssm_state_size": cfg.ssm_state_size,
        "blocks": [
            {
                "stage": b.stage,
                "factor": b.resample_factor,
                "channels": b.out_channels,
                "preconv": b.has_preconv,
                "norm": b.norm,
                "activation": b.activation,
            }
            for b in cfg.blocks
        ],
    }


def from_dict(data):
    try:
        blocks = tuple(
            BlockSpec(
                stage=str(b["stage"]),
                resample_factor=int(b.get("factor", 1)),
                out_channels=int(b["channels"]),
                has_preconv=bool(b.get("preconv", False)),
                norm=str(b.get("norm", "layer")),
                activation=str(b.get("activation", "silu")),
            )
            for b in data["blocks"]
        )
        return NetworkConfig(
            sample_rate=int(data.get("sample_rate", 16000)),
            blocks=blocks,
            ssm_state_size=int(data.get("ssm_state_size", 256)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed config: {exc!r}") from exc


def loads_config(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return from_dict(data)


def load_config(path):
    with open(path, encoding="utf-8") as f:
        return loads_config(f.read())


def dumps_config(cfg):
    return json.dumps(to_dict(cfg), indent=2)


def preconv_latencies(cfg):
    """``{block name: added latency in ms}`` for every PreConv, as Fractions.

    A centered width-3 convolution waits for one frame at its operating rate.
    Encoder PreConvs run at the block input rate, decoder PreConvs after the
    upsample.
    """
    return {
        lay.name: Fraction(1000 * lay.period, cfg.sample_rate)
        for lay in cfg.layout()
        if lay.spec.has_preconv
    }


def compute_latency(cfg):
    """Theoretical latency in milliseconds (exact Fraction)."""
    base = Fraction(1000 * cfg.total_factor, cfg.sample_rate)
    return base + sum(preconv_latencies(cfg).values(), Fraction(0))


def latency_samples(cfg):
    return math.ceil(compute_latency(cfg) * cfg.sample_rate / 1000)
