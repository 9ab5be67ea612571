"""Model checkpoints.

Layout, little-endian::

    b"HVAE"  version:u16  kind:u8 (0 tf_hvae, 1 auto-encoder, 2 plain VAE)
    config   input_dim, h, z: u32; m, s, prior_weight, kl2, kl3: f64;
             kl_mode:u8 detach_target:u8
             learning_rate, momentum: f64; epochs, batch_size: u32; seed: i64
    trained:u8  layer_count:u32
    per layer  out:u32 in:u32 activation:u8, then row-major f64 weights (out x in),
               bias (out), weight momentum (out x in), bias momentum (out)

Momentum buffers are stored so that training can resume bit-exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from .baselines import AutoEncoder, PlainVAE
from .hvae import KL_MODES, HvaeConfig, HvaeModel
from .nn import ACTIVATIONS, TrainConfig

MAGIC = b"HVAE"
VERSION = 1
_KINDS = {HvaeModel: 0, AutoEncoder: 1, PlainVAE: 2}
_CLASSES = {v: k for k, v in _KINDS.items()}
_CONFIG = "<3I5dBB2d2Iq"


class CheckpointError(ValueError):
    pass


def _pack_config(cfg: HvaeConfig) -> bytes:
    t = cfg.train
    return struct.pack(_CONFIG, cfg.input_dim, cfg.h, cfg.z, cfg.double_peak_m, cfg.double_peak_s,
                       cfg.prior_weight, cfg.kl2_weight, cfg.kl3_weight,
                       KL_MODES.index(cfg.kl_mode), int(cfg.detach_target),
                       t.learning_rate, t.momentum, t.epochs, t.batch_size, t.seed)


def _unpack_config(vals) -> HvaeConfig:
    d, h, z, m, s, pw, k2, k3, mode, detach, lr, mom, ep, bs, seed = vals
    if mode >= len(KL_MODES):
        raise CheckpointError(f"unknown kl_mode code {mode}")
    train = TrainConfig(learning_rate=lr, momentum=mom, epochs=ep, batch_size=bs, seed=seed)
    return HvaeConfig(input_dim=d, h=h, z=z, double_peak_m=m, double_peak_s=s, prior_weight=pw,
                      kl2_weight=k2, kl3_weight=k3, kl_mode=KL_MODES[mode],
                      detach_target=bool(detach), train=train)


def dumps(model) -> bytes:
    kind = _KINDS.get(type(model))
    if kind is None:
        raise CheckpointError(f"cannot checkpoint {type(model).__name__}")
    parts = [MAGIC, struct.pack("<HB", VERSION, kind), _pack_config(model.config),
             struct.pack("<BI", int(model.trained), len(model.layers))]
    for layer in model.layers:
        parts.append(struct.pack("<IIB", layer.out_dim, layer.in_dim,
                                 ACTIVATIONS.index(layer.activation)))
        for arr in (layer.weights, layer.bias, layer.weight_momentum, layer.bias_momentum):
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(buf: bytes):
    pos = 0

    def take(fmt_or_n, what):
        nonlocal pos
        n = fmt_or_n if isinstance(fmt_or_n, int) else struct.calcsize(fmt_or_n)
        if pos + n > len(buf):
            raise CheckpointError(f"checkpoint truncated while reading {what}")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk if isinstance(fmt_or_n, int) else struct.unpack(fmt_or_n, chunk)

    if take(4, "magic") != MAGIC:
        raise CheckpointError("not a model checkpoint: bad magic")
    version, kind = take("<HB", "header")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    if kind not in _CLASSES:
        raise CheckpointError(f"unknown model kind code {kind}")
    try:
        config = _unpack_config(take(_CONFIG, "config block"))
    except ValueError as exc:
        raise CheckpointError(f"invalid config block: {exc}") from exc
    trained, count = take("<BI", "layer count")
    model = _CLASSES[kind].build(config)
    if count != len(model.layers):
        raise CheckpointError(f"checkpoint has {count} layers, architecture expects {len(model.layers)}")
    for layer in model.layers:
        out_dim, in_dim, act = take("<IIB", f"layer {layer.name} header")
        if (out_dim, in_dim) != layer.weights.shape or act >= len(ACTIVATIONS) \
                or ACTIVATIONS[act] != layer.activation:
            raise CheckpointError(f"layer {layer.name}: stored shape ({out_dim}, {in_dim}) or "
                                  f"activation does not match the configured architecture")
        for attr, shape in (("weights", (out_dim, in_dim)), ("bias", (out_dim, 1)),
                            ("weight_momentum", (out_dim, in_dim)), ("bias_momentum", (out_dim, 1))):
            raw = take(8 * out_dim * shape[1], f"layer {layer.name} {attr}")
            setattr(layer, attr, np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes in checkpoint")
    model.trained = bool(trained)
    return model


def save_checkpoint(model, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
