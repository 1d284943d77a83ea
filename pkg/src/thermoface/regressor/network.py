"""Encoder-decoder position-map regressor with hand-written backpropagation.

Encoder: one stride-1 convolution, then residual blocks. Decoder: a chain of
transposed convolutions ending in a linear 3-channel layer. Every kernel is
4x4 (1x1 for skip projections) and every hidden activation is ReLU.

The default desk-scale network maps 32x32 images to 32x32 position maps;
:meth:`NetworkSpec.full_scale` builds the 256x256, 10-residual,
17-transposed layout.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..image import Image, to_luminance
from ..posmap import PositionMap
from .layers import (
    ShapeError,
    conv2d,
    conv2d_grad_input,
    conv2d_grad_weight,
    conv_forward,
    conv_transpose_forward,
)

CHECKPOINT_MAGIC = b"TPRN"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def default_strides(residual_blocks: int, transposed_blocks: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Encoder strides alternate 2, 1, 2, ...; the decoder upsamples as often,
    starting at its second block and spaced evenly."""
    enc = tuple(2 if j % 2 == 0 else 1 for j in range(residual_blocks))
    downs = sum(s == 2 for s in enc)
    dec = [1] * transposed_blocks
    if downs:
        step = max(1, (transposed_blocks - 2) // downs)
        for i in range(downs):
            pos = 1 + i * step
            if pos >= transposed_blocks:
                raise ShapeError(
                    f"{transposed_blocks} transposed blocks cannot undo {downs} downsamplings"
                )
            dec[pos] = 2
    return enc, tuple(dec)


def default_channels(base: int, enc: tuple[int, ...], dec: tuple[int, ...]) -> tuple[int, ...]:
    """Stem width ``base``, doubling at each downsampling and halving on the way up."""
    chans = [base]
    level = 0
    for s in enc:
        level += s == 2
        chans.append(base * 2**level)
    for t, s in enumerate(dec):
        level -= s == 2
        chans.append(3 if t == len(dec) - 1 else base * 2**level)
    return tuple(chans)


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description.

    ``channels`` lists the output width of the stem, of each residual block
    and of each transposed block (the last must be 3). Network outputs are
    multiplied by ``output_scale`` so position maps come out in pixels.
    """

    input_size: int = 32
    residual_blocks: int = 2
    transposed_blocks: int = 5
    base_channels: int = 8
    in_channels: int = 1
    kernel: int = 4
    output_scale: float | None = None
    channels: tuple[int, ...] | None = None
    encoder_strides: tuple[int, ...] | None = None
    decoder_strides: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kernel != 4:
            raise ShapeError("kernel size is fixed at 4")
        if self.input_size < 1 or self.residual_blocks < 0 or self.transposed_blocks < 1:
            raise ShapeError("invalid block counts or input size")
        enc, dec = default_strides(self.residual_blocks, self.transposed_blocks)
        if self.encoder_strides is not None:
            enc = tuple(self.encoder_strides)
        if self.decoder_strides is not None:
            dec = tuple(self.decoder_strides)
        if len(enc) != self.residual_blocks or len(dec) != self.transposed_blocks:
            raise ShapeError("stride lists do not match the block counts")
        if any(s not in (1, 2) for s in enc + dec):
            raise ShapeError("strides must be 1 or 2")
        chans = self.channels
        if chans is None:
            chans = default_channels(self.base_channels, enc, dec)
        chans = tuple(int(c) for c in chans)
        if len(chans) != 1 + len(enc) + len(dec) or chans[-1] != 3 or min(chans) < 1:
            raise ShapeError(f"bad channel list {chans}")
        size = self.input_size
        for s in enc:
            if size % s:
                raise ShapeError(f"input size {self.input_size} not divisible along the encoder")
            size //= s
        for s in dec:
            size *= s
        if size != self.input_size:
            raise ShapeError(
                f"decoder output {size} does not round-trip the input size {self.input_size}"
            )
        object.__setattr__(self, "encoder_strides", enc)
        object.__setattr__(self, "decoder_strides", dec)
        object.__setattr__(self, "channels", chans)
        if self.output_scale is None:
            object.__setattr__(self, "output_scale", float(self.input_size))

    @classmethod
    def full_scale(cls) -> "NetworkSpec":
        return cls(input_size=256, residual_blocks=10, transposed_blocks=17, base_channels=16, in_channels=3)

    def layers(self) -> list[tuple[str, str, int, int, int, int]]:
        """``(name, kind, c_in, c_out, kernel, stride)`` for every parametrised layer."""
        out = [("stem", "conv", self.in_channels, self.channels[0], self.kernel, 1)]
        c = self.channels[0]
        for j, s in enumerate(self.encoder_strides):
            co = self.channels[1 + j]
            out.append((f"res{j}.conv1", "conv", c, co, self.kernel, s))
            out.append((f"res{j}.conv2", "conv", co, co, self.kernel, 1))
            if c != co or s != 1:
                out.append((f"res{j}.proj", "conv", c, co, 1, s))
            c = co
        off = 1 + len(self.encoder_strides)
        for t, s in enumerate(self.decoder_strides):
            co = self.channels[off + t]
            out.append((f"dec{t}", "convT", c, co, self.kernel, s))
            c = co
        return out


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class Network:
    spec: NetworkSpec
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def initialize(cls, spec: NetworkSpec, seed: int = 0) -> "Network":
        rng = np.random.default_rng(seed)
        params: dict[str, np.ndarray] = {}
        for name, kind, ci, co, k, _ in spec.layers():
            shape = (co, ci, k, k) if kind == "conv" else (ci, co, k, k)
            params[name + ".w"] = glorot_uniform(rng, shape, ci * k * k, co * k * k)
            params[name + ".b"] = np.zeros(co)
        return cls(spec, params)

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "Network":
        return Network(self.spec, {k: v.copy() for k, v in self.params.items()})

    def _input_tensor(self, img: Image | np.ndarray) -> np.ndarray:
        if isinstance(img, np.ndarray):
            x = np.asarray(img, dtype=np.float64)
            return x[None] if x.ndim == 3 else x
        if img.width != self.spec.input_size or img.height != self.spec.input_size:
            raise ShapeError(
                f"network expects {self.spec.input_size}x{self.spec.input_size}, got {img.width}x{img.height}"
            )
        data = img.data
        if img.channels != self.spec.in_channels:
            data = to_luminance(img).data if self.spec.in_channels == 1 else np.repeat(data, 3, axis=0)
        return data[None]

    def forward_tensor(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        """Raw forward pass on an (N, C, H, W) batch; returns output and tape."""
        p = self.params
        tape: list = []
        h = conv_forward(x, p["stem.w"], p["stem.b"], 1)
        tape.append(("stem", x, h))
        h = np.maximum(h, 0.0)
        for j, s in enumerate(self.spec.encoder_strides):
            name = f"res{j}"
            a1 = conv_forward(h, p[name + ".conv1.w"], p[name + ".conv1.b"], s)
            r1 = np.maximum(a1, 0.0)
            a2 = conv_forward(r1, p[name + ".conv2.w"], p[name + ".conv2.b"], 1)
            if name + ".proj.w" in p:
                skip = conv_forward(h, p[name + ".proj.w"], p[name + ".proj.b"], s)
            else:
                skip = h
            tape.append((name, h, a1, r1))
            h = skip + a2
        last = len(self.spec.decoder_strides) - 1
        for t, s in enumerate(self.spec.decoder_strides):
            name = f"dec{t}"
            a = conv_transpose_forward(h, p[name + ".w"], p[name + ".b"], s)
            tape.append((name, h, a))
            h = a if t == last else np.maximum(a, 0.0)
        return h * self.spec.output_scale, tape

    def backward_tensor(self, dout: np.ndarray, tape: list) -> dict[str, np.ndarray]:
        """Gradients of every parameter given d(loss)/d(output)."""
        p = self.params
        grads: dict[str, np.ndarray] = {}
        g = dout * self.spec.output_scale
        dec = [e for e in tape if e[0].startswith("dec")]
        last = len(dec) - 1
        for t in range(last, -1, -1):
            name, x, a = dec[t]
            s = self.spec.decoder_strides[t]
            if t != last:
                g = g * (a > 0)
            w = p[name + ".w"]
            grads[name + ".b"] = g.sum(axis=(0, 2, 3))
            grads[name + ".w"] = conv2d_grad_weight(g, x, w.shape[2], s)
            g = conv2d(g, w, s)
        res = [e for e in tape if e[0].startswith("res")]
        for j in range(len(res) - 1, -1, -1):
            name, x, a1, r1 = res[j]
            s = self.spec.encoder_strides[j]
            w1, w2 = p[name + ".conv1.w"], p[name + ".conv2.w"]
            grads[name + ".conv2.b"] = g.sum(axis=(0, 2, 3))
            grads[name + ".conv2.w"] = conv2d_grad_weight(r1, g, w2.shape[2], 1)
            d1 = conv2d_grad_input(g, w2, 1, r1.shape[2:]) * (a1 > 0)
            grads[name + ".conv1.b"] = d1.sum(axis=(0, 2, 3))
            grads[name + ".conv1.w"] = conv2d_grad_weight(x, d1, w1.shape[2], s)
            gx = conv2d_grad_input(d1, w1, s, x.shape[2:])
            if name + ".proj.w" in p:
                wp = p[name + ".proj.w"]
                grads[name + ".proj.b"] = g.sum(axis=(0, 2, 3))
                grads[name + ".proj.w"] = conv2d_grad_weight(x, g, 1, s)
                gx = gx + conv2d_grad_input(g, wp, s, x.shape[2:])
            else:
                gx = gx + g
            g = gx
        _, x, h = tape[0]
        g = g * (h > 0)
        grads["stem.b"] = g.sum(axis=(0, 2, 3))
        grads["stem.w"] = conv2d_grad_weight(x, g, p["stem.w"].shape[2], 1)
        return grads

    def predict(self, img: Image) -> PositionMap:
        """Position map for ``img``; channels are (x, y, z) in input pixels."""
        out, _ = self.forward_tensor(self._input_tensor(img))
        return PositionMap(np.moveaxis(out[0], 0, -1))


def forward(net: Network, img: Image) -> PositionMap:
    return net.predict(img)


def residual_block_forward(x: np.ndarray, weights: dict[str, np.ndarray], stride: int = 1) -> np.ndarray:
    """One residual block: ``skip(x) + conv2(relu(conv1(x)))``.

    ``weights`` holds ``conv1.w/b``, ``conv2.w/b`` and optionally
    ``proj.w/b`` for a 1x1 projected skip.
    """
    a1 = conv_forward(x, weights["conv1.w"], weights.get("conv1.b"), stride)
    a2 = conv_forward(np.maximum(a1, 0.0), weights["conv2.w"], weights.get("conv2.b"), 1)
    if "proj.w" in weights:
        skip = conv_forward(x, weights["proj.w"], weights.get("proj.b"), stride)
    else:
        if stride != 1 or weights["conv2.w"].shape[0] != x.shape[1]:
            raise ShapeError("identity skip needs stride 1 and equal channel counts")
        skip = x
    return skip + a2


def save_checkpoint(net: Network) -> bytes:
    """Serialise ``net``; see the README for the byte layout."""
    s = net.spec
    head = CHECKPOINT_MAGIC + struct.pack(
        "<IIIIIfII",
        CHECKPOINT_VERSION,
        s.input_size,
        s.in_channels,
        s.kernel,
        s.base_channels,
        s.output_scale,
        s.residual_blocks,
        s.transposed_blocks,
    )
    head += struct.pack(f"<{len(s.channels)}I", *s.channels)
    head += bytes(s.encoder_strides) + bytes(s.decoder_strides)
    names = [n for layer in s.layers() for n in (layer[0] + ".w", layer[0] + ".b")]
    flat = np.concatenate([net.params[n].ravel() for n in names]).astype("<f4")
    return head + struct.pack("<Q", flat.size) + flat.tobytes()


def load_checkpoint(data: bytes) -> Network:
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a TPRN checkpoint")
    fixed = struct.calcsize("<IIIIIfII")
    if len(data) < 4 + fixed:
        raise CheckpointError("truncated checkpoint header")
    version, size, in_ch, kernel, base, scale, nres, ntr = struct.unpack_from("<IIIIIfII", data, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 4 + fixed
    nch = 1 + nres + ntr
    need = pos + 4 * nch + nres + ntr + 8
    if len(data) < need:
        raise CheckpointError("truncated checkpoint header")
    chans = struct.unpack_from(f"<{nch}I", data, pos)
    pos += 4 * nch
    enc = tuple(data[pos:pos + nres])
    dec = tuple(data[pos + nres:pos + nres + ntr])
    pos += nres + ntr
    try:
        spec = NetworkSpec(
            input_size=size,
            residual_blocks=nres,
            transposed_blocks=ntr,
            base_channels=base,
            in_channels=in_ch,
            kernel=kernel,
            output_scale=float(scale),
            channels=chans,
            encoder_strides=enc,
            decoder_strides=dec,
        )
    except ShapeError as exc:
        raise CheckpointError(f"checkpoint describes an invalid network: {exc}") from exc
    (count,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) != pos + 4 * count:
        raise CheckpointError(f"checkpoint should hold {count} parameters")
    flat = np.frombuffer(data, "<f4", count, pos).astype(np.float64)
    template = Network.initialize(spec, seed=0)
    if count != template.parameter_count:
        raise CheckpointError(f"parameter count {count} does not match the network ({template.parameter_count})")
    params = {}
    off = 0
    for name, arr in template.params.items():
        params[name] = flat[off:off + arr.size].reshape(arr.shape).copy()
        off += arr.size
    return Network(spec, params)


def read_checkpoint(path) -> Network:
    return load_checkpoint(Path(path).read_bytes())


def write_checkpoint(path, net: Network) -> None:
    Path(path).write_bytes(save_checkpoint(net))
