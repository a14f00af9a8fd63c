"""MLP-backed fields: weight containers, forward evaluation, and file IO.

Two networks realize the factorization: a position net taking the Fourier
encoded point to (sigma_raw, u_1, v_1, w_1, ..., u_D, v_D, w_D), width
1 + 3D, and a direction net taking the encoded unit direction to the D
weights beta. Hidden layers use the rectifier, outputs are identity, and
sigma passes through max(0, .) at evaluation. Defaults mirror the flagship
architecture: position net 8 layers of 384 units, direction net 4 layers of
128 units, encoding bands 10 (positions) and 4 (directions).

Weights persist in the shared binary container (kind b"MLPW"), float32
little-endian, bit-identical across save/load round trips.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container, encoding
from .errors import ParseError, UninitializedField
from .fields import FactorizedField

KIND = b"MLPW"

POS_HIDDEN = 384
POS_DEPTH = 8
DIR_HIDDEN = 128
DIR_DEPTH = 4
L_POS_DEFAULT = 10
L_DIR_DEFAULT = 4


@dataclass(frozen=True)
class Layer:
    """One dense layer: y = act(x @ weight.T + bias)."""

    weight: np.ndarray  # (out, in) float32
    bias: np.ndarray  # (out,) float32
    activation: str  # "relu" | "identity"

    def __post_init__(self):
        if self.activation not in ("relu", "identity"):
            raise ParseError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ParseError(
                f"layer shape mismatch: weight {self.weight.shape}, bias {self.bias.shape}"
            )


@dataclass(frozen=True)
class MlpWeights:
    """Both networks plus the metadata needed to evaluate them."""

    pos_layers: tuple[Layer, ...]
    dir_layers: tuple[Layer, ...]
    d: int
    l_pos: int
    l_dir: int

    def __post_init__(self):
        _check_chain("position", self.pos_layers, encoding.out_dim(3, self.l_pos), 1 + 3 * self.d)
        _check_chain("direction", self.dir_layers, encoding.out_dim(3, self.l_dir), self.d)


def _check_chain(tag: str, layers: tuple[Layer, ...], in_dim: int, out_dim: int) -> None:
    if not layers:
        raise ParseError(f"{tag} net has no layers")
    cur = in_dim
    for i, layer in enumerate(layers):
        if layer.weight.shape[1] != cur:
            raise ParseError(
                f"{tag} layer {i} expects input {layer.weight.shape[1]}, chain gives {cur}"
            )
        cur = layer.weight.shape[0]
    if cur != out_dim:
        raise ParseError(f"{tag} net ends at width {cur}, declared D requires {out_dim}")


def forward(layers: tuple[Layer, ...], x: np.ndarray) -> np.ndarray:
    """Run rows of x (n, in) through the layer stack."""
    for layer in layers:
        x = x @ layer.weight.T + layer.bias
        if layer.activation == "relu":
            np.maximum(x, 0.0, out=x)
    return x


class MlpField(FactorizedField):
    """FactorizedField backed by the two MLPs."""

    def __init__(self, weights: MlpWeights):
        if weights is None:
            raise UninitializedField("MlpField requires weights")
        self.weights = weights

    @property
    def d(self) -> int:
        return self.weights.d

    def eval_pos_batch(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = encoding.encode_batch(np.asarray(points, dtype=np.float32), self.weights.l_pos)
        raw = forward(self.weights.pos_layers, x)
        sigma = np.maximum(raw[:, 0], 0.0)
        comps = raw[:, 1:].reshape(len(points), self.d, 3)
        return sigma, comps

    def eval_dir_batch(self, dirs: np.ndarray) -> np.ndarray:
        x = encoding.encode_batch(np.asarray(dirs, dtype=np.float32), self.weights.l_dir)
        return forward(self.weights.dir_layers, x)


def save_weights(weights: MlpWeights, path) -> None:
    meta = {
        "d": weights.d,
        "l_pos": weights.l_pos,
        "l_dir": weights.l_dir,
        "pos_activations": [l.activation for l in weights.pos_layers],
        "dir_activations": [l.activation for l in weights.dir_layers],
        "pos_count": len(weights.pos_layers),
        "dir_count": len(weights.dir_layers),
    }
    arrays: dict[str, np.ndarray] = {}
    for tag, layers in (("pos", weights.pos_layers), ("dir", weights.dir_layers)):
        for i, layer in enumerate(layers):
            arrays[f"{tag}_w{i}"] = layer.weight
            arrays[f"{tag}_b{i}"] = layer.bias
    container.write_container(path, KIND, meta, arrays)


def load_weights(path) -> MlpWeights:
    meta, arrays = container.read_container(path, KIND)
    try:
        d, l_pos, l_dir = int(meta["d"]), int(meta["l_pos"]), int(meta["l_dir"])
        pos_acts, dir_acts = meta["pos_activations"], meta["dir_activations"]
        pos_count, dir_count = int(meta["pos_count"]), int(meta["dir_count"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: incomplete weights metadata: {e}") from e

    def gather(tag: str, count: int, acts) -> tuple[Layer, ...]:
        if len(acts) != count:
            raise ParseError(f"{path}: {tag} activation list length mismatch")
        layers = []
        for i in range(count):
            try:
                w, b = arrays[f"{tag}_w{i}"], arrays[f"{tag}_b{i}"]
            except KeyError as e:
                raise ParseError(f"{path}: missing layer array {e}") from e
            layers.append(Layer(w.astype(np.float32, copy=False), b.astype(np.float32, copy=False), acts[i]))
        return tuple(layers)

    return MlpWeights(
        pos_layers=gather("pos", pos_count, pos_acts),
        dir_layers=gather("dir", dir_count, dir_acts),
        d=d,
        l_pos=l_pos,
        l_dir=l_dir,
    )


def _dense_stack(rng: np.random.Generator, widths: list[int], scale: float) -> tuple[Layer, ...]:
    layers = []
    for i in range(len(widths) - 1):
        fan_in, fan_out = widths[i], widths[i + 1]
        w = rng.uniform(-1.0, 1.0, (fan_out, fan_in)).astype(np.float32)
        w *= np.float32(scale / np.sqrt(fan_in))
        b = np.zeros(fan_out, dtype=np.float32)
        act = "relu" if i < len(widths) - 2 else "identity"
        layers.append(Layer(w, b, act))
    return tuple(layers)


def random_weights(
    d: int = 8,
    seed: int = 0,
    pos_hidden: int = POS_HIDDEN,
    pos_depth: int = POS_DEPTH,
    dir_hidden: int = DIR_HIDDEN,
    dir_depth: int = DIR_DEPTH,
    l_pos: int = L_POS_DEFAULT,
    l_dir: int = L_DIR_DEFAULT,
) -> MlpWeights:
    """Seeded random weights, mainly a fixture generator (no training here)."""
    rng = np.random.default_rng(seed)
    pos_widths = [encoding.out_dim(3, l_pos)] + [pos_hidden] * pos_depth + [1 + 3 * d]
    dir_widths = [encoding.out_dim(3, l_dir)] + [dir_hidden] * dir_depth + [d]
    return MlpWeights(
        pos_layers=_dense_stack(rng, pos_widths, 1.6),
        dir_layers=_dense_stack(rng, dir_widths, 1.6),
        d=d,
        l_pos=l_pos,
        l_dir=l_dir,
    )


def synthetic_blob_weights(
    d: int = 8,
    radius: float = 0.42,
    peak_density: float = 600.0,
    z_squash: float = 1.0,
) -> MlpWeights:
    """Hand-constructed full-size networks modeling an octahedral density blob.

    The position net computes s = |x| + |y| + z_squash*|z| through rectified
    pairs, then sigma_raw = peak_density/radius * (radius - s): a linear
    density ramp from the center to the blob boundary. Component triples are
    affine in the point so the cached color varies smoothly. The direction
    net outputs a constant beta through its biases. This gives benchmark-grade
    8x384 / 4x128 networks without any training.
    """
    pos_in = 3  # l_pos = 0, raw passthrough
    gain = peak_density / radius

    def zeros(out_dim: int, in_dim: int) -> np.ndarray:
        return np.zeros((out_dim, in_dim), dtype=np.float32)

    # Layer 1: units 0..5 are +/- each coordinate (rectified pairs).
    w1 = zeros(POS_HIDDEN, pos_in)
    scale = np.array([1.0, 1.0, z_squash], dtype=np.float32)
    for axis in range(3):
        w1[2 * axis, axis] = scale[axis]
        w1[2 * axis + 1, axis] = -scale[axis]
    first = Layer(w1, np.zeros(POS_HIDDEN, dtype=np.float32), "relu")

    # Middle layers: identity passthrough of the six rectified units.
    mid = []
    for _ in range(POS_DEPTH - 1):
        w = zeros(POS_HIDDEN, POS_HIDDEN)
        for u in range(6):
            w[u, u] = 1.0
        mid.append(Layer(w, np.zeros(POS_HIDDEN, dtype=np.float32), "relu"))

    # Output: sigma_raw = gain*(radius - s); components affine in (x, y, z).
    w_out = zeros(1 + 3 * d, POS_HIDDEN)
    b_out = np.zeros(1 + 3 * d, dtype=np.float32)
    w_out[0, 0:6] = -gain
    b_out[0] = gain * radius
    coef = 0.35
    for i in range(d):
        for ch in range(3):
            row = 1 + 3 * i + ch
            axis = (i + ch) % 3
            sign = 1.0 if (i + ch) % 2 == 0 else -1.0
            # x = relu(x) - relu(-x) reconstructed from the unit pairs
            w_out[row, 2 * axis] = sign * coef / scale[axis]
            w_out[row, 2 * axis + 1] = -sign * coef / scale[axis]
            b_out[row] = 0.55 if i == 0 else 0.1 / (i + 1)
    out = Layer(w_out, b_out, "identity")

    dir_widths = [3] + [DIR_HIDDEN] * DIR_DEPTH
    dir_layers = [
        Layer(zeros(dir_widths[i + 1], dir_widths[i]),
              np.zeros(dir_widths[i + 1], dtype=np.float32), "relu")
        for i in range(DIR_DEPTH)
    ]
    beta = np.zeros(d, dtype=np.float32)
    beta[0] = 1.0
    if d > 1:
        beta[1:] = 0.15
    dir_layers.append(Layer(zeros(d, DIR_HIDDEN), beta, "identity"))

    return MlpWeights(
        pos_layers=tuple([first] + mid + [out]),
        dir_layers=tuple(dir_layers),
        d=d,
        l_pos=0,
        l_dir=0,
    )
