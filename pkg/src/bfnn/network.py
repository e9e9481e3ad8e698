"""The beamforming network: input packing, layer stack, phase output.

Architecture for n_t antennas: a (2*n_t+1)-wide real input (channel estimate
re/im parts plus an SNR feature), three dense layers of 256, 128 and n_t
units, ReLU on the first two, no activation on the last, each dense preceded
by batch normalization. The final parameterless stage maps the n_t real
outputs, read as phases, onto the unit circle, so the constant-modulus
constraint holds by construction.

Dense weights start as a phase-detector bank on the first layer (each input
re/im pair feeds a set of units whose weights pick off that element's
component at evenly rotated angles), fan-sum uniform on the middle layer,
and zero on the output layer so training starts from the all-ones beam. The
detector bank mirrors how the optimal phases depend on the inputs and cuts
the training steps needed to reach a given rate severalfold versus uniform
init.
"""

from __future__ import annotations

import io
import json

import numpy as np

from .channel import rng_from_seed
from .container import (
    CorruptHeaderError,
    DimensionMismatchError,
    TruncatedPayloadError,
    MAGIC as _DATASET_MAGIC,
)
from .layers import BatchNorm, Dense, ReLU

MODEL_MAGIC = b"BFNNMD1\n"
MODEL_VERSION = 1
HIDDEN_SIZES = (256, 128)


def encode_snr(gamma: float) -> float:
    """SNR input feature: dB value scaled by 1/10 (log10 of the linear SNR).

    Keeps the feature in roughly [-2, 2] over the -20..20 dB operating range.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    if np.any(gamma <= 0):
        raise ValueError("gamma must be positive")
    out = np.log10(gamma)
    return float(out) if out.ndim == 0 else out


def pack_input(h_est: np.ndarray, gamma_est: float, n_t: int | None = None) -> np.ndarray:
    """Real input vector [Re(h_est); Im(h_est); encode_snr(gamma_est)]."""
    h_est = np.asarray(h_est)
    if n_t is not None and h_est.shape != (n_t,):
        raise ValueError(f"h_est length {h_est.shape} does not match n_t={n_t}")
    return np.concatenate([h_est.real, h_est.imag, [encode_snr(gamma_est)]])


def pack_inputs(H_est: np.ndarray, gammas) -> np.ndarray:
    """Batch version of pack_input; rows are samples."""
    H_est = np.atleast_2d(H_est)
    g = np.broadcast_to(np.asarray(gammas, dtype=np.float64), (H_est.shape[0],))
    return np.concatenate([H_est.real, H_est.imag, encode_snr(g)[:, None]], axis=1)


def unpack_input(x: np.ndarray) -> tuple[np.ndarray, float]:
    n_t = (len(x) - 1) // 2
    return x[:n_t] + 1j * x[n_t : 2 * n_t], 10.0 ** x[-1]


def lambda_forward(theta: np.ndarray) -> np.ndarray:
    """Unit-modulus beamformer coefficients cos(theta) + j sin(theta)."""
    theta = np.asarray(theta)
    return np.cos(theta) + 1j * np.sin(theta)


class BfnnModel:
    """Ordered layer stack with metadata; immutable once training finishes."""

    def __init__(self, layers: list, n_t: int, meta: dict | None = None):
        self.layers = layers
        self.n_t = n_t
        self.meta = dict(meta or {})

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Phase outputs for a batch of packed inputs.

        Training mode normalizes with batch statistics and updates the
        running ones; inference mode uses the running statistics only.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, d_theta: np.ndarray) -> None:
        d = d_theta
        for layer in reversed(self.layers):
            d = layer.backward(d)

    def infer_beams(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(theta, v_rf) rows for a batch of packed inputs, inference mode."""
        theta = self.forward(x, train=False)
        return theta, lambda_forward(theta)

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params():
                out.append((f"layer{i}.{name}", arr))
        return out

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads()]

    def set_parameters(self, values: list[np.ndarray]) -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise ValueError("parameter count mismatch")
        for (_, arr), val in zip(params, values):
            arr[...] = val

    def bn_stats(self) -> list[np.ndarray]:
        return [
            arr
            for layer in self.layers
            if isinstance(layer, BatchNorm)
            for _, arr in layer.stats()
        ]

    def set_bn_stats(self, values: list[np.ndarray]) -> None:
        stats = self.bn_stats()
        if len(values) != len(stats):
            raise ValueError("running-stat count mismatch")
        for arr, val in zip(stats, values):
            arr[...] = val

    def snapshot(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        return (
            [arr.copy() for _, arr in self.parameters()],
            [arr.copy() for arr in self.bn_stats()],
        )

    def restore(self, snap) -> None:
        self.set_parameters(snap[0])
        self.set_bn_stats(snap[1])


def _detector_bank(n_in: int, n_out: int, n_t: int, rng: np.random.Generator) -> np.ndarray:
    """First-layer init: a bank of phase detectors per channel element.

    Each element's (re, im) input pair feeds `phases` units whose weights
    project onto evenly rotated directions, so unit p*i + r starts out
    reading the element-i component at angle pi/p + 2*pi*r/p. The bank
    fills the layer when possible; leftover columns keep the uniform init.
    """
    bound = np.sqrt(6.0 / (n_in + n_out))
    W = rng.uniform(-bound, bound, (n_in, n_out))
    phases = max(4, n_out // n_t)
    for i in range(n_t):
        for r in range(phases):
            col = phases * i + r
            if col >= n_out:
                return W
            psi = np.pi / phases + 2 * np.pi * r / phases
            W[:, col] = 0.0
            W[i, col] = np.cos(psi)
            W[n_t + i, col] = np.sin(psi)
    return W


def build_model(n_t: int, seed: int = 0, hidden=HIDDEN_SIZES, meta: dict | None = None) -> BfnnModel:
    """Fresh model with the documented initialization scheme."""
    if n_t < 1:
        raise ValueError("n_t must be >= 1")
    rng = rng_from_seed(seed)
    dims = [2 * n_t + 1, *hidden, n_t]
    layers: list = []
    for i in range(len(dims) - 1):
        layers.append(BatchNorm(dims[i]))
        # the first dense is bias-free; the normalization directly ahead of
        # it already supplies a trained offset
        dense = Dense(dims[i], dims[i + 1], use_bias=(i > 0))
        dense.init_uniform(rng)
        if i == 0:
            dense.W = _detector_bank(dims[0], dims[1], n_t, rng)
        if i == len(dims) - 2:
            dense.W[...] = 0.0  # start at theta = 0, the all-ones beam
        layers.append(dense)
        if i < len(dims) - 2:
            layers.append(ReLU())
    full_meta = {"init_seed": int(seed), "hidden": list(hidden)}
    full_meta.update(meta or {})
    return BfnnModel(layers=layers, n_t=n_t, meta=full_meta)


def count_flops(model: BfnnModel) -> int:
    """Dense-layer floating point operations, (2*n_in - 1)*n_out summed.

    Normalization and the phase-output stage are excluded from the count.
    """
    return sum(
        (2 * l.n_in - 1) * l.n_out
        for l in model.layers
        if isinstance(l, Dense)
    )


def count_params(model: BfnnModel) -> list[tuple[str, int]]:
    """Per-dense-layer trainable parameter counts (weights plus any bias)."""
    out = []
    idx = 1
    for l in model.layers:
        if isinstance(l, Dense):
            out.append((f"dense{idx}", l.n_params()))
            idx += 1
    return out


def _layer_blobs(model: BfnnModel) -> list[np.ndarray]:
    blobs = []
    for layer in model.layers:
        for _, arr in layer.params():
            blobs.append(arr)
        if isinstance(layer, BatchNorm):
            for _, arr in layer.stats():
                blobs.append(arr)
    return blobs


def serialize_model(model: BfnnModel) -> bytes:
    header = {
        "version": MODEL_VERSION,
        "n_t": model.n_t,
        "layers": [l.spec() for l in model.layers],
        "meta": model.meta,
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(len(raw).to_bytes(4, "big"))
    buf.write(raw)
    for blob in _layer_blobs(model):
        buf.write(np.ascontiguousarray(blob, dtype="<f8").tobytes())
    return buf.getvalue()


def save_model(model: BfnnModel, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize_model(model))


def _layer_from_spec(spec: dict):
    kind = spec.get("kind")
    if kind == "dense":
        return Dense(spec["n_in"], spec["n_out"], use_bias=spec.get("use_bias", True))
    if kind == "batchnorm":
        return BatchNorm(spec["n_features"], spec["momentum"], spec["eps"])
    if kind == "relu":
        return ReLU()
    raise DimensionMismatchError(f"unknown layer kind {kind!r}")


def load_model(path) -> BfnnModel:
    with open(path, "rb") as f:
        magic = f.read(len(MODEL_MAGIC))
        if magic != MODEL_MAGIC:
            hint = " (this is a dataset file)" if magic == _DATASET_MAGIC else ""
            raise CorruptHeaderError(f"bad model magic {magic!r}{hint}")
        hlen_raw = f.read(4)
        if len(hlen_raw) != 4:
            raise TruncatedPayloadError("unexpected end of file in header length")
        hlen = int.from_bytes(hlen_raw, "big")
        raw = f.read(hlen)
        if len(raw) != hlen:
            raise TruncatedPayloadError("unexpected end of file in header")
        try:
            header = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CorruptHeaderError(f"undecodable model header: {e}") from e
        if header.get("version") != MODEL_VERSION:
            raise DimensionMismatchError(
                f"unsupported model version {header.get('version')}"
            )
        layers = [_layer_from_spec(s) for s in header["layers"]]
        model = BfnnModel(layers=layers, n_t=header["n_t"], meta=header.get("meta", {}))
        for blob in _layer_blobs(model):
            want = blob.size * 8
            data = f.read(want)
            if len(data) != want:
                raise TruncatedPayloadError("model parameter payload truncated")
            blob[...] = np.frombuffer(data, "<f8").reshape(blob.shape)
        if f.read(1):
            raise DimensionMismatchError("trailing bytes after model payload")
    return model
