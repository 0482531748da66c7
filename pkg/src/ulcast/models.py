"""The four throughput predictor architectures on top of the autodiff tape.

All models map a normalized window [B, W, F] of telemetry features to one
normalized next-second throughput per row. Widths below are this artifact's
documented defaults and are fully overridable through ModelSpec; only the
contracts (window of 5, feature widths, activation families) are fixed:

* ConvLSTM: one convolutional LSTM layer over the feature axis (the input is
  a single channel per timestep), peephole gates, then flatten, FC+ReLU, FC.
* LSTM: stacked standard LSTM, last hidden state through FC+ReLU, FC.
* CNN-LSTM: per-timestep conv1d front-end with ReLU feeding one LSTM layer,
  then FC.
* Transformer: linear embedding plus learned positional embedding, post-norm
  encoder layers with multi-head self-attention and a GELU feed-forward,
  mean-pooled over time, FC.

Gate packing order for fused LSTM/ConvLSTM kernels is input, forget, cell,
output. Forget-gate biases start at 1.0; every other bias starts at zero;
peephole weights start at zero; matrices are Glorot-uniform from the spec
seed, so two builds from the same spec are bit-identical.
"""

import math
from dataclasses import dataclass, field, asdict, replace
from enum import Enum

import numpy as np

from .autodiff import Graph, Tensor, ShapeError
from .tracedata import FeatureSet, Normalizer, clamp_nonnegative

__all__ = ["ModelKind", "ModelSpec", "Model", "TrainedModel", "build"]


class ModelKind(Enum):
    CONV_LSTM = "convlstm"
    LSTM = "lstm"
    CNN_LSTM = "cnn-lstm"
    TRANSFORMER = "transformer"


WINDOW_S = 5  # seconds of history per prediction


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description; hashable, serializable, seed included."""

    kind: ModelKind
    feature_set: FeatureSet
    window: int = WINDOW_S
    seed: int = 0
    # ConvLSTM
    conv_channels: int = 32
    conv_kernel: int = 3
    fc_hidden: int = 64
    # LSTM
    lstm_hidden: int = 128
    lstm_layers: int = 2
    # CNN-LSTM
    cnn_channels: int = 16
    # Transformer
    d_model: int = 256
    ff_dim: int = 512
    heads: int = 4
    encoder_layers: int = 2

    def __post_init__(self):
        if self.window != WINDOW_S:
            raise ValueError(f"window is fixed at {WINDOW_S} s, got {self.window}")
        if self.conv_kernel % 2 != 1:
            raise ValueError(f"conv kernel must be odd, got {self.conv_kernel}")
        if self.kind is ModelKind.TRANSFORMER and self.d_model % self.heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by {self.heads} heads")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["feature_set"] = self.feature_set.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["kind"] = ModelKind(d["kind"])
        d["feature_set"] = FeatureSet(d["feature_set"])
        return cls(**d)


class _Init:
    """Deterministic Glorot-uniform parameter factory."""

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def glorot(self, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return self.rng.uniform(-limit, limit, size=shape)

    def dense(self, n_in: int, n_out: int) -> np.ndarray:
        return self.glorot((n_in, n_out), n_in, n_out)

    def conv(self, c_out: int, c_in: int, k: int) -> np.ndarray:
        return self.glorot((c_out, c_in, k), c_in * k, c_out * k)


class Model:
    """Parameters plus a pure forward pass [B, W, F] -> [B]."""

    fc_activation: str = "relu"

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.params: dict[str, Tensor] = {}

    def _param(self, name: str, array: np.ndarray) -> Tensor:
        t = Tensor(array, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def forward(self, g: Graph, x: Tensor) -> Tensor:
        raise NotImplementedError

    def _check_input(self, x: Tensor) -> tuple[int, int, int]:
        expected_f = self.spec.feature_set.width
        if x.data.ndim != 3 or x.shape[1] != self.spec.window or x.shape[2] != expected_f:
            raise ShapeError(
                f"{self.spec.kind.value}: input {x.shape} must be "
                f"[B, {self.spec.window}, {expected_f}]")
        return x.shape


def _lstm_layer_params(model: Model, init: _Init, prefix: str, n_in: int, hidden: int) -> None:
    model._param(f"{prefix}.w", init.dense(n_in, 4 * hidden))
    model._param(f"{prefix}.u", init.dense(hidden, 4 * hidden))
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # forget gate open at init
    model._param(f"{prefix}.b", b)


def _lstm_layer_step(g: Graph, model: Model, prefix: str, x_t: Tensor,
                     h: Tensor, c: Tensor, hidden: int) -> tuple[Tensor, Tensor]:
    p = model.params
    z = g.add(g.matmul_bias(x_t, p[f"{prefix}.w"], p[f"{prefix}.b"]),
              g.matmul(h, p[f"{prefix}.u"]))
    i = g.sigmoid(g.slice_axis(z, 1, 0, hidden))
    f = g.sigmoid(g.slice_axis(z, 1, hidden, 2 * hidden))
    gate = g.tanh(g.slice_axis(z, 1, 2 * hidden, 3 * hidden))
    o = g.sigmoid(g.slice_axis(z, 1, 3 * hidden, 4 * hidden))
    c_new = g.add(g.mul(f, c), g.mul(i, gate))
    h_new = g.mul(o, g.tanh(c_new))
    return h_new, c_new


class ConvLstmModel(Model):
    """Convolutional LSTM over the feature axis with peephole gates.

    Per timestep, with * a same-length conv1d and o elementwise:
        i = sigmoid(Wxi * x + Whi * h + Wci o c + bi)
        f = sigmoid(Wxf * x + Whf * h + Wcf o c + bf)
        c' = f o c + i o tanh(Wxc * x + Whc * h + bc)
        o = sigmoid(Wxo * x + Who * h + Wco o c' + bo)
        h' = o o tanh(c')
    The input-to-state and state-to-state kernels are fused along the output
    channel axis in gate order i, f, c, o.
    """

    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        init = _Init(spec.seed)
        ch, k, f = spec.conv_channels, spec.conv_kernel, spec.feature_set.width
        self._param("cell.wx", init.conv(4 * ch, 1, k))
        self._param("cell.wh", init.conv(4 * ch, ch, k))
        b = np.zeros((4 * ch, 1))
        b[ch:2 * ch] = 1.0
        self._param("cell.b", b)
        self._param("cell.wci", np.zeros((ch, f)))
        self._param("cell.wcf", np.zeros((ch, f)))
        self._param("cell.wco", np.zeros((ch, f)))
        self._param("fc1.w", init.dense(ch * f, spec.fc_hidden))
        self._param("fc1.b", np.zeros(spec.fc_hidden))
        self._param("fc2.w", init.dense(spec.fc_hidden, 1))
        self._param("fc2.b", np.zeros(1))

    def cell_step(self, g: Graph, x_t: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        spec = self.spec
        ch = spec.conv_channels
        pad = (spec.conv_kernel - 1) // 2
        p = self.params
        z = g.add(g.add(g.conv1d(x_t, p["cell.wx"], pad),
                        g.conv1d(h, p["cell.wh"], pad)), p["cell.b"])
        zi = g.slice_axis(z, 1, 0, ch)
        zf = g.slice_axis(z, 1, ch, 2 * ch)
        zc = g.slice_axis(z, 1, 2 * ch, 3 * ch)
        zo = g.slice_axis(z, 1, 3 * ch, 4 * ch)
        i = g.sigmoid(g.add(zi, g.mul(p["cell.wci"], c)))
        f = g.sigmoid(g.add(zf, g.mul(p["cell.wcf"], c)))
        c_new = g.add(g.mul(f, c), g.mul(i, g.tanh(zc)))
        o = g.sigmoid(g.add(zo, g.mul(p["cell.wco"], c_new)))
        h_new = g.mul(o, g.tanh(c_new))
        return h_new, c_new

    def forward(self, g: Graph, x: Tensor) -> Tensor:
        bsz, window, feat = self._check_input(x)
        ch = self.spec.conv_channels
        h = Tensor.zeros((bsz, ch, feat))
        c = Tensor.zeros((bsz, ch, feat))
        for t in range(window):
            x_t = g.slice_axis(x, 1, t, t + 1)  # [B, 1, F]: one input channel
            h, c = self.cell_step(g, x_t, h, c)
        flat = g.reshape(h, (bsz, ch * feat))
        hidden = g.relu(g.matmul_bias(flat, self.params["fc1.w"], self.params["fc1.b"]))
        out = g.matmul_bias(hidden, self.params["fc2.w"], self.params["fc2.b"])
        return g.reshape(out, (bsz,))


class LstmModel(Model):
    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        init = _Init(spec.seed)
        f, hid = spec.feature_set.width, spec.lstm_hidden
        for layer in range(spec.lstm_layers):
            _lstm_layer_params(self, init, f"lstm{layer}", f if layer == 0 else hid, hid)
        self._param("fc1.w", init.dense(hid, spec.fc_hidden))
        self._param("fc1.b", np.zeros(spec.fc_hidden))
        self._param("fc2.w", init.dense(spec.fc_hidden, 1))
        self._param("fc2.b", np.zeros(1))

    def forward(self, g: Graph, x: Tensor) -> Tensor:
        bsz, window, feat = self._check_input(x)
        hid = self.spec.lstm_hidden
        states = [(Tensor.zeros((bsz, hid)), Tensor.zeros((bsz, hid)))
                  for _ in range(self.spec.lstm_layers)]
        for t in range(window):
            inp = g.reshape(g.slice_axis(x, 1, t, t + 1), (bsz, feat))
            for layer in range(self.spec.lstm_layers):
                h, c = _lstm_layer_step(g, self, f"lstm{layer}", inp, *states[layer], hid)
                states[layer] = (h, c)
                inp = h
        hidden = g.relu(g.matmul_bias(states[-1][0], self.params["fc1.w"], self.params["fc1.b"]))
        out = g.matmul_bias(hidden, self.params["fc2.w"], self.params["fc2.b"])
        return g.reshape(out, (bsz,))


class CnnLstmModel(Model):
    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        init = _Init(spec.seed)
        f, ch, hid = spec.feature_set.width, spec.cnn_channels, spec.lstm_hidden
        self._param("conv.k", init.conv(ch, 1, spec.conv_kernel))
        self._param("conv.b", np.zeros((ch, 1)))
        _lstm_layer_params(self, init, "lstm0", ch * f, hid)
        self._param("fc.w", init.dense(hid, 1))
        self._param("fc.b", np.zeros(1))

    def forward(self, g: Graph, x: Tensor) -> Tensor:
        bsz, window, feat = self._check_input(x)
        spec = self.spec
        pad = (spec.conv_kernel - 1) // 2
        hid = spec.lstm_hidden
        h, c = Tensor.zeros((bsz, hid)), Tensor.zeros((bsz, hid))
        for t in range(window):
            x_t = g.slice_axis(x, 1, t, t + 1)  # [B, 1, F]
            conv = g.relu(g.add(g.conv1d(x_t, self.params["conv.k"], pad), self.params["conv.b"]))
            inp = g.reshape(conv, (bsz, spec.cnn_channels * feat))
            h, c = _lstm_layer_step(g, self, "lstm0", inp, h, c, hid)
        out = g.matmul_bias(h, self.params["fc.w"], self.params["fc.b"])
        return g.reshape(out, (bsz,))


class TransformerModel(Model):
    fc_activation = "gelu"

    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        init = _Init(spec.seed)
        f, d = spec.feature_set.width, spec.d_model
        self._param("embed.w", init.dense(f, d))
        self._param("embed.b", np.zeros(d))
        self._param("pos", init.glorot((spec.window, d), spec.window, d))
        for layer in range(spec.encoder_layers):
            for name in ("wq", "wk", "wv", "wo"):
                self._param(f"enc{layer}.{name}", init.dense(d, d))
                self._param(f"enc{layer}.{name}b", np.zeros(d))
            self._param(f"enc{layer}.ln1g", np.ones(d))
            self._param(f"enc{layer}.ln1b", np.zeros(d))
            self._param(f"enc{layer}.ff1w", init.dense(d, spec.ff_dim))
            self._param(f"enc{layer}.ff1b", np.zeros(spec.ff_dim))
            self._param(f"enc{layer}.ff2w", init.dense(spec.ff_dim, d))
            self._param(f"enc{layer}.ff2b", np.zeros(d))
            self._param(f"enc{layer}.ln2g", np.ones(d))
            self._param(f"enc{layer}.ln2b", np.zeros(d))
        self._param("fc.w", init.dense(d, 1))
        self._param("fc.b", np.zeros(1))

    def _project(self, g: Graph, x: Tensor, w: Tensor, b: Tensor,
                 bsz: int, t: int, d: int) -> Tensor:
        flat = g.reshape(x, (bsz * t, d))
        return g.reshape(g.matmul_bias(flat, w, b), (bsz, t, d))

    def _heads(self, g: Graph, x: Tensor, bsz: int, t: int) -> Tensor:
        heads, d = self.spec.heads, self.spec.d_model
        return g.transpose(g.reshape(x, (bsz, t, heads, d // heads)), (0, 2, 1, 3))

    def forward(self, g: Graph, x: Tensor) -> Tensor:
        bsz, window, feat = self._check_input(x)
        spec, p = self.spec, self.params
        d = spec.d_model
        flat = g.reshape(x, (bsz * window, feat))
        seq = g.reshape(g.matmul_bias(flat, p["embed.w"], p["embed.b"]), (bsz, window, d))
        seq = g.add(seq, p["pos"])
        for layer in range(spec.encoder_layers):
            pre = f"enc{layer}"
            q = self._heads(g, self._project(g, seq, p[f"{pre}.wq"], p[f"{pre}.wqb"], bsz, window, d), bsz, window)
            k = self._heads(g, self._project(g, seq, p[f"{pre}.wk"], p[f"{pre}.wkb"], bsz, window, d), bsz, window)
            v = self._heads(g, self._project(g, seq, p[f"{pre}.wv"], p[f"{pre}.wvb"], bsz, window, d), bsz, window)
            attn = g.softmax_attention(q, k, v)
            merged = g.reshape(g.transpose(attn, (0, 2, 1, 3)), (bsz * window, d))
            proj = g.reshape(g.matmul_bias(merged, p[f"{pre}.wo"], p[f"{pre}.wob"]), (bsz, window, d))
            seq = g.layer_norm(g.add(seq, proj), p[f"{pre}.ln1g"], p[f"{pre}.ln1b"])
            ff_in = g.reshape(seq, (bsz * window, d))
            ff = g.gelu(g.matmul_bias(ff_in, p[f"{pre}.ff1w"], p[f"{pre}.ff1b"]))
            ff = g.matmul_bias(ff, p[f"{pre}.ff2w"], p[f"{pre}.ff2b"])
            seq = g.layer_norm(g.add(seq, g.reshape(ff, (bsz, window, d))),
                               p[f"{pre}.ln2g"], p[f"{pre}.ln2b"])
        pooled = g.mean_axis(seq, 1)
        out = g.matmul_bias(pooled, p["fc.w"], p["fc.b"])
        return g.reshape(out, (bsz,))


_MODEL_CLASSES = {
    ModelKind.CONV_LSTM: ConvLstmModel,
    ModelKind.LSTM: LstmModel,
    ModelKind.CNN_LSTM: CnnLstmModel,
    ModelKind.TRANSFORMER: TransformerModel,
}


def build(spec: ModelSpec) -> Model:
    """Instantiate a model with seeded Glorot-uniform parameters."""
    return _MODEL_CLASSES[spec.kind](spec)


@dataclass
class TrainedModel:
    """A model with frozen parameters, its normalizer, and training history."""

    model: Model
    normalizer: Normalizer
    history: list[float] = field(default_factory=list)
    train_config: dict = field(default_factory=dict)

    @property
    def spec(self) -> ModelSpec:
        return self.model.spec

    def freeze(self) -> None:
        for p in self.model.params.values():
            p.data.flags.writeable = False

    def predict_batch(self, windows: np.ndarray) -> np.ndarray:
        """Normalized windows [N, W, F] -> clamped throughput predictions, Mbps."""
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim == 2:
            windows = windows[None, :, :]
        g = Graph()
        pred = self.model.forward(g, Tensor(windows))
        return clamp_nonnegative(self.normalizer.denormalize_target(pred.data))

    def predict(self, window: np.ndarray) -> float:
        """One normalized [W, F] window -> throughput forecast, Mbps."""
        return float(self.predict_batch(np.asarray(window))[0])
