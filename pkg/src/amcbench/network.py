"""Model assembly: shared-weight CNN feature extractor per window, LSTM over
the window sequence, flatten-or-attention temporal summary, dense classifier.

Checkpoints are flat binary (magic "AMCP"): a geometry header sufficient to
rebuild every parameter shape, trainer metadata, then named float64 blobs in
declared order, all little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import LstmCellParams, Tensor
from .errors import ConfigurationError, ShapeError
from .version import CHECKPOINT_FORMAT_VERSION

LEAKY_SLOPE = 0.01

MODE_FLATTEN = "flatten"
MODE_ATTENTION = "attention"


@dataclass(frozen=True)
class ConvLayerSpec:
    out_channels: int
    kernel: int
    stride: int
    pad: int
    lrn: bool
    pool: bool  # 3/2 overlapping max pool after the activation


DEFAULT_CONV_STACK = (
    ConvLayerSpec(96, 11, 4, 2, lrn=True, pool=True),
    ConvLayerSpec(256, 5, 1, 2, lrn=True, pool=True),
    ConvLayerSpec(384, 3, 1, 1, lrn=False, pool=False),
    ConvLayerSpec(384, 3, 1, 1, lrn=False, pool=False),
    ConvLayerSpec(256, 3, 1, 1, lrn=False, pool=False),
)

POOL_WINDOW = 3
POOL_STRIDE = 2


@dataclass(frozen=True)
class ArchitectureConfig:
    input_side: int = 224
    conv_stack: tuple = DEFAULT_CONV_STACK
    lstm_hidden: int = 256
    windows: int = 8
    head_l1: int = 512
    head_l2: int = 256
    classes: int = 9
    drop_factor: float = 0.6
    temporal_mode: str = MODE_FLATTEN

    def validate(self):
        if self.temporal_mode not in (MODE_FLATTEN, MODE_ATTENTION):
            raise ConfigurationError(f"unknown temporal_mode {self.temporal_mode!r}")
        if not 0.0 <= self.drop_factor < 1.0:
            raise ConfigurationError(f"drop_factor must be in [0, 1), got {self.drop_factor}")
        for name in ("input_side", "lstm_hidden", "windows", "head_l1", "head_l2", "classes"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        shape_trace(self)  # raises if the conv stack collapses below a kernel/pool window

    @property
    def feature_dim(self) -> int:
        return self.conv_stack[-1].out_channels

    @property
    def pre_head_width(self) -> int:
        if self.temporal_mode == MODE_ATTENTION:
            return self.lstm_hidden
        return self.windows * self.lstm_hidden


def shape_trace(config: ArchitectureConfig) -> list:
    """Layer-by-layer (name, shape) table via the floor arithmetic of conv2d."""
    side = config.input_side
    channels = 3
    trace = [("input", (channels, side, side))]
    for i, layer in enumerate(config.conv_stack, start=1):
        out = ad.conv_out_len(side, layer.pad, layer.kernel, layer.stride)
        if out < 1:
            raise ConfigurationError(
                f"conv{i} kernel {layer.kernel} (stride {layer.stride}, pad {layer.pad})"
                f" collapses spatial dim {side}")
        side = out
        channels = layer.out_channels
        tag = f"conv{i} {layer.out_channels}@{layer.kernel}x{layer.kernel}/s{layer.stride}/p{layer.pad}+relu"
        if layer.lrn:
            tag += "+lrn"
        trace.append((tag, (channels, side, side)))
        if layer.pool:
            if side < POOL_WINDOW:
                raise ConfigurationError(f"pool after conv{i}: window {POOL_WINDOW} exceeds spatial dim {side}")
            side = ad.conv_out_len(side, 0, POOL_WINDOW, POOL_STRIDE)
            trace.append((f"pool{i} {POOL_WINDOW}/{POOL_STRIDE}", (channels, side, side)))
    trace.append(("gap", (channels,)))
    trace.append((f"lstm x{config.windows}", (config.windows, config.lstm_hidden)))
    if config.temporal_mode == MODE_ATTENTION:
        trace.append(("attention", (config.lstm_hidden,)))
    else:
        trace.append(("flatten", (config.windows * config.lstm_hidden,)))
    trace.append(("dense1+leaky_relu", (config.head_l1,)))
    trace.append(("dense2+leaky_relu", (config.head_l2,)))
    trace.append(("dense3+softmax", (config.classes,)))
    return trace


def describe(config: ArchitectureConfig) -> str:
    rows = [(name, "x".join(str(d) for d in shape)) for name, shape in shape_trace(config)]
    width = max(len(name) for name, _ in rows) + 2
    lines = [f"{'layer':<{width}}output"]
    lines += [f"{name:<{width}}{shape}" for name, shape in rows]
    return "\n".join(lines)


def _he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def _glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Model:
    """Parameter container plus forward passes; one instance per checkpoint."""

    def __init__(self, config: ArchitectureConfig, seed: int = 0):
        config.validate()
        self.config = config
        self.init_seed = int(seed)
        rng = np.random.default_rng(seed)
        params = {}

        in_ch = 3
        for i, layer in enumerate(config.conv_stack, start=1):
            fan_in = in_ch * layer.kernel * layer.kernel
            shape = (layer.out_channels, in_ch, layer.kernel, layer.kernel)
            params[f"conv{i}.w"] = Tensor(_he_uniform(rng, shape, fan_in), name=f"conv{i}.w")
            params[f"conv{i}.b"] = Tensor(np.zeros(layer.out_channels), name=f"conv{i}.b")
            in_ch = layer.out_channels

        h, d = config.lstm_hidden, config.feature_dim
        for gate in ("f", "i", "c", "o"):
            w = _glorot_uniform(rng, (h, h + d), h + d, h)
            b = np.ones(h) if gate == "f" else np.zeros(h)  # forget-gate bias +1
            params[f"lstm.W_{gate}"] = Tensor(w, name=f"lstm.W_{gate}")
            params[f"lstm.b_{gate}"] = Tensor(b, name=f"lstm.b_{gate}")

        if config.temporal_mode == MODE_ATTENTION:
            params["attn.W"] = Tensor(_glorot_uniform(rng, (h, h), h, h), name="attn.W")
            params["attn.b"] = Tensor(np.zeros(h), name="attn.b")
            params["attn.v"] = Tensor(_glorot_uniform(rng, (h,), h, 1), name="attn.v")

        widths = [config.pre_head_width, config.head_l1, config.head_l2, config.classes]
        for i in range(1, 4):
            fan_in, fan_out = widths[i - 1], widths[i]
            params[f"head{i}.w"] = Tensor(_he_uniform(rng, (fan_out, fan_in), fan_in), name=f"head{i}.w")
            params[f"head{i}.b"] = Tensor(np.zeros(fan_out), name=f"head{i}.b")

        self.params = params

    # -- forward pieces -----------------------------------------------------

    def lstm_params(self) -> LstmCellParams:
        p = self.params
        return LstmCellParams(p["lstm.W_f"], p["lstm.W_i"], p["lstm.W_c"], p["lstm.W_o"],
                              p["lstm.b_f"], p["lstm.b_i"], p["lstm.b_c"], p["lstm.b_o"])

    def cnn_forward(self, x) -> Tensor:
        """(3,S,S) -> (feature_dim,) or (N,3,S,S) -> (N, feature_dim)."""
        out = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        single = out.ndim == 3
        side = out.shape[-1]
        if side != self.config.input_side or out.shape[-3] != 3:
            raise ShapeError(f"cnn input {out.shape} does not match configured side {self.config.input_side}")
        for i, layer in enumerate(self.config.conv_stack, start=1):
            out = ad.conv2d(out, self.params[f"conv{i}.w"], stride=layer.stride, pad=layer.pad)
            bias = self.params[f"conv{i}.b"]
            bshape = (-1, 1, 1) if single else (1, -1, 1, 1)
            out = ad.add(out, ad.reshape(bias, bshape))
            out = ad.relu(out)
            if layer.lrn:
                out = ad.lrn(out)
            if layer.pool:
                out = ad.max_pool(out, POOL_WINDOW, POOL_STRIDE)
        return ad.global_avg_pool(out)

    def temporal_forward(self, feats, training: bool = False, drop_rng=None,
                         return_attention: bool = False):
        """(T, D) or (B, T, D) window features -> pre-head vector(s).

        Runs the LSTM from zero state over T steps; flatten mode concatenates
        h_1..h_T, attention mode returns their softmax-weighted average.
        """
        cfg = self.config
        if not isinstance(feats, Tensor):
            feats = Tensor(np.asarray(feats, dtype=np.float64))
        single = feats.ndim == 2
        t_steps = feats.shape[-2]
        if t_steps != cfg.windows or feats.shape[-1] != cfg.feature_dim:
            raise ShapeError(f"temporal input {feats.shape} != (windows={cfg.windows}, D={cfg.feature_dim})")
        batch = 1 if single else feats.shape[0]
        flat = ad.reshape(feats, (batch * t_steps, cfg.feature_dim))

        params = self.lstm_params()
        h = Tensor(np.zeros((batch, cfg.lstm_hidden)))
        c = Tensor(np.zeros((batch, cfg.lstm_hidden)))
        hs = []
        for t in range(t_steps):
            x_t = ad.gather_rows(flat, np.arange(batch) * t_steps + t)
            h, c = ad.lstm_cell(x_t, h, c, params)
            hs.append(h)

        attention = None
        if cfg.temporal_mode == MODE_ATTENTION:
            stacked = ad.concat([ad.reshape(hh, (batch, 1, cfg.lstm_hidden)) for hh in hs], axis=1)
            scores = ad.dense(ad.reshape(stacked, (batch * t_steps, cfg.lstm_hidden)),
                              self.params["attn.W"], self.params["attn.b"])
            scores = ad.matmul(ad.tanh(scores), ad.reshape(self.params["attn.v"], (-1, 1)))
            weights = ad.softmax(ad.reshape(scores, (batch, t_steps)), axis=-1)
            attention = weights
            out = ad.tsum(ad.mul(ad.reshape(weights, (batch, t_steps, 1)), stacked), axis=1)
        else:
            out = ad.concat(hs, axis=1)

        if training and cfg.drop_factor > 0.0:
            out = ad.dropout(out, cfg.drop_factor, True, drop_rng)
        if single:
            out = ad.reshape(out, (-1,))
            if attention is not None:
                attention = ad.reshape(attention, (-1,))
        if return_attention:
            return out, attention
        return out

    def classify(self, pre_head, training: bool = False, drop_rng=None):
        """Pre-head vector(s) -> (logits, probabilities)."""
        x = pre_head if isinstance(pre_head, Tensor) else Tensor(np.asarray(pre_head, dtype=np.float64))
        drop = self.config.drop_factor
        for i in (1, 2):
            x = ad.leaky_relu(ad.dense(x, self.params[f"head{i}.w"], self.params[f"head{i}.b"]), LEAKY_SLOPE)
            if training and drop > 0.0:
                x = ad.dropout(x, drop, True, drop_rng)
        logits = ad.dense(x, self.params["head3.w"], self.params["head3.b"])
        return logits, ad.softmax(logits, axis=-1)

    def forward(self, frame_input, training: bool = False, drop_rng=None) -> Tensor:
        """(T,3,S,S) -> (classes,) probabilities, or (B,T,3,S,S) -> (B, classes)."""
        arr = frame_input.data if isinstance(frame_input, Tensor) else np.asarray(frame_input, dtype=np.float64)
        single = arr.ndim == 4
        if single:
            arr = arr[None]
        b, t, ch, s1, s2 = arr.shape
        feats = self.cnn_forward(arr.reshape(b * t, ch, s1, s2))
        feats = ad.reshape(feats, (b, t, self.config.feature_dim))
        pre = self.temporal_forward(feats, training=training, drop_rng=drop_rng)
        _, probs = self.classify(pre, training=training, drop_rng=drop_rng)
        if single:
            probs = ad.reshape(probs, (-1,))
        return probs

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def state_copy(self) -> dict:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state(self, state: dict):
        for name, p in self.params.items():
            if name not in state:
                raise ConfigurationError(f"checkpoint state missing parameter {name!r}")
            if state[name].shape != p.data.shape:
                raise ShapeError(f"parameter {name!r}: stored {state[name].shape} != expected {p.data.shape}")
            p.data = state[name].copy()


# ---------------------------------------------------------------------------
# checkpoint serialization (magic "AMCP")


@dataclass
class TrainMeta:
    epochs_run: int = 0
    seed: int = 0
    best_val_loss: float = np.inf


@dataclass
class ModelCheckpoint:
    config: ArchitectureConfig
    state: dict
    meta: TrainMeta = field(default_factory=TrainMeta)
    # Modulation-class id emitted by each head output, in head order.
    class_ids: tuple = ()

    def __post_init__(self):
        if not self.class_ids:
            self.class_ids = tuple(range(self.config.classes))
        if len(self.class_ids) != self.config.classes:
            raise ConfigurationError(
                f"class_ids {self.class_ids} does not match head width {self.config.classes}")

    @classmethod
    def from_model(cls, model: Model, meta: TrainMeta | None = None, class_ids=()):
        return cls(config=model.config, state=model.state_copy(), meta=meta or TrainMeta(),
                   class_ids=class_ids)

    def build_model(self) -> Model:
        model = Model(self.config, seed=0)
        model.load_state(self.state)
        return model


MAGIC = b"AMCP"

_MODES = {MODE_FLATTEN: 0, MODE_ATTENTION: 1}
_MODES_BACK = {v: k for k, v in _MODES.items()}


def save_checkpoint(path, checkpoint: ModelCheckpoint):
    cfg = checkpoint.config
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sH", MAGIC, CHECKPOINT_FORMAT_VERSION))
        fh.write(struct.pack("<HHHHHHdB", cfg.input_side, cfg.lstm_hidden, cfg.windows,
                             cfg.head_l1, cfg.head_l2, cfg.classes, cfg.drop_factor,
                             _MODES[cfg.temporal_mode]))
        fh.write(struct.pack("<B", len(cfg.conv_stack)))
        for layer in cfg.conv_stack:
            fh.write(struct.pack("<HBBBBB", layer.out_channels, layer.kernel, layer.stride,
                                 layer.pad, int(layer.lrn), int(layer.pool)))
        fh.write(struct.pack(f"<{cfg.classes}B", *checkpoint.class_ids))
        meta = checkpoint.meta
        fh.write(struct.pack("<IQd", meta.epochs_run, meta.seed, meta.best_val_loss))
        fh.write(struct.pack("<I", len(checkpoint.state)))
        for name, arr in checkpoint.state.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, version = struct.unpack_from("<4sH", blob, 0)
    if magic != MAGIC:
        raise ConfigurationError(f"{path}: bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ConfigurationError(f"{path}: unsupported checkpoint version {version}")
    offset = 6
    side, hidden, windows, l1, l2, classes, drop, mode = struct.unpack_from("<HHHHHHdB", blob, offset)
    offset += struct.calcsize("<HHHHHHdB")
    (n_conv,) = struct.unpack_from("<B", blob, offset)
    offset += 1
    stack = []
    for _ in range(n_conv):
        out_ch, kernel, stride, pad, has_lrn, has_pool = struct.unpack_from("<HBBBBB", blob, offset)
        offset += struct.calcsize("<HBBBBB")
        stack.append(ConvLayerSpec(out_ch, kernel, stride, pad, bool(has_lrn), bool(has_pool)))
    class_ids = struct.unpack_from(f"<{classes}B", blob, offset)
    offset += classes
    epochs_run, seed, best_val = struct.unpack_from("<IQd", blob, offset)
    offset += struct.calcsize("<IQd")
    (n_params,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    state = {}
    for _ in range(n_params):
        (ln,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + ln].decode("utf-8")
        offset += ln
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).reshape(shape).copy()
        offset += 8 * size
        state[name] = arr
    config = ArchitectureConfig(input_side=side, conv_stack=tuple(stack), lstm_hidden=hidden,
                                windows=windows, head_l1=l1, head_l2=l2, classes=classes,
                                drop_factor=drop, temporal_mode=_MODES_BACK[mode])
    return ModelCheckpoint(config=config, state=state, class_ids=class_ids,
                           meta=TrainMeta(epochs_run=epochs_run, seed=seed, best_val_loss=best_val))
