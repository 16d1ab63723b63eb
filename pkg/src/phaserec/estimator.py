"""Trainable regressors for phase and phase derivatives.

A small fully-connected network maps a stack of normalized log-amplitude
columns (the current frame and ``context`` frames on each side) to one
angle per output: the frame's phase, its time derivative, or its group
delay.  Hidden layers use the gated tanh nonlinearity
``tanh(A x + a) * sigmoid(B x + b)``; the last layer is a plain affine map
whose outputs are read as angles modulo 2pi.

Training minimizes the negative cosine loss ``-sum(cos(target - pred))``,
the von Mises negative log-likelihood up to constants, which is blind to
2pi offsets in both target and prediction.  Optimization is mini-batch
Adam with a step-halving schedule; everything runs in float64 numpy and is
bit-reproducible for a fixed seed.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericError
from .phasediff import derivative_field, group_delay, instantaneous_frequency
from .spectral import Waveform, stft, wrap

TARGET_KINDS = ("phase", "if", "gd")


# ---------------------------------------------------------------------------
# features

@dataclass
class FeatureConfig:
    """Input-feature construction parameters.

    ``amplitude_floor`` is relative to the utterance's maximum amplitude
    and bounds the dynamic range before the log; normalization is
    per-utterance mean/variance of the floored log amplitude.
    """

    context: int = 2
    amplitude_floor: float = 1e-5
    normalization: str = "log_mean_var"

    def __post_init__(self):
        if self.context < 0:
            raise ValueError("context must be nonnegative")
        if self.amplitude_floor <= 0:
            raise ValueError("amplitude_floor must be positive")
        if self.normalization != "log_mean_var":
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @property
    def stack(self):
        return 2 * self.context + 1


def log_amplitude(amplitude, cfg=None):
    """Log magnitude floored at ``amplitude_floor`` times the utterance max."""
    if cfg is None:
        cfg = FeatureConfig()
    amp = np.asarray(getattr(amplitude, "data", amplitude), dtype=np.float64)
    peak = amp.max() if amp.size else 0.0
    if peak <= 0.0:
        return np.zeros_like(amp)
    return np.log(np.maximum(amp, cfg.amplitude_floor * peak))


def mean_var_normalize(m):
    """Zero-mean unit-variance scaling over the whole matrix (floored std)."""
    m = np.asarray(m, dtype=np.float64)
    std = m.std()
    return (m - m.mean()) / max(std, 1e-12)


def features(log_amp, tau, cfg=None):
    """Input vector for one frame: normalized log-amplitude columns
    ``tau - context .. tau + context`` concatenated, edges replicated."""
    if cfg is None:
        cfg = FeatureConfig()
    log_amp = np.asarray(log_amp, dtype=np.float64)
    t = log_amp.shape[1]
    if not 0 <= tau < t:
        raise ValueError(f"frame index {tau} out of range [0, {t})")
    norm = mean_var_normalize(log_amp)
    idx = np.clip(np.arange(tau - cfg.context, tau + cfg.context + 1), 0, t - 1)
    return norm[:, idx].T.reshape(-1)


def utterance_features(amplitude, cfg=None):
    """Feature matrix ``(T, stack * K)`` for a whole amplitude spectrogram."""
    if cfg is None:
        cfg = FeatureConfig()
    norm = mean_var_normalize(log_amplitude(amplitude, cfg))
    t = norm.shape[1]
    frames = np.arange(t)
    cols = []
    for off in range(-cfg.context, cfg.context + 1):
        idx = np.clip(frames + off, 0, t - 1)
        cols.append(norm[:, idx])
    return np.concatenate(cols, axis=0).T.copy()


# ---------------------------------------------------------------------------
# model

@dataclass
class GatedLayer:
    value_weight: np.ndarray  # (n_in, n_out)
    value_bias: np.ndarray
    gate_weight: np.ndarray
    gate_bias: np.ndarray


@dataclass
class EstimatorModel:
    """Gated-tanh MLP emitting one angle per output dimension.

    ``target_kind`` decides the output width downstream: K for phase and
    the time derivative, K-1 for the group delay.
    """

    target_kind: str
    hidden: list
    out_weight: np.ndarray
    out_bias: np.ndarray

    def __post_init__(self):
        if self.target_kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.target_kind!r}")

    @property
    def input_dim(self):
        if self.hidden:
            return self.hidden[0].value_weight.shape[0]
        return self.out_weight.shape[0]

    @property
    def output_dim(self):
        return self.out_weight.shape[1]


def output_dim_for(kind, n_bins):
    if kind not in TARGET_KINDS:
        raise ValueError(f"unknown target kind {kind!r}")
    return n_bins - 1 if kind == "gd" else n_bins


def _glorot(rng, n_in, n_out):
    bound = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-bound, bound, size=(n_in, n_out))


def init_model(kind, input_dim, output_dim, hidden_layers, hidden_width, rng):
    """Fresh model with uniform +-sqrt(6 / (fan_in + fan_out)) weights."""
    dims = [input_dim] + [hidden_width] * hidden_layers
    hidden = []
    for i in range(hidden_layers):
        hidden.append(GatedLayer(
            value_weight=_glorot(rng, dims[i], dims[i + 1]),
            value_bias=np.zeros(dims[i + 1]),
            gate_weight=_glorot(rng, dims[i], dims[i + 1]),
            gate_bias=np.zeros(dims[i + 1]),
        ))
    out_w = _glorot(rng, dims[-1], output_dim)
    return EstimatorModel(kind, hidden, out_w, np.zeros(output_dim))


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(model, psi):
    """Network output for one feature vector or an ``(n, d)`` batch.

    Outputs are unconstrained reals interpreted as angles modulo 2pi; no
    wrapping is applied (the training loss is already periodic).
    """
    psi = np.asarray(psi, dtype=np.float64)
    single = psi.ndim == 1
    x = psi[None, :] if single else psi
    if x.shape[1] != model.input_dim:
        raise ValueError(
            f"feature dimension {x.shape[1]} does not match model input "
            f"{model.input_dim}"
        )
    for layer in model.hidden:
        x = np.tanh(x @ layer.value_weight + layer.value_bias) \
            * _sigmoid(x @ layer.gate_weight + layer.gate_bias)
    out = x @ model.out_weight + model.out_bias
    return out[0] if single else out


def von_mises_loss(pred, target):
    """Negative cosine loss ``-sum(cos(target - pred))``.

    Ranges over [-N, N] for N compared entries and is invariant to adding
    multiples of 2pi to either argument.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError("prediction and target shapes differ")
    return -float(np.sum(np.cos(target - pred)))


def _param_arrays(model):
    params = []
    for layer in model.hidden:
        params.extend([layer.value_weight, layer.value_bias,
                       layer.gate_weight, layer.gate_bias])
    params.extend([model.out_weight, model.out_bias])
    return params


def loss_gradient(model, psi, target):
    """Loss and its exact gradient for every parameter.

    Returns ``(loss, grads)`` with ``grads`` ordered like the parameter
    list: per hidden layer value weight/bias then gate weight/bias,
    followed by the output weight/bias.  The output seed is
    ``-sin(target - pred)`` per entry, backpropagated analytically.
    """
    psi = np.asarray(psi, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    single = psi.ndim == 1
    x = psi[None, :] if single else psi
    y = target[None, :] if single else target

    acts = [x]
    tanhs, gates = [], []
    for layer in model.hidden:
        t = np.tanh(acts[-1] @ layer.value_weight + layer.value_bias)
        s = _sigmoid(acts[-1] @ layer.gate_weight + layer.gate_bias)
        tanhs.append(t)
        gates.append(s)
        acts.append(t * s)
    pred = acts[-1] @ model.out_weight + model.out_bias
    loss = -float(np.sum(np.cos(y - pred)))

    g_pred = -np.sin(y - pred)
    d_out_w = acts[-1].T @ g_pred
    d_out_b = g_pred.sum(axis=0)
    g = g_pred @ model.out_weight.T
    hidden_grads = []
    for i in range(len(model.hidden) - 1, -1, -1):
        layer = model.hidden[i]
        t, s = tanhs[i], gates[i]
        g_zv = g * (1.0 - t * t) * s
        g_zg = g * t * s * (1.0 - s)
        hidden_grads.append([
            acts[i].T @ g_zv, g_zv.sum(axis=0),
            acts[i].T @ g_zg, g_zg.sum(axis=0),
        ])
        g = g_zv @ layer.value_weight.T + g_zg @ layer.gate_weight.T

    grads = []
    for block in reversed(hidden_grads):
        grads.extend(block)
    grads.extend([d_out_w, d_out_b])
    return loss, grads


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainConfig:
    """Adam training schedule and network shape.

    Defaults are the full-scale profile (4 x 1024 gated layers, 10k epochs,
    step halved every 1000); :meth:`desk_profile` returns the small profile
    used by the bundled test suite.
    """

    initial_lr: float = 0.01
    lr_halving_period: int = 1000
    epochs: int = 10000
    segment_seconds: float = 2.0
    batch_size: int = 64
    hidden_layers: int = 4
    hidden_width: int = 1024
    rng_seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if min(self.initial_lr, self.lr_halving_period, self.segment_seconds,
               self.batch_size, self.hidden_width) <= 0:
            raise ValueError("training parameters must be positive")
        if self.epochs < 0 or self.hidden_layers < 0:
            raise ValueError("epochs and hidden_layers must be nonnegative")

    @classmethod
    def desk_profile(cls, **overrides):
        base = dict(initial_lr=0.01, lr_halving_period=100, epochs=500,
                    hidden_layers=2, hidden_width=128)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def paper_profile(cls, **overrides):
        return cls(**overrides)


@dataclass
class TrainResult:
    model: EstimatorModel
    loss_history: np.ndarray  # summed loss per epoch


def _build_samples(dataset, kind, feature_cfg):
    xs, ys = [], []
    for amp, phase in dataset:
        feats = utterance_features(amp, feature_cfg)
        if kind == "phase":
            target = phase.data.T
        elif kind == "gd":
            target = group_delay(phase).T
        else:  # if
            if phase.data.shape[1] < 2:
                continue
            target = instantaneous_frequency(phase).T
            feats = feats[:-1]
        xs.append(feats)
        ys.append(target)
    if not xs:
        raise ValueError("dataset produced no training samples")
    return np.concatenate(xs, axis=0), np.concatenate(ys, axis=0)


def train(dataset, kind, cfg, feature_cfg=None):
    """Train an estimator on (amplitude, clean phase) pairs.

    Targets are computed from the clean phase per ``kind``; optimization is
    mini-batch Adam over per-frame samples with per-epoch reshuffling.
    Deterministic for a fixed ``cfg.rng_seed``.  Raises
    :class:`NumericError` if the loss turns non-finite.
    """
    if kind not in TARGET_KINDS:
        raise ValueError(f"unknown target kind {kind!r}")
    if not dataset:
        raise ValueError("dataset is empty")
    if feature_cfg is None:
        feature_cfg = FeatureConfig()
    x, y = _build_samples(dataset, kind, feature_cfg)
    n, dim = x.shape

    rng = np.random.default_rng(cfg.rng_seed)
    model = init_model(kind, dim, y.shape[1], cfg.hidden_layers,
                       cfg.hidden_width, rng)
    params = _param_arrays(model)
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    step = 0
    history = np.empty(cfg.epochs)

    for epoch in range(cfg.epochs):
        lr = cfg.initial_lr * 0.5 ** (epoch // cfg.lr_halving_period)
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            loss, grads = loss_gradient(model, x[batch], y[batch])
            if not np.isfinite(loss):
                raise NumericError(
                    f"training loss became non-finite at epoch {epoch}"
                )
            total += loss
            step += 1
            bc1 = 1.0 - cfg.beta1 ** step
            bc2 = 1.0 - cfg.beta2 ** step
            for p, g, m, v in zip(params, grads, m_state, v_state):
                m *= cfg.beta1
                m += (1.0 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * (g * g)
                p -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
        history[epoch] = total
    return TrainResult(model, history)


def split_segments(wave, seconds):
    """Cut a waveform into consecutive segments of about ``seconds``.

    The trailing remainder is kept when it is at least a quarter segment
    long; shorter tails are dropped.
    """
    seg = int(round(seconds * wave.sample_rate))
    if seg <= 0:
        raise ValueError("segment length must be positive")
    x = wave.samples
    out = []
    for lo in range(0, x.size, seg):
        chunk = x[lo:lo + seg]
        if chunk.size >= seg or chunk.size >= seg // 4:
            out.append(Waveform(chunk, wave.sample_rate))
    if not out and x.size:
        out.append(Waveform(x, wave.sample_rate))
    return out


def training_pairs(waves, stft_cfg, segment_seconds=2.0):
    """(amplitude, phase) training pairs from waveforms, segmented first."""
    pairs = []
    for wave in waves:
        for seg in split_segments(wave, segment_seconds):
            spec = stft(seg, stft_cfg)
            pairs.append((spec.amplitude(), spec.phase()))
    return pairs


# ---------------------------------------------------------------------------
# derivative sources

class OracleDerivatives:
    """Derivative provider backed by the clean phase (isolates the
    reconstruction stage from estimation error)."""

    def __init__(self, clean_phase):
        self.clean_phase = clean_phase

    def field(self, amplitude):
        amp = np.asarray(getattr(amplitude, "data", amplitude))
        if amp.shape != self.clean_phase.data.shape:
            raise ValueError(
                f"amplitude shape {amp.shape} does not match oracle phase "
                f"{self.clean_phase.data.shape}"
            )
        return derivative_field(self.clean_phase)


class LearnedDerivatives:
    """Derivative provider running the two trained estimators.

    Both derivatives are predicted from the same per-frame amplitude
    features; the time-derivative prediction for frame ``t`` targets the
    step from frame ``t`` to ``t+1``, so its last frame is unused.
    """

    def __init__(self, if_model, gd_model, feature_cfg=None):
        if if_model.target_kind != "if" or gd_model.target_kind != "gd":
            raise ValueError("models must have target kinds 'if' and 'gd'")
        self.if_model = if_model
        self.gd_model = gd_model
        self.feature_cfg = feature_cfg or FeatureConfig()

    def field(self, amplitude):
        feats = utterance_features(amplitude, self.feature_cfg)
        v = wrap(forward(self.if_model, feats))[:-1].T if feats.shape[0] > 1 \
            else np.zeros((self.if_model.output_dim, 0))
        u = wrap(forward(self.gd_model, feats)).T
        return DerivativeFieldAdapter(v, u)


def DerivativeFieldAdapter(v, u):
    # late import keeps module load order simple
    from .phasediff import DerivativeField
    return DerivativeField(v, u)


def oracle_derivatives(clean_phase):
    """Derivative source that answers with the clean phase's differences."""
    return OracleDerivatives(clean_phase)


# ---------------------------------------------------------------------------
# model files

_MODEL_MAGIC = b"VMN1"
_KIND_CODES = {"phase": 0, "if": 1, "gd": 2}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def save_model(path, model):
    """Write a model file: magic ``VMN1``, u32 target kind, u32 affine-stage
    count, the stage dimensions (input, hidden..., output) as u32, then the
    float32 parameter blocks in declaration order (per hidden layer: value
    weight/bias, gate weight/bias; finally output weight/bias), row-major,
    little-endian."""
    dims = [model.input_dim] + [l.value_weight.shape[1] for l in model.hidden] \
        + [model.output_dim]
    n_stages = len(model.hidden) + 1
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<II", _KIND_CODES[model.target_kind], n_stages))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for p in _param_arrays(model):
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_model(path):
    """Read a model file written by :func:`save_model`.

    Weights are stored as float32 and upcast to float64 in memory, so a
    save/load/save cycle is byte-identical.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MODEL_MAGIC:
        raise DataError(f"{path}: bad magic at byte 0 (not a model file)")
    try:
        kind_code, n_stages = struct.unpack_from("<II", blob, 4)
        dims = struct.unpack_from(f"<{n_stages + 1}I", blob, 12)
    except struct.error as exc:
        raise DataError(f"{path}: truncated header: {exc}") from None
    if kind_code not in _KIND_NAMES:
        raise DataError(f"{path}: unknown target kind code {kind_code}")
    if n_stages < 1 or any(d < 1 for d in dims):
        raise DataError(f"{path}: invalid layer dimensions {dims}")

    offset = 12 + 4 * (n_stages + 1)

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape))
        end = offset + 4 * count
        if end > len(blob):
            raise DataError(f"{path}: parameter block at byte {offset} "
                            "runs past end of file")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        offset = end
        return arr.astype(np.float64).reshape(shape)

    hidden = []
    for i in range(n_stages - 1):
        hidden.append(GatedLayer(
            value_weight=take((dims[i], dims[i + 1])),
            value_bias=take((dims[i + 1],)),
            gate_weight=take((dims[i], dims[i + 1])),
            gate_bias=take((dims[i + 1],)),
        ))
    out_w = take((dims[-2], dims[-1]))
    out_b = take((dims[-1],))
    if offset != len(blob):
        raise DataError(f"{path}: {len(blob) - offset} trailing bytes "
                        f"after byte {offset}")
    return EstimatorModel(_KIND_NAMES[kind_code], hidden, out_w, out_b)
