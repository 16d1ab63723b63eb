"""Short-time Fourier analysis: configuration, spectrogram containers,
forward/inverse transforms and the phase wrapping operator.

Array conventions used throughout the package:

* spectrograms are ``(K, T)`` matrices, frequency bins along axis 0
  (``K = fft_size // 2 + 1``, one-sided spectrum) and frames along axis 1;
* frame ``t`` is the windowed segment centered at sample ``t * hop_length``
  of the original signal (the signal is reflect-padded by half a window at
  both ends);
* all spectral math is done in 64-bit floats.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError

TWO_PI = 2.0 * np.pi


def wrap(x):
    """Map angles (scalar or array) to the principal interval [-pi, pi).

    Defined as ``(x + pi) mod 2pi - pi``; the result is congruent to ``x``
    modulo 2pi.  ``wrap(pi) == -pi``.
    """
    arr = np.asarray(x, dtype=np.float64)
    w = np.mod(arr + np.pi, TWO_PI) - np.pi
    # np.mod may round up to exactly 2*pi for tiny negative inputs, which
    # would put the result at +pi; fold it back to keep the half-open range.
    w = np.where(w >= np.pi, w - TWO_PI, w)
    if arr.ndim == 0:
        return float(w)
    return w


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters shared by every transform in a pipeline.

    Defaults are 16 kHz audio with a 32 ms periodic Hann window and an
    8 ms hop, i.e. 75% overlap and 257 one-sided bins.
    """

    sample_rate: int = 16000
    window_length: int = 512
    hop_length: int = 128
    fft_size: int = 512
    window_kind: str = "hann"

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if self.window_length <= 0 or self.hop_length <= 0:
            raise ConfigError("window_length and hop_length must be positive")
        if self.hop_length > self.window_length:
            raise ConfigError("hop_length must not exceed window_length")
        if self.fft_size < self.window_length:
            raise ConfigError("fft_size must be at least window_length")
        if self.window_kind != "hann":
            raise ConfigError(f"unsupported window kind: {self.window_kind!r}")

    @property
    def n_bins(self):
        return self.fft_size // 2 + 1

    def window(self):
        """Periodic Hann window (denominator N, exact COLA at hop = N/4)."""
        n = np.arange(self.window_length)
        return 0.5 - 0.5 * np.cos(TWO_PI * n / self.window_length)

    def frame_count(self, n_samples):
        """Number of frames produced for a signal of ``n_samples``."""
        return n_samples // self.hop_length + 1


@dataclass
class Waveform:
    """Mono time-domain signal with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


def _check_dims(data, config, cls_name):
    if data.ndim != 2:
        raise ValueError(f"{cls_name} data must be a 2-D (K, T) matrix")
    if config is not None and data.shape[0] != config.n_bins:
        raise ConfigError(
            f"{cls_name} has {data.shape[0]} rows but the config implies "
            f"{config.n_bins} bins"
        )


@dataclass
class ComplexSpectrogram:
    """Complex STFT matrix, ``(K, T)``."""

    data: np.ndarray
    config: StftConfig | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        _check_dims(self.data, self.config, "ComplexSpectrogram")

    @property
    def shape(self):
        return self.data.shape

    def amplitude(self):
        return AmplitudeSpectrogram(np.abs(self.data), self.config)

    def phase(self):
        return PhaseSpectrogram(wrap(np.angle(self.data)), self.config,
                                wrapped=True)


@dataclass
class AmplitudeSpectrogram:
    """Nonnegative magnitude matrix, ``(K, T)``."""

    data: np.ndarray
    config: StftConfig | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        _check_dims(self.data, self.config, "AmplitudeSpectrogram")
        if self.data.size and self.data.min() < 0:
            raise ValueError("amplitude entries must be nonnegative")

    @property
    def shape(self):
        return self.data.shape


@dataclass
class PhaseSpectrogram:
    """Phase matrix in radians, ``(K, T)``.

    ``wrapped=True`` asserts every entry lies in [-pi, pi).
    """

    data: np.ndarray
    config: StftConfig | None = None
    wrapped: bool = False

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        _check_dims(self.data, self.config, "PhaseSpectrogram")
        if self.wrapped and self.data.size:
            lo, hi = self.data.min(), self.data.max()
            if lo < -np.pi or hi >= np.pi:
                raise ValueError(
                    "phase marked wrapped but entries fall outside [-pi, pi)"
                )

    @property
    def shape(self):
        return self.data.shape


def from_polar(amplitude, phase):
    """Recompose a complex spectrogram from amplitude and phase."""
    amp = amplitude.data if isinstance(amplitude, AmplitudeSpectrogram) else np.asarray(amplitude)
    phi = phase.data if isinstance(phase, PhaseSpectrogram) else np.asarray(phase)
    if amp.shape != phi.shape:
        raise ValueError("amplitude and phase shapes differ")
    config = getattr(amplitude, "config", None) or getattr(phase, "config", None)
    return ComplexSpectrogram(amp * np.exp(1j * phi), config)


def stft(wave, cfg):
    """Forward one-sided STFT of a real signal.

    The signal is reflect-padded by ``window_length // 2`` samples at both
    ends so that frame ``t`` is centered at sample ``t * hop_length``; the
    frame count is ``len(wave) // hop_length + 1``.
    """
    if wave.sample_rate != cfg.sample_rate:
        raise ConfigError(
            f"waveform sample rate {wave.sample_rate} does not match "
            f"config rate {cfg.sample_rate}"
        )
    x = wave.samples
    if x.size == 0:
        raise ValueError("cannot transform an empty signal")
    pad = cfg.window_length // 2
    if x.size >= 2:
        padded = np.pad(x, pad, mode="reflect")
    else:
        padded = np.pad(x, pad, mode="edge")
    n_frames = cfg.frame_count(x.size)
    starts = np.arange(n_frames) * cfg.hop_length
    idx = starts[:, None] + np.arange(cfg.window_length)[None, :]
    frames = padded[idx] * cfg.window()[None, :]
    data = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    return ComplexSpectrogram(np.ascontiguousarray(data.T), cfg)


def istft(spec, cfg=None):
    """Weighted overlap-add inverse STFT (canonical dual window).

    Synthesis divides the overlap-added windowed frames by the per-sample
    sum of squared analysis windows, which inverts :func:`stft` exactly on
    its coverage.  The output length is ``(T - 1) * hop_length``, matching
    the analysis coverage of the un-padded signal.
    """
    if cfg is None:
        cfg = spec.config
    if cfg is None:
        raise ConfigError("istft needs an StftConfig (none attached or given)")
    if spec.config is not None and spec.config != cfg:
        raise ConfigError("spectrogram config differs from the supplied one")
    data = spec.data
    if data.shape[0] != cfg.n_bins:
        raise ConfigError(
            f"spectrogram has {data.shape[0]} bins, config implies {cfg.n_bins}"
        )
    n_frames = data.shape[1]
    win = cfg.window()
    frames = np.fft.irfft(data.T, n=cfg.fft_size, axis=1)[:, :cfg.window_length]
    frames = frames * win[None, :]

    hop = cfg.hop_length
    total = (n_frames - 1) * hop + cfg.window_length
    num = np.zeros(total)
    den = np.zeros(total)
    wsq = win * win
    for t in range(n_frames):
        s = t * hop
        num[s:s + cfg.window_length] += frames[t]
        den[s:s + cfg.window_length] += wsq

    pad = cfg.window_length // 2
    out_len = (n_frames - 1) * hop
    num = num[pad:pad + out_len]
    den = den[pad:pad + out_len]
    if out_len:
        # Cannot happen for Hann with hop <= window/2; guard regardless.
        if den.min() <= 1e-10 * den.max():
            raise NumericError("window normalization is degenerate "
                               "(near-zero overlap-add weight)")
        num = num / den
    return Waveform(num, cfg.sample_rate)
