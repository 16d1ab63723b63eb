"""Reference phase-reconstruction methods: Griffin-Lim post-processing,
integration of the instantaneous frequency, and the zero-phase floor.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .spectral import (AmplitudeSpectrogram, ComplexSpectrogram,
                       PhaseSpectrogram, istft, stft, wrap)


@dataclass
class GlaConfig:
    iterations: int = 100
    track_inconsistency: bool = False

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")


def griffin_lim(amplitude, init_phase, cfg=None):
    """Alternating-projection phase refinement at fixed amplitude.

    Each iteration replaces the phase by the phase of the consistency
    projection ``stft(istft(.))`` of the current complex estimate, keeping
    the given amplitude.  The amplitude itself is never modified.

    Returns the refined :class:`PhaseSpectrogram`; when
    ``cfg.track_inconsistency`` is set, returns ``(phase, inconsistency)``
    where ``inconsistency[i]`` is the Frobenius distance between the
    estimate entering iteration ``i`` and its consistency projection.
    """
    if cfg is None:
        cfg = GlaConfig()
    scfg = amplitude.config or init_phase.config
    if scfg is None:
        raise ConfigError("griffin_lim needs a spectrogram with a config")
    amp = amplitude.data
    phi = np.array(init_phase.data, dtype=np.float64)
    if amp.shape != phi.shape:
        raise ValueError("amplitude and phase shapes differ")

    history = []
    for _ in range(cfg.iterations):
        est = amp * np.exp(1j * phi)
        projected = stft(istft(ComplexSpectrogram(est, scfg)), scfg).data
        if cfg.track_inconsistency:
            history.append(float(np.linalg.norm(est - projected)))
        phi = np.angle(projected)

    out = PhaseSpectrogram(wrap(phi), scfg, wrapped=True)
    if cfg.track_inconsistency:
        return out, np.asarray(history)
    return out


def integrate_if(init_frame, if_field, config=None):
    """Cumulative phase from the time derivative alone.

    ``phi[:, 0] = wrap(init_frame)`` and
    ``phi[:, t] = wrap(phi[:, t-1] + if_field[:, t-1])``.  Uses no
    frequency-direction information; per-bin constant offsets of the
    initial frame propagate unchanged.
    """
    init = np.asarray(init_frame, dtype=np.float64)
    v = np.asarray(if_field, dtype=np.float64)
    if init.ndim != 1 or v.ndim != 2 or v.shape[0] != init.shape[0]:
        raise ValueError("init_frame / if_field shapes are inconsistent")
    k, t = init.shape[0], v.shape[1] + 1
    phi = np.empty((k, t))
    phi[:, 0] = wrap(init)
    for tau in range(1, t):
        phi[:, tau] = wrap(phi[:, tau - 1] + v[:, tau - 1])
    return PhaseSpectrogram(phi, config, wrapped=True)


def zero_phase(amplitude):
    """All-zero phase of matching shape (synthesis without reconstruction)."""
    amp = amplitude.data if isinstance(amplitude, AmplitudeSpectrogram) else np.asarray(amplitude)
    return PhaseSpectrogram(np.zeros(amp.shape),
                            getattr(amplitude, "config", None), wrapped=True)
