"""Wrapped phase derivatives and the frequency-difference operator.

Sign conventions: the time-directional derivative (instantaneous frequency)
at ``(w, t)`` is ``phase[w, t+1] - phase[w, t]``; the frequency-directional
derivative (group delay) is the *negative* frequency difference
``phase[w, t] - phase[w+1, t]``.  Both are stored wrapped to [-pi, pi);
the 2pi ambiguity this introduces is resolved downstream by the
reconstruction solvers.
"""

from dataclasses import dataclass

import numpy as np

from .spectral import wrap


def _matrix(phase):
    """Accept a PhaseSpectrogram or a bare (K, T) array."""
    return np.asarray(getattr(phase, "data", phase), dtype=np.float64)


@dataclass
class DerivativeField:
    """Bundle of wrapped derivative targets for one utterance.

    ``if_field`` is ``(K, T-1)``: column ``t`` relates frames ``t`` and
    ``t+1``.  ``gd_field`` is ``(K-1, T)``: row ``w`` relates bins ``w``
    and ``w+1``.
    """

    if_field: np.ndarray
    gd_field: np.ndarray

    def __post_init__(self):
        self.if_field = np.asarray(self.if_field, dtype=np.float64)
        self.gd_field = np.asarray(self.gd_field, dtype=np.float64)
        if self.if_field.ndim != 2 or self.gd_field.ndim != 2:
            raise ValueError("derivative fields must be 2-D")
        k_if = self.if_field.shape[0]
        k_gd = self.gd_field.shape[0] + 1
        t_if = self.if_field.shape[1] + 1
        t_gd = self.gd_field.shape[1]
        if k_if != k_gd or t_if != t_gd:
            raise ValueError(
                f"inconsistent field shapes: IF {self.if_field.shape} vs "
                f"GD {self.gd_field.shape}"
            )
        for name, f in (("IF", self.if_field), ("GD", self.gd_field)):
            if f.size and (f.min() < -np.pi or f.max() >= np.pi):
                raise ValueError(f"{name} field entries must lie in [-pi, pi)")

    @property
    def n_bins(self):
        return self.if_field.shape[0]

    @property
    def n_frames(self):
        return self.gd_field.shape[1]


def instantaneous_frequency(phase):
    """Wrapped frame-to-frame phase difference, shape ``(K, T-1)``."""
    phi = _matrix(phase)
    if phi.shape[1] < 2:
        raise ValueError("need at least two frames for a time difference")
    return wrap(phi[:, 1:] - phi[:, :-1])


def group_delay(phase):
    """Wrapped negative bin-to-bin phase difference, shape ``(K-1, T)``."""
    phi = _matrix(phase)
    if phi.shape[0] < 2:
        raise ValueError("need at least two bins for a frequency difference")
    return wrap(phi[:-1, :] - phi[1:, :])


def derivative_field(phase):
    """Both wrapped derivative fields of a phase matrix.

    Handles the degenerate single-frame / single-bin cases with empty
    fields of the right shape.
    """
    phi = _matrix(phase)
    k, t = phi.shape
    if t >= 2:
        v = instantaneous_frequency(phi)
    else:
        v = np.zeros((k, 0))
    if k >= 2:
        u = group_delay(phi)
    else:
        u = np.zeros((0, t))
    return DerivativeField(v, u)


def diff_omega(phi):
    """Negative frequency-directional difference along axis 0.

    ``out[w] = phi[w] - phi[w+1]``; works on vectors and on ``(K, T)``
    matrices (applied column-wise).  Matrix-free counterpart of the
    bidiagonal difference operator used by the reconstruction solvers.
    """
    phi = np.asarray(phi, dtype=np.float64)
    return phi[:-1] - phi[1:]


def diff_omega_adjoint(u):
    """Transpose of :func:`diff_omega` (length K-1 -> length K).

    ``out[0] = u[0]``, ``out[w] = u[w] - u[w-1]`` for interior ``w`` and
    ``out[K-1] = -u[K-2]``.
    """
    u = np.asarray(u, dtype=np.float64)
    return np.diff(u, axis=0, prepend=0, append=0)


def diff_tau(phi):
    """Time-directional difference along axis 1: ``phi[:,1:] - phi[:,:-1]``."""
    phi = np.asarray(phi, dtype=np.float64)
    return phi[:, 1:] - phi[:, :-1]


def diff_tau_adjoint(v):
    """Transpose of :func:`diff_tau` ((K, T-1) -> (K, T))."""
    v = np.asarray(v, dtype=np.float64)
    return -np.diff(v, axis=1, prepend=0, append=0)
