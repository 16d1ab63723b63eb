"""Recurrent phase unwrapping: recursive least-squares reconstruction of
STFT phase from wrapped derivative fields, plus the full 2D least-squares
unwrapping baseline it is derived from.

Each frame ``t`` is obtained from frame ``t-1`` by minimizing

    || phi - (phi_prev + v_prev) ||^2  +  || D(phi) - u_t ||^2

over the K phase values of the frame, where ``D`` is the negative
frequency-difference operator and ``v``/``u`` are the wrapped time/frequency
derivatives.  The normal matrix ``M = I + D^T D`` is symmetric positive
definite and tridiagonal (diagonal ``[2, 3, ..., 3, 2]``, off-diagonals -1),
so each frame costs O(K).  Before solving, the group delay ``u_t`` is
re-based onto the 2pi representative nearest the frequency difference of the
provisional estimate ``phi_prev + v_prev``, which removes the wrapping
ambiguity of the learned targets.
"""

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConvergenceError, NumericError
from .phasediff import (DerivativeField, diff_omega, diff_omega_adjoint,
                        diff_tau, diff_tau_adjoint)
from .spectral import PhaseSpectrogram, wrap


class TridiagonalFactorization:
    """LDL^T factorization of ``M = I + D^T D`` for one bin count K.

    ``M`` has diagonal ``[2, 3, ..., 3, 2]`` (just ``[1]`` for K = 1,
    ``[2, 2]`` for K = 2) and constant off-diagonal -1; its eigenvalues lie
    in [1, 5], so the factorization is unconditionally stable.  Factor once
    per K and reuse across frames and utterances; instances are immutable.
    """

    def __init__(self, dimension):
        if dimension < 1:
            raise ValueError("dimension must be at least 1")
        self.dimension = dimension
        diag = np.full(dimension, 3.0)
        diag[0] = 2.0
        diag[-1] = 2.0
        if dimension == 1:
            diag[0] = 1.0
        off = np.full(dimension - 1, -1.0)
        self._diag = diag
        self._off = off
        # LDL^T: M = L diag(d) L^T with unit lower-bidiagonal L.
        d = np.empty(dimension)
        l = np.empty(max(dimension - 1, 0))
        d[0] = diag[0]
        for i in range(dimension - 1):
            l[i] = off[i] / d[i]
            d[i + 1] = diag[i + 1] - l[i] * off[i]
        self._d = d
        self._l = l

    def matrix(self):
        """Dense copy of M (for inspection and tests)."""
        m = np.diag(self._diag)
        idx = np.arange(self.dimension - 1)
        m[idx, idx + 1] = self._off
        m[idx + 1, idx] = self._off
        return m

    def solve(self, b):
        """Solve ``M x = b`` for one right-hand side or a (K, m) block."""
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.dimension:
            raise ValueError(
                f"right-hand side has {b.shape[0]} rows, expected {self.dimension}"
            )
        n = self.dimension
        l, d = self._l, self._d
        y = np.empty_like(b)
        y[0] = b[0]
        for i in range(1, n):
            y[i] = b[i] - l[i - 1] * y[i - 1]
        if b.ndim == 1:
            y /= d
        else:
            y /= d[:, None]
        x = y
        for i in range(n - 2, -1, -1):
            x[i] -= l[i] * x[i + 1]
        return x


#: accepted by :class:`RpuOptions.initial_phase`
INITIAL_PHASE_MODES = ("zeros", "integrate_gd")


@dataclass
class RpuOptions:
    """Reconstruction options.

    ``initial_phase`` is ``"zeros"`` (amplitude-only inference),
    ``"integrate_gd"`` (cumulative sum of the first frame's group delay,
    anchored at bin 0) or an explicit length-K vector for oracle runs.
    ``wrap_each_frame`` wraps every solved frame before it feeds the next
    recursion step; this only changes the solution by per-entry multiples
    of 2pi but keeps values bounded.
    """

    initial_phase: Union[str, np.ndarray] = "zeros"
    wrap_each_frame: bool = True

    def __post_init__(self):
        if isinstance(self.initial_phase, str):
            if self.initial_phase not in INITIAL_PHASE_MODES:
                raise ValueError(
                    f"unknown initial_phase mode {self.initial_phase!r}"
                )
        else:
            self.initial_phase = np.asarray(self.initial_phase, dtype=np.float64)
            if self.initial_phase.ndim != 1:
                raise ValueError("initial_phase vector must be 1-D")


def modify_group_delay(phi_prev_wrapped, v_prev, u_tau):
    """Resolve the 2pi ambiguity of a group-delay vector.

    Forms the provisional frame ``phi_hat = phi_prev_wrapped + v_prev`` and
    replaces ``u_tau`` by the representative of ``u_tau + 2*pi*Z`` nearest
    the frequency difference of ``phi_hat``:

        u_tilde = D(phi_hat) + wrap(u_tau - D(phi_hat))

    Returns ``(phi_hat, u_tilde)``.  ``u_tilde`` is congruent to ``u_tau``
    modulo 2pi and satisfies ``|u_tilde - D(phi_hat)| <= pi`` entrywise.
    """
    phi_prev_wrapped = np.asarray(phi_prev_wrapped, dtype=np.float64)
    v_prev = np.asarray(v_prev, dtype=np.float64)
    u_tau = np.asarray(u_tau, dtype=np.float64)
    k = phi_prev_wrapped.shape[0]
    if v_prev.shape != (k,):
        raise ValueError("v_prev length differs from phi_prev")
    if u_tau.shape != (max(k - 1, 0),):
        raise ValueError("u_tau must have length K-1")
    phi_hat = phi_prev_wrapped + v_prev
    d_hat = diff_omega(phi_hat)
    u_tilde = d_hat + wrap(u_tau - d_hat)
    return phi_hat, u_tilde


def rpu_step(phi_prev, v_prev, u_tau, fact, opts=None):
    """Advance the recursion by one frame.

    ``phi_prev`` is the previous frame's estimate (already wrapped when
    ``opts.wrap_each_frame``), ``v_prev`` the wrapped time derivative
    pointing into this frame and ``u_tau`` this frame's wrapped group
    delay.  Applies :func:`modify_group_delay`, then solves

        (I + D^T D) phi = phi_prev + v_prev + D^T u_tilde
    """
    if opts is None:
        opts = RpuOptions()
    phi_hat, u_tilde = modify_group_delay(phi_prev, v_prev, u_tau)
    if not (np.all(np.isfinite(phi_hat)) and np.all(np.isfinite(u_tilde))):
        raise NumericError("non-finite values entered the phase recursion")
    rhs = phi_hat + diff_omega_adjoint(u_tilde)
    phi = fact.solve(rhs)
    if opts.wrap_each_frame:
        phi = wrap(phi)
    return phi


def _initial_frame(opts, derivs, k):
    init = opts.initial_phase
    if isinstance(init, np.ndarray):
        if init.shape != (k,):
            raise ValueError(f"initial phase vector must have length {k}")
        return init.copy()
    if init == "zeros":
        return np.zeros(k)
    # integrate_gd: u[w, 0] = phi[w] - phi[w+1]  =>  phi = -cumsum(u[:, 0]),
    # anchored at phi[0] = 0.
    phi0 = np.zeros(k)
    if k > 1:
        phi0[1:] = -np.cumsum(derivs.gd_field[:, 0])
    return phi0


def rpu_reconstruct(amplitude, derivs, opts=None):
    """Reconstruct a full phase matrix from derivative fields.

    Frame 0 comes from ``opts.initial_phase``; frames 1..T-1 are produced
    by :func:`rpu_step` in order.  Returns a :class:`PhaseSpectrogram`
    marked wrapped when ``opts.wrap_each_frame``.
    """
    if opts is None:
        opts = RpuOptions()
    amp = np.asarray(getattr(amplitude, "data", amplitude), dtype=np.float64)
    k, t = amp.shape
    if t == 0:
        raise ValueError("amplitude spectrogram has no frames")
    if not isinstance(derivs, DerivativeField):
        raise TypeError("derivs must be a DerivativeField")
    if derivs.n_bins != k or derivs.n_frames != t:
        raise ValueError(
            f"derivative field shape ({derivs.n_bins}, {derivs.n_frames}) "
            f"does not match amplitude ({k}, {t})"
        )
    phi = np.empty((k, t))
    frame = _initial_frame(opts, derivs, k)
    if opts.wrap_each_frame:
        frame = wrap(frame)
    phi[:, 0] = frame
    fact = TridiagonalFactorization(k)
    for tau in range(1, t):
        frame = rpu_step(frame, derivs.if_field[:, tau - 1],
                         derivs.gd_field[:, tau], fact, opts)
        phi[:, tau] = frame
    return PhaseSpectrogram(phi, getattr(amplitude, "config", None),
                            wrapped=opts.wrap_each_frame)


@dataclass
class Unwrap2dResult:
    """Solution of the global 2D least-squares unwrapping problem."""

    phase: np.ndarray
    residual: float  # relative normal-equation residual
    iterations: int


def _normal_apply(x):
    return diff_tau_adjoint(diff_tau(x)) + diff_omega_adjoint(diff_omega(x))


def unwrap_2d(derivs, gauge="fix_first", tol=1e-10, max_iter=None):
    """Global least-squares phase unwrapping from both derivative fields.

    Minimizes ``||D_t(phi) - V||_F^2 + ||D_w(phi) - U||_F^2`` over the full
    ``(K, T)`` matrix by conjugate gradient on the (matrix-free) normal
    equations.  The system's nullspace is the constant matrices; ``gauge``
    picks the representative: ``"fix_first"`` zeroes entry (0, 0),
    ``"zero_mean"`` removes the mean.

    This treats the derivative fields as given, with no ambiguity
    correction; it is the quadratic-cost global baseline that the frame
    recursion above approximates at O(K) per frame.
    """
    if gauge not in ("fix_first", "zero_mean"):
        raise ValueError(f"unknown gauge {gauge!r}")
    v = derivs.if_field
    u = derivs.gd_field
    k, t = v.shape[0], u.shape[1]
    if k * t < 2:
        raise ValueError("unwrapping needs at least two grid points")
    b = diff_tau_adjoint(v) + diff_omega_adjoint(u)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return Unwrap2dResult(np.zeros((k, t)), 0.0, 0)
    if max_iter is None:
        max_iter = 10 * k * t

    x = np.zeros((k, t))
    r = b.copy()
    p = r.copy()
    rs = float(np.dot(r.ravel(), r.ravel()))
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        ap = _normal_apply(p)
        alpha = rs / float(np.dot(p.ravel(), ap.ravel()))
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.dot(r.ravel(), r.ravel()))
        if np.sqrt(rs_new) <= tol * b_norm:
            rs = rs_new
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    else:
        raise ConvergenceError(
            f"2D unwrapping CG did not converge in {max_iter} iterations",
            residual=np.sqrt(rs) / b_norm,
        )

    if gauge == "fix_first":
        x -= x[0, 0]
    else:
        x -= x.mean()
    residual = float(np.linalg.norm(b - _normal_apply(x)) / b_norm)
    return Unwrap2dResult(x, residual, n_iter)
