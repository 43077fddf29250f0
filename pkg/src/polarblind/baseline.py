"""Pilot-based benchmark: orthogonal pilots, per-user OMP, then zero forcing.

The frame splits into a pilot part of tau = T - S slots carrying orthogonal
DFT pilot sequences and a data part of S slots where all users transmit QAM
symbols simultaneously:

    Y_pilot = sqrt(rho) H Pi^T + Z_p,     Y_data = sqrt(rho) H D + Z_d,

with Pi the (tau, K) pilot matrix and D the (K, S) symbol matrix.  Channel
estimates come from despreading plus sparse recovery on the same polar
dictionary the blind scheme uses; detection is zero forcing.
"""

from __future__ import annotations

import numpy as np

from .bomp import KnownPaths, ResidualThreshold
from .errors import ConfigError, DimensionMismatchError, ExhaustedError, MaxItersExceededError
from .geometry import PolarDictionary
from .numkernel import pseudoinverse
from .waveform import qam_demodulate


def dft_pilots(tau: int, n_users: int) -> np.ndarray:
    """Columns k = 0..K-1 of the tau-point DFT matrix: mutually orthogonal,
    unit-modulus entries, ||pilot_k||^2 = tau."""
    if tau < n_users:
        raise ConfigError(f"pilot length {tau} cannot separate {n_users} users")
    t = np.arange(tau)[:, None]
    k = np.arange(n_users)[None, :]
    return np.exp(-2j * np.pi * t * k / tau)


def synthesize_pilot_frame(
    channels,
    pilots: np.ndarray,
    data_symbols: np.ndarray,
    rho: float,
    sigma2: float,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Received pilot and data parts for the benchmark scheme."""
    h = np.column_stack([ch.h for ch in channels])  # (N, K)
    if data_symbols.shape[0] != h.shape[1] or pilots.shape[1] != h.shape[1]:
        raise DimensionMismatchError("pilots/data must have one row or column per user")
    y_pilot = np.sqrt(rho) * h @ pilots.T
    y_data = np.sqrt(rho) * h @ data_symbols
    if rng is not None and sigma2 > 0:
        scale = np.sqrt(sigma2 / 2.0)
        y_pilot = y_pilot + scale * (
            rng.standard_normal(y_pilot.shape) + 1j * rng.standard_normal(y_pilot.shape)
        )
        y_data = y_data + scale * (
            rng.standard_normal(y_data.shape) + 1j * rng.standard_normal(y_data.shape)
        )
    return y_pilot, y_data


def despread_pilot(y_pilot: np.ndarray, pilots: np.ndarray, user: int, rho: float) -> np.ndarray:
    """Per-user LS channel observation h_k + noise of variance sigma2/(rho tau)."""
    tau = pilots.shape[0]
    return y_pilot @ pilots[:, user].conj() / (np.sqrt(rho) * tau)


def omp_channel_estimate(
    y: np.ndarray, dictionary: PolarDictionary, stop
) -> tuple[np.ndarray, list[int]]:
    """Classic vector OMP on the polar dictionary.

    Selection maximizes |w_q^H residual| / ||w_q|| over atoms outside the
    current support (ties to the lowest index); each sweep refits all
    coefficients by least squares on the support.

    Returns the dense channel estimate and the ordered support.
    """
    atoms = dictionary.atoms
    norms = np.linalg.norm(atoms, axis=0)
    y = np.asarray(y, dtype=np.complex128)
    y_norm2 = float(np.real(np.vdot(y, y)))
    if isinstance(stop, KnownPaths):
        cap = stop.n_paths
    elif isinstance(stop, ResidualThreshold):
        cap = stop.max_iters if stop.max_iters is not None else min(dictionary.n_atoms, len(y))
    else:
        raise ConfigError(f"unsupported stop rule {stop!r}")

    support: list[int] = []
    resid = y.copy()
    h_hat = np.zeros_like(y)
    for it in range(1, cap + 1):
        scores = np.abs(atoms.conj().T @ resid) / norms
        scores[support] = -1.0
        if np.all(scores < 0):
            raise ExhaustedError("no admissible atoms left")
        support.append(int(np.argmax(scores)))
        sub = atoms[:, support]
        coef = pseudoinverse(sub) @ y
        h_hat = sub @ coef
        resid = y - h_hat
        if isinstance(stop, KnownPaths):
            if it >= stop.n_paths:
                return h_hat, support
        else:
            if float(np.real(np.vdot(resid, resid))) <= stop.eps1 * y_norm2:
                return h_hat, support
    if isinstance(stop, ResidualThreshold):
        raise MaxItersExceededError(f"residual threshold not reached in {cap} sweeps")
    return h_hat, support


def zf_detect(
    y_data: np.ndarray, h_hat: np.ndarray, rho: float, order: int
) -> tuple[np.ndarray, np.ndarray]:
    """Zero-forcing equalization followed by nearest-neighbor slicing.

    Returns (equalized symbols, symbol indices), both (K, S).
    """
    x = pseudoinverse(h_hat) @ y_data / np.sqrt(rho)
    return x, qam_demodulate(x, order)
