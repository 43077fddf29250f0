"""Blind on-grid estimation: joint support recovery and rank-one factorization.

Works directly on the raw frame.  Each sweep correlates the residual frame
with every dictionary atom through the despreading transform, adds the
strongest atom to each user's support, refits all users' sparse coefficient
matrices by least squares, and recomputes the residual from scratch:

    R = Ybar - W Xi_hat P^T.

Afterwards each user's coefficient matrix Xi_hat_k (rows = atoms, columns =
pilot + data slots) is split into a polar gain vector and an augmented symbol
vector via its leading singular pair, and the pilot entry fixes the common
phase ambiguity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    ExhaustedError,
    MaxItersExceededError,
    NoConvergenceError,
    ZeroPilotEstimateError,
)
from .geometry import PolarDictionary
from .numkernel import principal_pair, pseudoinverse
from .waveform import PrecoderSet


@dataclass(frozen=True)
class KnownPaths:
    """Stop after exactly n_paths sweeps (one new atom per user per sweep)."""

    n_paths: int

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be >= 1, got {self.n_paths}")


@dataclass(frozen=True)
class ResidualThreshold:
    """Stop once ||R||_F^2 / ||Ybar||_F^2 <= eps1.

    ``max_iters=None`` caps the sweeps at min(Q, N); exceeding the cap raises
    MaxItersExceededError.
    """

    eps1: float = 0.05
    max_iters: int | None = None

    def __post_init__(self):
        if self.eps1 < 0:
            raise ConfigError("eps1 must be nonnegative")
        if self.max_iters is not None and self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1 when given")


def correlation(residual: np.ndarray, dictionary: PolarDictionary, precoders: PrecoderSet) -> np.ndarray:
    """Atom-by-slot correlation Gamma = W^H (R transform), shape (Q, K*(S+1))."""
    return dictionary.atoms.conj().T @ (residual @ precoders.transform)


def select_atom(gamma_k: np.ndarray, exclude) -> int:
    """Row of gamma_k with the largest energy, skipping ``exclude``.

    Ties resolve to the lowest index.  Raises ExhaustedError when every atom
    is excluded.
    """
    powers = np.sum(np.abs(gamma_k) ** 2, axis=1)
    powers[list(exclude)] = -1.0
    if np.all(powers < 0):
        raise ExhaustedError("no admissible atoms left")
    return int(np.argmax(powers))


def ls_update(y_breve_k: np.ndarray, dictionary: PolarDictionary, support) -> np.ndarray:
    """Row-sparse LS refit: rows in ``support`` get W_support^+ Ybreve_k."""
    support = list(support)
    xi = np.zeros((dictionary.n_atoms, y_breve_k.shape[1]), dtype=np.complex128)
    xi[support] = pseudoinverse(dictionary.atoms[:, support]) @ y_breve_k
    return xi


def update_residual(
    ybar: np.ndarray, xi_hats, dictionary: PolarDictionary, precoders: PrecoderSet
) -> np.ndarray:
    """Residual recomputed from scratch: R = Ybar - [W Xi_1 ... W Xi_K] P^T."""
    recon = np.hstack([dictionary.atoms @ xi for xi in xi_hats])
    return ybar - recon @ precoders.concat.T


def factorize_align(xi_k: np.ndarray, pilot: complex) -> tuple[np.ndarray, np.ndarray]:
    """Split Xi_hat_k ~= g dbar^T and fix the phase through the pilot entry.

    The leading singular pair comes from power iteration with a full-SVD
    fallback.  The returned pair satisfies g dbar^T == sigma1 u1 v1^H exactly
    and angle(dbar[0]) == angle(pilot).
    """
    try:
        sigma, u, v = principal_pair(xi_k)
    except NoConvergenceError:
        uu, ss, vh = np.linalg.svd(xi_k, full_matrices=False)
        sigma, u, v = float(ss[0]), uu[:, 0], vh[0].conj()
    g_tilde = sigma * u
    dbar_tilde = v.conj()
    if abs(dbar_tilde[0]) < 1e-12:
        raise ZeroPilotEstimateError("estimated pilot entry is numerically zero")
    chi = np.angle(pilot / dbar_tilde[0])
    return g_tilde * np.exp(-1j * chi), dbar_tilde * np.exp(1j * chi)


@dataclass(eq=False)
class BompUserEstimate:
    support: list[int]  # atoms in selection order
    xi_hat: np.ndarray  # (Q, S+1) row-sparse coefficient matrix
    g_hat: np.ndarray  # (Q,) polar-domain gains, phase-aligned
    dbar_hat: np.ndarray  # (S+1,) unit-norm augmented symbol estimate
    h_hat: np.ndarray  # (N,) channel estimate W g_hat


@dataclass(eq=False)
class BompOutput:
    users: list[BompUserEstimate]
    n_sweeps: int
    relative_residual: float
    residual_history: list[float]


def run_bomp(
    ybar: np.ndarray,
    dictionary: PolarDictionary,
    precoders: PrecoderSet,
    stop,
    pilot: complex = 1.0 + 0.0j,
    trace: list | None = None,
) -> BompOutput:
    """Blind sparse recovery over all users from the raw frame.

    Parameters
    ----------
    ybar : (N, T) received frame.
    stop : KnownPaths or ResidualThreshold.
    trace : optional list; appends one row per (sweep, user) with the chosen
        atom, its grid point, and the relative residual after the sweep.

    Notes
    -----
    Estimates inherit the frame's sqrt(rho) amplitude: in the noiseless case
    g_hat recovers sqrt(rho) times the true polar gains.  Symbol estimates
    are unaffected because the pilot ratio cancels any common scale.
    """
    n_users = precoders.n_users
    y_breve = ybar @ precoders.transform
    blocks = [
        y_breve[:, k * precoders.block_len : (k + 1) * precoders.block_len]
        for k in range(n_users)
    ]
    ybar_norm2 = float(np.real(np.vdot(ybar, ybar)))
    if ybar_norm2 == 0.0:
        raise ConfigError("received frame is identically zero")

    if isinstance(stop, KnownPaths):
        cap = stop.n_paths
    elif isinstance(stop, ResidualThreshold):
        cap = stop.max_iters if stop.max_iters is not None else min(
            dictionary.n_atoms, ybar.shape[0]
        )
    else:
        raise ConfigError(f"unsupported stop rule {stop!r}")

    supports: list[list[int]] = [[] for _ in range(n_users)]
    xi_hats = [
        np.zeros((dictionary.n_atoms, precoders.block_len), dtype=np.complex128)
        for _ in range(n_users)
    ]
    residual = ybar
    rel = 1.0
    history: list[float] = []
    sweeps = 0
    while True:
        sweeps += 1
        gamma = correlation(residual, dictionary, precoders)
        picked = []
        for k in range(n_users):
            gamma_k = gamma[:, k * precoders.block_len : (k + 1) * precoders.block_len]
            s = select_atom(gamma_k, supports[k])
            supports[k].append(s)
            picked.append(s)
            xi_hats[k] = ls_update(blocks[k], dictionary, supports[k])
        residual = update_residual(ybar, xi_hats, dictionary, precoders)
        rel = float(np.real(np.vdot(residual, residual))) / ybar_norm2
        history.append(rel)
        if trace is not None:
            for k, s in enumerate(picked):
                u = 0.0 if np.isinf(dictionary.distances[s]) else 1.0 / dictionary.distances[s]
                trace.append((sweeps, k, s, float(dictionary.angles[s]), u, rel))
        if isinstance(stop, KnownPaths):
            if sweeps >= stop.n_paths:
                break
        else:
            if rel <= stop.eps1:
                break
            if sweeps >= cap:
                raise MaxItersExceededError(
                    f"relative residual {rel:.3e} above eps1={stop.eps1:.3e} after {cap} sweeps"
                )

    users = []
    for k in range(n_users):
        g_hat, dbar_hat = factorize_align(xi_hats[k], pilot)
        sup = supports[k]
        h_hat = dictionary.atoms[:, sup] @ g_hat[sup]
        users.append(
            BompUserEstimate(
                support=sup, xi_hat=xi_hats[k], g_hat=g_hat, dbar_hat=dbar_hat, h_hat=h_hat
            )
        )
    return BompOutput(
        users=users, n_sweeps=sweeps, relative_residual=rel, residual_history=history
    )
