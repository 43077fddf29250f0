"""Symbols, precoded frames, and the effective received signal.

Uplink frame model for K users over T symbol slots: user k sends the
augmented vector dbar_k = [pilot, d_k] / eta_k (unit norm, eta_k the
normalizer) spread by its own T x (S+1) precoder block Cbar_k, so

    Ybar = sqrt(rho) * sum_k h_k dbar_k^T Cbar_k^T + Z.

Precoder blocks are drawn once per frame as disjoint column groups of a
scaled unitary matrix, which makes the stacked precoder P = [Cbar_1 ...
Cbar_K] satisfy P^H P = T I and keeps per-user transmit energy exactly T.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatchError,
    InvalidOrderError,
    SeparabilityError,
    ZeroPilotEstimateError,
)
from .numkernel import pseudoinverse

QAM_ORDERS = (4, 16, 32, 64)


def _gray_decode(g: int) -> int:
    i = g
    shift = 1
    while (g >> shift) > 0:
        i ^= g >> shift
        shift += 1
    return i


def _square_qam(order: int) -> np.ndarray:
    side = int(round(np.sqrt(order)))
    half_bits = side.bit_length() - 1
    levels = 2.0 * np.arange(side) - side + 1.0
    scale = np.sqrt(np.mean(levels**2) * 2.0)
    pts = np.empty(order, dtype=np.complex128)
    for m in range(order):
        v_i, v_q = m >> half_bits, m & (side - 1)
        pts[m] = (levels[_gray_decode(v_i)] + 1j * levels[_gray_decode(v_q)]) / scale
    return pts


def _cross_qam32() -> np.ndarray:
    # 6x6 odd-coordinate grid minus the four outer corners, row-major scan.
    # Labeling is plain enumeration (not Gray); symbol-error metrics do not
    # depend on the bit labels.
    levels = np.array([-5.0, -3.0, -1.0, 1.0, 3.0, 5.0])
    pts = [
        re + 1j * im
        for re in levels
        for im in levels
        if not (abs(re) == 5.0 and abs(im) == 5.0)
    ]
    return np.asarray(pts) / np.sqrt(20.0)


def constellation(order: int) -> np.ndarray:
    """Unit-average-energy QAM constellation, indexed 0..order-1.

    Square orders (4, 16, 64) use per-axis Gray labeling; 32-QAM is the
    standard cross shape.
    """
    if order not in QAM_ORDERS:
        raise InvalidOrderError(f"unsupported QAM order {order}; choose from {QAM_ORDERS}")
    if order == 32:
        return _cross_qam32()
    return _square_qam(order)


def qam_modulate(indices: np.ndarray, order: int) -> np.ndarray:
    const = constellation(order)
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= order):
        raise InvalidOrderError(f"symbol indices out of range for order {order}")
    return const[indices]


def qam_demodulate(symbols: np.ndarray, order: int) -> np.ndarray:
    """Nearest-neighbor slicing; ties resolve to the lowest symbol index."""
    const = constellation(order)
    symbols = np.asarray(symbols, dtype=np.complex128)
    d2 = np.abs(symbols[..., None] - const) ** 2
    return np.argmin(d2, axis=-1)


@dataclass(frozen=True)
class FrameConfig:
    n_users: int
    coherence_len: int  # T
    data_len: int  # S
    qam_order: int
    rho: float = 1.0  # linear transmit SNR scale
    sigma2: float = 1.0  # per-entry noise variance
    pilot: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.n_users < 1 or self.data_len < 1 or self.coherence_len < 1:
            raise ConfigError("n_users, data_len, coherence_len must be positive")
        if self.qam_order not in QAM_ORDERS:
            raise InvalidOrderError(f"unsupported QAM order {self.qam_order}")
        if self.rho <= 0 or self.sigma2 < 0:
            raise ConfigError("rho must be positive and sigma2 nonnegative")
        if abs(self.pilot) == 0:
            raise ConfigError("pilot symbol must be nonzero")

    @property
    def block_len(self) -> int:
        return self.data_len + 1


@dataclass(frozen=True)
class AugmentedData:
    """Per-user payload: pilot prepended to S data symbols, normalized."""

    pilot: complex
    data_indices: np.ndarray  # (S,) ints
    data: np.ndarray  # (S,) constellation points
    dbar: np.ndarray  # (S+1,) unit-norm augmented vector
    eta: float  # normalizer, ||[pilot, data]||_2


def make_augmented_data(rng: np.random.Generator, cfg: FrameConfig) -> AugmentedData:
    indices = rng.integers(0, cfg.qam_order, size=cfg.data_len)
    data = qam_modulate(indices, cfg.qam_order)
    raw = np.concatenate(([cfg.pilot], data))
    eta = float(np.linalg.norm(raw))
    return AugmentedData(
        pilot=cfg.pilot, data_indices=indices, data=data, dbar=raw / eta, eta=eta
    )


@dataclass(eq=False)
class PrecoderSet:
    """Stacked per-user precoder blocks and the cached despreading transform."""

    concat: np.ndarray  # (T, K*(S+1))
    n_users: int

    def __post_init__(self):
        if self.concat.shape[1] % self.n_users != 0:
            raise DimensionMismatchError("precoder columns must split evenly across users")

    @property
    def block_len(self) -> int:
        return self.concat.shape[1] // self.n_users

    def block(self, k: int) -> np.ndarray:
        b = self.block_len
        return self.concat[:, k * b : (k + 1) * b]

    @cached_property
    def transform(self) -> np.ndarray:
        """Right-multiplier that undoes the spreading: (P^T)^+ = (P^+)^T."""
        return pseudoinverse(self.concat).T


def generate_precoders(rng: np.random.Generator, cfg: FrameConfig) -> PrecoderSet:
    """Draw the K precoder blocks as column groups of sqrt(T) * (unitary).

    Requires T >= K*(S+1) so the blocks can be linearly independent.
    """
    t, cols = cfg.coherence_len, cfg.n_users * cfg.block_len
    if t < cols:
        raise SeparabilityError(
            f"coherence_len {t} < n_users*(data_len+1) = {cols}; users not separable"
        )
    g = rng.standard_normal((t, cols)) + 1j * rng.standard_normal((t, cols))
    q, _ = np.linalg.qr(g, mode="reduced")
    return PrecoderSet(concat=q * np.sqrt(t), n_users=cfg.n_users)


@dataclass(eq=False)
class Frame:
    config: FrameConfig
    ybar: np.ndarray  # (N, T) received samples
    channels: list
    data: list[AugmentedData]
    precoders: PrecoderSet


def synthesize_frame(
    channels,
    data: list[AugmentedData],
    precoders: PrecoderSet,
    cfg: FrameConfig,
    rng: np.random.Generator | None = None,
) -> Frame:
    """Received frame Ybar = sqrt(rho) sum_k h_k dbar_k^T Cbar_k^T (+ noise).

    Pass ``rng=None`` for a noiseless frame; otherwise iid complex Gaussian
    noise with per-entry variance sigma2 is added.
    """
    if len(channels) != cfg.n_users or len(data) != cfg.n_users:
        raise DimensionMismatchError("need one channel and one payload per user")
    if precoders.n_users != cfg.n_users or precoders.block_len != cfg.block_len:
        raise DimensionMismatchError("precoder set does not match the frame config")
    n = channels[0].h.shape[0]
    ybar = np.zeros((n, cfg.coherence_len), dtype=np.complex128)
    for k in range(cfg.n_users):
        if channels[k].h.shape != (n,):
            raise DimensionMismatchError("all user channels must share the array size")
        ybar += np.outer(channels[k].h, data[k].dbar) @ precoders.block(k).T
    ybar *= np.sqrt(cfg.rho)
    if rng is not None and cfg.sigma2 > 0:
        scale = np.sqrt(cfg.sigma2 / 2.0)
        ybar += scale * (
            rng.standard_normal(ybar.shape) + 1j * rng.standard_normal(ybar.shape)
        )
    return Frame(config=cfg, ybar=ybar, channels=list(channels), data=list(data), precoders=precoders)


def effective_received(ybar: np.ndarray, precoders: PrecoderSet) -> list[np.ndarray]:
    """Per-user despread blocks Ybreve_k = Ybar (P^T)^+ sliced columnwise.

    In the noiseless case Ybreve_k = sqrt(rho) h_k dbar_k^T exactly.
    """
    if ybar.shape[1] != precoders.concat.shape[0]:
        raise DimensionMismatchError(
            f"frame has {ybar.shape[1]} slots, precoders expect {precoders.concat.shape[0]}"
        )
    yb = ybar @ precoders.transform
    b = precoders.block_len
    return [yb[:, k * b : (k + 1) * b] for k in range(precoders.n_users)]


def rescale_by_pilot(dbar_hat: np.ndarray, pilot: complex) -> np.ndarray:
    """Undo the unknown norm/phase of an augmented estimate via its pilot entry."""
    if abs(dbar_hat[0]) < 1e-12:
        raise ZeroPilotEstimateError("estimated pilot entry is numerically zero")
    return dbar_hat[1:] * (pilot / dbar_hat[0])


def detect_data(dbar_hat: np.ndarray, pilot: complex, order: int) -> np.ndarray:
    """Slice the data part of an augmented estimate to symbol indices."""
    return qam_demodulate(rescale_by_pilot(dbar_hat, pilot), order)


def dump_frame(frame: Frame, csv_path, json_path=None) -> None:
    """Write the raw frame samples (long CSV) plus a JSON config sidecar."""
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["antenna", "slot", "re", "im"])
        for i in range(frame.ybar.shape[0]):
            for t in range(frame.ybar.shape[1]):
                v = frame.ybar[i, t]
                writer.writerow([i, t, f"{v.real:.15g}", f"{v.imag:.15g}"])
    if json_path is not None:
        cfg = frame.config
        meta = {
            "n_antennas": frame.ybar.shape[0],
            "n_users": cfg.n_users,
            "coherence_len": cfg.coherence_len,
            "data_len": cfg.data_len,
            "qam_order": cfg.qam_order,
            "rho": cfg.rho,
            "sigma2": cfg.sigma2,
            "pilot": [cfg.pilot.real, cfg.pilot.imag],
        }
        with open(json_path, "w") as fh:
            json.dump(meta, fh, indent=2)
            fh.write("\n")
