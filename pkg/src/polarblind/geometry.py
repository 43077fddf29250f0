"""Array geometry, near-field steering vectors, channels, and the polar grid.

The model is a uniform linear array whose reference element sits at index 0.
A source at angle theta (measured from broadside) and range r from the
reference element is seen by element n at range

    r_n = sqrt(r^2 + n^2 d^2 - 2 r n d sin(theta)),

and the steering vector collects the per-element phase lags exp(-j k (r_n - r))
with k = 2 pi / wavelength.  Letting r -> inf recovers the familiar planar
wavefront exp(+j k n d sin(theta)).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidGridError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array: element n sits at n * spacing along the axis."""

    n_antennas: int
    spacing: float
    wavelength: float

    def __post_init__(self):
        if self.n_antennas < 2:
            raise ConfigError(f"need at least 2 antennas, got {self.n_antennas}")
        if self.spacing <= 0 or self.wavelength <= 0:
            raise ConfigError("spacing and wavelength must be positive")

    @classmethod
    def half_wavelength(cls, n_antennas: int, wavelength: float) -> "ArrayGeometry":
        return cls(n_antennas, wavelength / 2.0, wavelength)

    @property
    def wavenumber(self) -> float:
        return TWO_PI / self.wavelength

    @property
    def aperture(self) -> float:
        return self.n_antennas * self.spacing


def fraunhofer_distance(geom: ArrayGeometry) -> float:
    """Far-field boundary 2 D^2 / wavelength with aperture D = N * spacing.

    At half-wavelength spacing this reduces to N^2 * wavelength / 2.
    """
    return 2.0 * geom.aperture**2 / geom.wavelength


def element_distance(geom: ArrayGeometry, theta: float, r: float, n) -> np.ndarray:
    """Source-to-element-n distance for a source at (theta, r).

    ``n`` may be an integer or an array of element indices.  The radicand is
    clamped at zero so that sources exactly on the array axis cannot produce
    a negative argument through roundoff.
    """
    n = np.asarray(n, dtype=np.float64)
    radicand = r * r + (n * geom.spacing) ** 2 - 2.0 * r * n * geom.spacing * np.sin(theta)
    return np.sqrt(np.maximum(radicand, 0.0))


def steering_vector(geom: ArrayGeometry, theta: float, r: float) -> np.ndarray:
    """Near-field steering vector for a source at (theta, r).

    Entry n is exp(-j k (r_n - r)); entry 0 is always exactly 1 and every
    entry has unit modulus, so the vector norm is sqrt(N).  ``r = inf``
    selects the planar-wavefront (far-field) limit.
    """
    n = np.arange(geom.n_antennas, dtype=np.float64)
    if np.isinf(r):
        return np.exp(1j * geom.wavenumber * n * geom.spacing * np.sin(theta))
    if not (r > 0.0):
        raise ValueError(f"source range must be positive or inf, got {r}")
    delta = element_distance(geom, theta, r, n) - r
    return np.exp(-1j * geom.wavenumber * delta)


def steering_matrix(geom: ArrayGeometry, theta, r) -> np.ndarray:
    """Columnwise steering vectors for arrays of finite source positions.

    Vectorized equivalent of stacking ``steering_vector`` calls; far-field
    columns (r = inf) are supported through the same planar limit.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    if theta.shape != r.shape:
        raise ValueError("theta and r must have matching lengths")
    if np.any(~(r > 0.0)):
        raise ValueError("source ranges must be positive or inf")
    n = np.arange(geom.n_antennas, dtype=np.float64)[:, None]
    sin_t = np.sin(theta)[None, :]
    far = np.isinf(r)
    rr = np.where(far, 1.0, r)[None, :]  # placeholder keeps the radicand finite
    radicand = rr * rr + (n * geom.spacing) ** 2 - 2.0 * rr * n * geom.spacing * sin_t
    delta = np.sqrt(np.maximum(radicand, 0.0)) - rr
    delta = np.where(far[None, :], -n * geom.spacing * sin_t, delta)
    return np.exp(-1j * geom.wavenumber * delta)


def steering_deriv_theta_matrix(geom: ArrayGeometry, theta, r) -> np.ndarray:
    """Columnwise derivatives of the steering vectors with respect to theta."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    if not np.all(np.isfinite(r)):
        raise ValueError("theta derivative requires finite source ranges")
    n = np.arange(geom.n_antennas, dtype=np.float64)[:, None]
    rn = np.sqrt(
        np.maximum(
            r[None, :] ** 2
            + (n * geom.spacing) ** 2
            - 2.0 * r[None, :] * n * geom.spacing * np.sin(theta)[None, :],
            0.0,
        )
    )
    b = steering_matrix(geom, theta, r)
    # d r_n / d theta = -r n d cos(theta) / r_n; entry 0 has r_0 = r.
    drn = -r[None, :] * n * geom.spacing * np.cos(theta)[None, :] / rn
    return -1j * geom.wavenumber * drn * b


def steering_deriv_theta(geom: ArrayGeometry, theta: float, r: float) -> np.ndarray:
    """Entrywise derivative of the steering vector with respect to theta."""
    return steering_deriv_theta_matrix(geom, [theta], [r])[:, 0]


def steering_deriv_inv_distance_matrix(geom: ArrayGeometry, theta, r) -> np.ndarray:
    """Columnwise derivatives of the steering vectors with respect to u = 1/r."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    if not np.all(np.isfinite(r)):
        raise ValueError("inverse-distance derivative requires finite source ranges")
    n = np.arange(geom.n_antennas, dtype=np.float64)[:, None]
    sin_t = np.sin(theta)[None, :]
    rr = r[None, :]
    rn = np.sqrt(np.maximum(rr**2 + (n * geom.spacing) ** 2 - 2.0 * rr * n * geom.spacing * sin_t, 0.0))
    b = steering_matrix(geom, theta, r)
    # With u = 1/r: d(r_n - r)/du = -r^2 d(r_n - r)/dr
    #             = -r^2 ((r - n d sin(theta)) / r_n - 1).
    d_delta_du = -rr * rr * ((rr - n * geom.spacing * sin_t) / rn - 1.0)
    return -1j * geom.wavenumber * d_delta_du * b


def steering_deriv_inv_distance(geom: ArrayGeometry, theta: float, r: float) -> np.ndarray:
    """Entrywise derivative of the steering vector with respect to u = 1/r."""
    return steering_deriv_inv_distance_matrix(geom, [theta], [r])[:, 0]


@dataclass(frozen=True)
class PathParams:
    """One propagation path: angle (rad), range (m), complex gain."""

    angle: float
    distance: float
    gain: complex


@dataclass(frozen=True)
class UserChannel:
    paths: tuple[PathParams, ...]
    h: np.ndarray  # (N,) complex

    @property
    def n_paths(self) -> int:
        return len(self.paths)


def channel_from_paths(geom: ArrayGeometry, paths) -> UserChannel:
    """Multipath channel h = (1/sqrt(L)) sum_l gain_l * b(theta_l, r_l)."""
    paths = tuple(paths)
    if not paths:
        raise ConfigError("a channel needs at least one path")
    h = np.zeros(geom.n_antennas, dtype=np.complex128)
    for p in paths:
        h += p.gain * steering_vector(geom, p.angle, p.distance)
    h /= np.sqrt(len(paths))
    return UserChannel(paths=paths, h=h)


def sample_user_channel(
    geom: ArrayGeometry,
    n_paths: int,
    angle_range: tuple[float, float],
    distance_range: tuple[float, float],
    rng: np.random.Generator,
) -> UserChannel:
    """Draw a channel with iid uniform path geometry and CN(0,1) gains.

    With unit-modulus steering entries this normalization gives
    E[||h||^2] = N regardless of L.
    """
    if n_paths < 1:
        raise ConfigError(f"n_paths must be >= 1, got {n_paths}")
    angles = rng.uniform(angle_range[0], angle_range[1], size=n_paths)
    dists = rng.uniform(distance_range[0], distance_range[1], size=n_paths)
    gains = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / np.sqrt(2.0)
    paths = [PathParams(float(a), float(d), complex(g)) for a, d, g in zip(angles, dists, gains)]
    return channel_from_paths(geom, paths)


@dataclass(frozen=True)
class PolarDictionary:
    """Polar-domain dictionary: steering vectors on an (angle, 1/range) grid.

    Columns are angle-major: column q = i_angle * samples_per_angle + i_dist.
    Far-field atoms are stored with distance inf (inverse distance 0).
    """

    geometry: ArrayGeometry
    atoms: np.ndarray  # (N, Q) complex
    angles: np.ndarray  # (Q,) per-atom angle
    distances: np.ndarray  # (Q,) per-atom range, inf allowed
    angle_grid: np.ndarray = field(repr=False)
    inv_distance_grid: np.ndarray = field(repr=False)

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]

    @property
    def samples_per_angle(self) -> int:
        return len(self.inv_distance_grid)

    def export_csv(self, path) -> None:
        """Write one row per atom: angle_rad, inv_distance_per_m, column_index."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["angle_rad", "inv_distance_per_m", "column_index"])
            for q in range(self.n_atoms):
                u = 0.0 if np.isinf(self.distances[q]) else 1.0 / self.distances[q]
                writer.writerow([f"{self.angles[q]:.10g}", f"{u:.10g}", q])


def build_polar_dictionary(
    geom: ArrayGeometry,
    samples_per_angle: int,
    r_min: float,
    include_far_field: bool = True,
) -> PolarDictionary:
    """Build the polar grid dictionary.

    Angles follow the critically-sampled grid theta_i = arcsin((2i - N + 1)/N)
    for i = 0..N-1.  Each angle carries ``samples_per_angle`` ranges spaced
    uniformly in u = 1/r between 0 (far field, included only when
    ``include_far_field``) and 1/r_min.
    """
    if samples_per_angle < 1:
        raise InvalidGridError(f"samples_per_angle must be >= 1, got {samples_per_angle}")
    if not (r_min > 0.0 and np.isfinite(r_min)):
        raise InvalidGridError(f"r_min must be positive and finite, got {r_min}")

    n = geom.n_antennas
    angle_grid = np.arcsin((2.0 * np.arange(n) - n + 1.0) / n)
    if include_far_field:
        u_grid = np.linspace(0.0, 1.0 / r_min, samples_per_angle)
    else:
        u_grid = np.linspace(0.0, 1.0 / r_min, samples_per_angle + 1)[1:]

    with np.errstate(divide="ignore"):
        r_grid = np.where(u_grid == 0.0, np.inf, 1.0 / u_grid)
    angles = np.repeat(angle_grid, samples_per_angle)
    distances = np.tile(r_grid, n)
    atoms = steering_matrix(geom, angles, distances)
    return PolarDictionary(
        geometry=geom,
        atoms=atoms,
        angles=angles,
        distances=distances,
        angle_grid=angle_grid,
        inv_distance_grid=u_grid,
    )
