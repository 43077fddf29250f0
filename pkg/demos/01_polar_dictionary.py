"""Where the near field begins and what the polar grid looks like.

Prints the Fraunhofer distance for a few array sizes, then builds the polar
dictionary for a 32-element array and reports its layout and coherence
structure.  Optionally saves a scatter of the grid in (angle, 1/r).
"""

import numpy as np

from polarblind.geometry import (
    ArrayGeometry,
    build_polar_dictionary,
    fraunhofer_distance,
    steering_vector,
)

WAVELENGTH = 0.003  # 100 GHz carrier

print("array size -> Fraunhofer distance 2 D^2 / lambda")
for n in (32, 64, 128, 256, 512):
    geom = ArrayGeometry.half_wavelength(n, WAVELENGTH)
    print(f"  N = {n:4d}   R_f = {fraunhofer_distance(geom):9.3f} m")
print("users tens of meters away from a large array sit inside the near field\n")

geom = ArrayGeometry.half_wavelength(32, WAVELENGTH)
r_f = fraunhofer_distance(geom)
dictionary = build_polar_dictionary(geom, samples_per_angle=6, r_min=r_f / 20.0)
print(f"polar grid: {geom.n_antennas} angles x {dictionary.samples_per_angle} ranges "
      f"= {dictionary.n_atoms} atoms")
print(f"range samples are uniform in 1/r from far field (inf) down to {r_f / 20.0:.3f} m")

# far-field vs near-field atom of the same angle: the phase curvature across
# the aperture is what the extra range dimension captures
q_far = 16 * dictionary.samples_per_angle
q_near = q_far + dictionary.samples_per_angle - 1
corr = abs(np.vdot(dictionary.atoms[:, q_far], dictionary.atoms[:, q_near])) / geom.n_antennas
print(f"same-angle far/near atom correlation: {corr:.3f} (1.0 would mean redundant)")

b = steering_vector(geom, 0.0, r_f / 20.0)
b_far = steering_vector(geom, 0.0, np.inf)
print(f"broadside element phases at r = R_f/20, degrees: "
      f"{np.round(np.angle(b[:6], deg=True), 1)} ...")
print(f"broadside far-field phases (flat wavefront):    "
      f"{np.round(np.angle(b_far[:6], deg=True), 1)} ...")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    finite = np.isfinite(dictionary.distances)
    ax.scatter(np.degrees(dictionary.angles[finite]), 1.0 / dictionary.distances[finite],
               s=6, label="near-field atoms")
    ax.scatter(np.degrees(dictionary.angles[~finite]),
               np.zeros(np.count_nonzero(~finite)), s=6, label="far-field atoms")
    ax.set_xlabel("angle [deg]")
    ax.set_ylabel("1 / r  [1/m]")
    ax.legend()
    fig.tight_layout()
    fig.savefig("polar_grid.png", dpi=120)
    print("saved polar_grid.png")
except ImportError:
    pass
