"""Optimize 6-direction gradient schemes two different ways.

Electrostatic repulsion spreads antipodal point pairs as evenly as
possible (for 6 axes the optimum is the icosahedron); minimizing the
design-matrix condition number instead optimizes the tensor fit and
lands on a different configuration.
"""
import numpy as np

from sphadc import schemes

rng = np.random.default_rng(11)

jones = schemes.optimize_jones(6, rng, restarts=8, iters=800)
print(f"jones6: energy = {schemes.electrostatic_energy(jones.dirs):.5f}, "
      f"kappa = {schemes.condition_number(jones):.4f}")
dots = np.abs(jones.dirs @ jones.dirs.T)
print("  pairwise |dot| (icosahedron gives 1/sqrt(5) = 0.4472):")
print(" ", np.round(np.sort(dots[~np.eye(6, dtype=bool)])[::2], 4))

skare = schemes.optimize_skare(6, rng, restarts=8, iters=400)
print(f"skare6: energy = {schemes.electrostatic_energy(skare.dirs):.5f}, "
      f"kappa = {schemes.condition_number(skare):.4f}")

print(f"\ncondition number: skare {schemes.condition_number(skare):.3f} "
      f"< jones {schemes.condition_number(jones):.3f}")

# Picking the 6 dense directions closest (as axes) to a target scheme.
dense_dirs = rng.standard_normal((30, 3))
dense_dirs /= np.linalg.norm(dense_dirs, axis=1, keepdims=True)
dense = schemes.GradientScheme(dense_dirs, b=1000.0, name="dense30")
idx = schemes.match_subset(dense, jones)
angles = [np.degrees(schemes.folded_angle(jones.dirs[i], dense.dirs[j]))
          for i, j in enumerate(idx)]
print(f"\nbest 6-of-30 match to jones6: indices {idx}")
print("  folded angles (deg):", np.round(angles, 1))
