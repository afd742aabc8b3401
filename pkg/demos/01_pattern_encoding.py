"""
Pattern-based encoding of a short trajectory
============================================

A motion-pattern bank is a set of short reference tracks. Encoding a
trajectory means measuring, for every segment of the trajectory, how far
it is from every pattern, and passing that through a learned log scale.
"""

# %%
import numpy as np

from socialpec.pec import MotionPatternBank, init_bank, pec_forward, pec_oracle

# Two hand-made patterns, both heading +x, and one observed segment close to the first.
segment = np.array([[10.0, 1.0], [20.0, 1.0]])
near = np.array([[10.0, 0.0], [20.0, 0.0]])
far = np.array([[50.0, 0.0], [60.0, 0.0]])

# %%
# A plain dot product prefers the pattern with the larger coordinates,
# even though it is the one further away.
print("dot product :", np.sum(segment * near), np.sum(segment * far))
print("distance sum:", np.linalg.norm(segment - near, axis=1).sum(),
      np.linalg.norm(segment - far, axis=1).sum())

# %%
# The distance-based response ranks them the other way round.
bank = MotionPatternBank(np.stack([near, far]), scale=np.ones(2), bias=np.zeros(2))
psi = pec_forward(segment, bank).data
print("responses   :", psi[0])

# %%
# A full-size bank on an 8-step history: one row per segment, one column per pattern.
rng = np.random.default_rng(0)
bank = init_bank(20, 2, rng)
history = np.cumsum(np.full((8, 2), [0.4, 0.05]), axis=0)
psi = pec_forward(history, bank).data
print("response grid:", psi.shape)
print("matches the scalar loop:", np.allclose(psi, pec_oracle(history, bank), atol=1e-12))
