"""
Best-of-N scoring
=================

With N sampled futures the reported error is the best one. Joint
selection reports the ADE and FDE of the single sample with the lowest
ADE. Independent selection takes the lowest ADE and the lowest FDE
separately, so its FDE is never higher.
"""

# %%
import numpy as np

from socialpec.evalkit import ade, best_of_n, linear_baseline

rng = np.random.default_rng(5)
t = np.arange(20)[None, :, None] * 0.4
scene = np.array([[0.0, 0.0], [5.0, 1.0]])[:, None] + t * np.array([[1.0, 0.0], [-1.0, 0.2]])[:, None]
truth = scene[:, 8:]

# %%
samples = [truth + rng.normal(0, 0.3, truth.shape).cumsum(axis=1) for _ in range(20)]
for mode in ("joint", "independent"):
    a, f = best_of_n(samples, truth, mode)
    print(f"{mode:12s} ADE {a:.3f}  FDE {f:.3f}")

# %%
# The constant-velocity baseline is exact on noiseless straight lines.
print("linear baseline ADE:", ade(linear_baseline(scene), truth))
