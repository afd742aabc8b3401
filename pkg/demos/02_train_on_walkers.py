"""
Training a small model on synthetic walkers
===========================================

Constant-velocity pedestrians with a little position noise are an easy
target: a trained model should recover the straight lines. This uses a
reduced network so the script finishes in well under a minute.
"""

# %%
from pathlib import Path

import numpy as np

from socialpec.diffcore import AdamConfig
from socialpec.encoder import EncoderConfig
from socialpec.evalkit import evaluate, evaluate_linear
from socialpec.predictor import LocPredictor, ModelConfig, init_params
from socialpec.svg import render_rollouts
from socialpec.synthetic import linear_walkers
from socialpec.train import TrainConfig, mean_nll, train
from socialpec.trajkit import Scene

rng = np.random.default_rng(1)
train_set, val_set = linear_walkers(60, rng), linear_walkers(10, rng)

model = ModelConfig(context=EncoderConfig(20, 2, 16, 2, 2), target=EncoderConfig(10, 2, 8, 2, 2),
                    hidden=(48, 24))
cfg = TrainConfig(epochs=10, batch_size=64, adam=AdamConfig(learning_rate=1e-3))

# %%
before = mean_nll(val_set, LocPredictor(model, init_params(model, np.random.default_rng(cfg.seed))))
best, report = train(train_set, cfg, model, val_set)
print(f"validation NLL {before:.2f} -> {min(report.val_nll):.2f} (best epoch {report.best_epoch})")

# %%
# Sampled rollouts against the constant-velocity baseline.
from socialpec.predictor import traj_predict

predictor = LocPredictor(model, best)
sample_rng = np.random.default_rng(0)
rollouts = lambda w: [r.predicted for r in traj_predict(Scene(w.positions[:, :8]), predictor, sample_rng, 5)]
print(evaluate(val_set, rollouts, "synthetic"))
print(evaluate_linear(val_set, "synthetic"))

# %%
# Draw one scene: observed history, dashed ground truth, faint samples.
w = val_set[0]
samples = [r.predicted for r in traj_predict(Scene(w.positions[:, :8]), predictor, sample_rng, 5)]
out = Path("walkers_scene.svg")
out.write_text(render_rollouts(w.positions[:, :8], samples, truth=w.positions[:, 8:], best=0))
print("wrote", out)
