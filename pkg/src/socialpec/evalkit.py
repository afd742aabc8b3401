"""ADE/FDE, best-of-N selection and the constant-velocity baseline."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataio import Window

# published reference rows (meters), shown under evaluation tables for comparison
REFERENCE_ADE = {
    "Linear": {"ETH": 1.33, "Hotel": 0.39, "Univ": 0.82, "Zara1": 0.62, "Zara2": 0.77},
    "S-LSTM": {"ETH": 1.09, "Hotel": 0.79, "Univ": 0.67, "Zara1": 0.47, "Zara2": 0.56},
    "SGAN": {"ETH": 0.87, "Hotel": 0.67, "Univ": 0.76, "Zara1": 0.35, "Zara2": 0.42},
    "STSGN": {"ETH": 0.75, "Hotel": 0.63, "Univ": 0.48, "Zara1": 0.3, "Zara2": 0.26},
    "S-BiGAT": {"ETH": 0.69, "Hotel": 0.49, "Univ": 0.55, "Zara1": 0.3, "Zara2": 0.36},
    "S-STGCNN": {"ETH": 0.64, "Hotel": 0.49, "Univ": 0.44, "Zara1": 0.34, "Zara2": 0.3},
    "Social-PEC": {"ETH": 0.61, "Hotel": 0.31, "Univ": 0.47, "Zara1": 0.43, "Zara2": 0.35},
    "Social-PEC-GMM": {"ETH": 0.63, "Hotel": 0.32, "Univ": 0.42, "Zara1": 0.39, "Zara2": 0.28},
}
REFERENCE_FDE = {
    "Linear": {"ETH": 2.94, "Hotel": 0.72, "Univ": 1.59, "Zara1": 1.21, "Zara2": 1.48},
    "S-LSTM": {"ETH": 2.35, "Hotel": 1.76, "Univ": 1.4, "Zara1": 1.0, "Zara2": 1.17},
    "SGAN": {"ETH": 1.62, "Hotel": 1.37, "Univ": 1.52, "Zara1": 0.68, "Zara2": 0.84},
    "STSGN": {"ETH": 1.63, "Hotel": 1.01, "Univ": 1.08, "Zara1": 0.65, "Zara2": 0.57},
    "S-BiGAT": {"ETH": 1.29, "Hotel": 1.11, "Univ": 1.32, "Zara1": 0.62, "Zara2": 0.75},
    "S-STGCNN": {"ETH": 1.11, "Hotel": 0.85, "Univ": 0.79, "Zara1": 0.53, "Zara2": 0.48},
    "Social-PEC": {"ETH": 1.11, "Hotel": 0.52, "Univ": 0.82, "Zara1": 0.77, "Zara2": 0.6},
    "Social-PEC-GMM": {"ETH": 1.33, "Hotel": 0.5, "Univ": 0.75, "Zara1": 0.62, "Zara2": 0.55},
}


def _check(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 3 or pred.shape[-1] != 2:
        raise ValueError(f"prediction {pred.shape} and truth {truth.shape} must both be (M, T, 2)")
    return pred, truth


def ade(pred, truth) -> float:
    """Mean Euclidean error over all pedestrians and predicted steps, (M, T, 2) inputs."""
    pred, truth = _check(pred, truth)
    return float(np.mean(np.linalg.norm(pred - truth, axis=-1)))


def fde(pred, truth) -> float:
    """Mean over pedestrians of the final-step Euclidean error."""
    pred, truth = _check(pred, truth)
    return float(np.mean(np.linalg.norm(pred[:, -1] - truth[:, -1], axis=-1)))


def best_of_n(samples, truth, mode: str = "joint") -> tuple[float, float]:
    """Best of N scene-level samples.

    ``joint``: the ADE-minimizing sample's (ADE, FDE). ``independent``: the
    minimum ADE and the minimum FDE, possibly from different samples.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("best_of_n needs at least one sample")
    ades = np.array([ade(s, truth) for s in samples])
    fdes = np.array([fde(s, truth) for s in samples])
    if mode == "joint":
        i = int(np.argmin(ades))
        return float(ades[i]), float(fdes[i])
    if mode == "independent":
        return float(ades.min()), float(fdes.min())
    raise ValueError(f"unknown best-of-N mode {mode!r}")


def linear_baseline(positions, t_h: int = 8, t_pred: int | None = None) -> np.ndarray:
    """Constant-velocity continuation at the mean observed velocity -> (M, t_pred, 2)."""
    positions = np.asarray(positions, dtype=np.float64)
    t_pred = positions.shape[1] - t_h if t_pred is None else t_pred
    obs = positions[:, :t_h]
    vel = (obs[:, -1] - obs[:, 0]) / (t_h - 1)
    steps = np.arange(1, t_pred + 1)[None, :, None]
    return obs[:, -1:, :] + steps * vel[:, None, :]


@dataclass(frozen=True)
class MetricReport:
    dataset: str
    ade: float
    fde: float
    n_windows: int
    n_pedestrians: int
    protocol: str


Rollouts = Callable[[Window], list[np.ndarray]]


def evaluate(windows: list[Window], rollouts: Rollouts, dataset: str, t_h: int = 8,
             mode: str = "joint", protocol: str | None = None) -> MetricReport:
    """Pedestrian-weighted mean of per-window best-of-N ADE/FDE.

    ``rollouts(window)`` returns the N predicted (M, t_pred, 2) futures.
    """
    sum_ade = sum_fde = 0.0
    n_ped = 0
    n = None
    for w in windows:
        truth = w.positions[:, t_h:]
        samples = rollouts(w)
        n = len(samples)
        a, f = best_of_n(samples, truth, mode)
        M = truth.shape[0]
        sum_ade += a * M
        sum_fde += f * M
        n_ped += M
    if n_ped == 0:
        raise ValueError(f"no evaluation windows for {dataset}")
    tag = protocol or f"best-of-{n}"
    return MetricReport(dataset, sum_ade / n_ped, sum_fde / n_ped, len(windows), n_ped, tag)


def evaluate_linear(windows: list[Window], dataset: str, t_h: int = 8) -> MetricReport:
    return evaluate(windows, lambda w: [linear_baseline(w.positions, t_h)], dataset, t_h,
                    protocol="deterministic")


def write_reports_csv(reports: list[MetricReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "ade", "fde", "n_windows", "n_pedestrians", "protocol"])
        for r in reports:
            w.writerow([r.dataset, f"{r.ade:.6f}", f"{r.fde:.6f}", r.n_windows, r.n_pedestrians, r.protocol])


def format_table(reports: list[MetricReport], label: str = "This run", references: bool = True) -> str:
    """Aligned ADE/FDE table: one column per dataset plus the average."""
    names = [r.dataset for r in reports]
    lines = []
    for metric, refs in (("ADE", REFERENCE_ADE), ("FDE", REFERENCE_FDE)):
        header = f"{metric + ' (m)':<16}" + "".join(f"{n:>9}" for n in names) + f"{'Ave.':>9}"
        lines.append(header)
        lines.append("-" * len(header))
        vals = [getattr(r, metric.lower()) for r in reports]
        lines.append(f"{label:<16}" + "".join(f"{v:>9.2f}" for v in vals) + f"{np.mean(vals):>9.2f}")
        if references:
            for model, row in refs.items():
                if all(n in row for n in names):
                    ref = [row[n] for n in names]
                    lines.append(f"{model + ' (pub.)':<16}" + "".join(f"{v:>9.2f}" for v in ref)
                                 + f"{np.mean(ref):>9.2f}")
        lines.append("")
    return "\n".join(lines)
