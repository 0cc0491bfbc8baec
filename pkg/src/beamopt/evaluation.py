"""Paired SNR-sweep evaluation: every method sees identical channel
matrices and per-UE noise variances for each (sample, nominal SNR) pair.

Noise variances derive from the offsets stored in the dataset, so repeated
runs are bit-identical and need no extra randomness. Samples whose channel
Gram is singular for zero-forcing are dropped for *all* methods to keep
the comparison paired (with continuous channel draws this is a non-event).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import metrics
from .baselines import SingularChannelError, beamform_sample
from .channel import ChannelDataset, snr_db_to_noise_var
from .models import ModelConfig, ModelParams, forward_graph

CLASSICAL_METHODS = ("ZF", "MMSE")
NEURAL_METHODS = ("NNBF", "NNBF-P")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    method: str
    snr_db: float
    se_mean: float
    se_std: float
    n: int


def _classical_rates(ds: ChannelDataset, method: str, sigma2: np.ndarray,
                     p_max: float, threads: int = 1) -> np.ndarray:
    """Per-sample sum rates for a classical method; NaN marks dropped samples."""
    n_samples = len(ds)

    def one(i: int) -> float:
        try:
            bf = beamform_sample(ds.h[i], method, float(sigma2[i].mean()), p_max)
        except SingularChannelError:
            return float("nan")
        return metrics.weighted_sum_rate(metrics.sinr_per_ue(ds.h[i], bf, sigma2[i]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.array(list(pool.map(one, range(n_samples))))
    return np.array([one(i) for i in range(n_samples)])


def _neural_rates(ds: ChannelDataset, cfg: ModelConfig, params: ModelParams,
                  sigma2: np.ndarray, batch: int = 64) -> np.ndarray:
    rates = np.empty(len(ds))
    for start in range(0, len(ds), batch):
        h = ds.h[start:start + batch]
        wr, wi, p = forward_graph(h, params, cfg, training=False)
        rates[start:start + batch] = metrics.per_sample_sum_rates(
            wr.data, wi.data, h, p.data, sigma2[start:start + batch])
    return rates


def evaluate(dataset: ChannelDataset, snr_grid_db, methods,
             nn_models: dict | None = None, experiment: str = "",
             p_max: float | None = None, threads: int = 1) -> list[ResultRow]:
    """Mean/std spectral efficiency per (method, nominal SNR) on paired draws.

    nn_models maps 'NNBF'/'NNBF-P' to (ModelConfig, ModelParams) pairs for
    any requested neural methods.
    """
    nn_models = nn_models or {}
    for method in methods:
        if method in NEURAL_METHODS and method not in nn_models:
            raise ValueError(f"method {method} requested but no model supplied")
        if method not in CLASSICAL_METHODS + NEURAL_METHODS:
            raise ValueError(f"unknown method {method!r}")
    n_ue = dataset.shape[3]
    budget = float(n_ue) if p_max is None else float(p_max)

    rows: list[ResultRow] = []
    per_method: dict[str, dict[float, np.ndarray]] = {m: {} for m in methods}
    for snr_db in snr_grid_db:
        sigma2 = snr_db_to_noise_var(float(snr_db) + dataset.ue_snr_offset_db)
        for method in methods:
            if method in CLASSICAL_METHODS:
                per_method[method][snr_db] = _classical_rates(dataset, method, sigma2,
                                                              budget, threads)
            else:
                cfg, params = nn_models[method]
                per_method[method][snr_db] = _neural_rates(dataset, cfg, params, sigma2)

    for snr_db in snr_grid_db:
        valid = np.ones(len(dataset), dtype=bool)
        for method in methods:
            valid &= np.isfinite(per_method[method][snr_db])
        for method in methods:
            vals = per_method[method][snr_db][valid]
            if vals.size == 0:
                raise RuntimeError(f"no valid samples at {snr_db} dB")
            std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            rows.append(ResultRow(experiment=experiment, method=method,
                                  snr_db=float(snr_db), se_mean=float(vals.mean()),
                                  se_std=std, n=int(vals.size)))
    return rows
