"""Pure numpy versions of the compiled kernels (same signatures, same semantics)."""

from __future__ import annotations

import numpy as np


def convolve_direct(weights: np.ndarray, p_lo: int, rho: np.ndarray, scale: float) -> np.ndarray:
    n = rho.shape[0]
    full = np.convolve(rho, weights)
    idx = np.arange(n) - p_lo
    ok = (idx >= 0) & (idx < full.size)
    out = np.zeros(n)
    out[ok] = full[idx[ok]]
    return scale * out


def lf_step(rho: np.ndarray, vel: np.ndarray, lam: float):
    padded = np.pad(rho, ((0, 0), (1, 1)), mode="edge")
    flux = padded * np.pad(vel, ((0, 0), (1, 1)), mode="edge")
    out = 0.5 * (padded[:, :-2] + padded[:, 2:]) - 0.5 * lam * (flux[:, 2:] - flux[:, :-2])
    return out, rho[:, 0] * vel[:, 0], rho[:, -1] * vel[:, -1]


def interp_linear(values: np.ndarray, x: np.ndarray, x_lo: float, dx: float) -> np.ndarray:
    n = values.shape[1]
    pos = (x - x_lo) / dx - 0.5
    i0 = np.clip(np.floor(pos).astype(np.int64), 0, n - 2)
    th = np.clip(pos - i0, 0.0, 1.0)
    return values[:, i0] * (1.0 - th) + values[:, i0 + 1] * th
