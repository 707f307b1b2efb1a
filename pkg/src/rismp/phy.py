"""MMSE receive combining, per-link SINR and achievable rate.

Array conventions used throughout the package:

* effective channels ``H``: (N, M, L), ``H[n, m]`` is UE n -> BS m
* powers ``p``: (N, M)
* combiners ``W``: (M, N, L), ``W[m, n]`` decodes UE n at BS m
"""
from __future__ import annotations

import numpy as np

from .numerics import hermitian_solve


def noise_power(noise_psd_dbm_hz: float, bandwidth_hz: float, noise_figure_db: float = 0.0) -> float:
    """Noise power in watts over ``bandwidth_hz``."""
    return 10.0 ** ((noise_psd_dbm_hz + noise_figure_db - 30.0) / 10.0) * bandwidth_hz


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def mmse_combiner(H_m: np.ndarray, p_m: np.ndarray, noise: float, n: int) -> np.ndarray:
    """Unit-norm MMSE combiner for UE ``n`` at one BS.

    ``H_m`` is (N, L) with the effective channels of all UEs at this BS.
    """
    L = H_m.shape[1]
    cov = (H_m.T * p_m) @ H_m.conj() + noise * np.eye(L)
    w = hermitian_solve(cov, H_m[n])
    return w / np.linalg.norm(w)


def mmse_combiners(H: np.ndarray, p: np.ndarray, noise: float) -> np.ndarray:
    N, M, L = H.shape
    W = np.empty((M, N, L), dtype=complex)
    eye = noise * np.eye(L)
    for m in range(M):
        Hm = H[:, m, :]
        cov = (Hm.T * p[:, m]) @ Hm.conj() + eye
        X = hermitian_solve(cov, Hm.T).T  # (N, L)
        W[m] = X / np.linalg.norm(X, axis=1, keepdims=True)
    return W


def link_gains(W: np.ndarray, H: np.ndarray) -> np.ndarray:
    """``a[m, n, j] = |w_{m,n}^H h_{j,m}|^2``, shape (M, N, N)."""
    proj = np.einsum("mnl,jml->mnj", W.conj(), H)
    return np.abs(proj) ** 2


def sinr(w: np.ndarray, H_m: np.ndarray, p_m: np.ndarray, noise: float, n: int) -> float:
    g = np.abs(H_m.conj() @ w) ** 2  # |w^H h_j|^2 for every j
    interference = float(np.dot(p_m, g) - p_m[n] * g[n])
    return float(p_m[n] * g[n] / (interference + noise * np.vdot(w, w).real))


def sinr_from_gains(a: np.ndarray, p: np.ndarray, noise_terms: np.ndarray) -> np.ndarray:
    """SINR (N, M) from ``link_gains`` output and per-combiner noise ``sigma^2 ||w||^2`` (M, N)."""
    pm = p.T  # (M, N)
    total = np.einsum("mnj,mj->mn", a, pm)
    own = np.einsum("mnn->mn", a) * pm
    return (own / (total - own + noise_terms)).T


def sinr_all(W: np.ndarray, H: np.ndarray, p: np.ndarray, noise: float) -> np.ndarray:
    a = link_gains(W, H)
    noise_terms = noise * np.sum(np.abs(W) ** 2, axis=-1)
    return sinr_from_gains(a, p, noise_terms)


def rate(gamma, bandwidth):
    """Shannon rate in bit/s."""
    return bandwidth * np.log2(1.0 + np.asarray(gamma))
