"""Receiver noise, per-link SINR and the assignment objective.

Tensors are indexed ``[user][branch][AP][wavelength]``. A link's SINR counts
co-wavelength light from every *other* AP on the same receiver branch: as
interference when that AP/wavelength serves another user, otherwise as
background illumination.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_K = 1000.0
DEFAULT_THRESHOLD_DB = 13.8


def receiver_noise_variance(noise_density: float, bandwidth: float) -> float:
    """Mean-square receiver noise current (A^2) from a density in A/sqrt(Hz)."""
    if noise_density <= 0 or bandwidth <= 0:
        raise ValueError("noise density and bandwidth must be positive")
    return noise_density**2 * bandwidth


def to_db(linear):
    arr = np.asarray(linear, dtype=float)
    if np.any(arr <= 0):
        raise ValueError("dB conversion needs a positive linear value")
    out = 10.0 * np.log10(arr)
    return float(out) if out.ndim == 0 else out


def from_db(db):
    out = 10.0 ** (np.asarray(db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SinrParams:
    threshold_db: float = DEFAULT_THRESHOLD_DB
    K: float = DEFAULT_K

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError("K must be positive")

    @property
    def Z(self) -> float:
        return 10.0 ** (self.threshold_db / 10.0)


def _occupancy_bracket(S, u, b, lam):
    """Sum over other users m != u and all branches of S[m][g][b][lam]."""
    occ = 0
    for m in range(S.shape[0]):
        if m == u:
            continue
        for g in range(S.shape[1]):
            occ += S[m, g, b, lam]
    return occ


def sinr(R, N, S, sigma, u, f, a, lam) -> float:
    """SINR of one link, written term by term with explicit loops.

    This is the reference evaluation; :func:`sinr_tensor` must agree with it.
    """
    U, F, A, L = np.shape(S)
    if not (0 <= u < U and 0 <= f < F and 0 <= a < A and 0 <= lam < L):
        raise IndexError(f"link ({u}, {f}, {a}, {lam}) outside tensor of shape {(U, F, A, L)}")
    if S[u, f, a, lam] == 0:
        return 0.0
    interference = 0.0
    background = 0.0
    for b in range(A):
        if b == a:
            continue
        occ = _occupancy_bracket(S, u, b, lam)
        if occ > 1:
            raise ValueError(f"AP {b} wavelength {lam} assigned to more than one other user")
        for m in range(U):
            if m == u:
                continue
            for g in range(F):
                interference += R[u, f, b, lam] * S[m, g, b, lam]
        background += N[u, f, b, lam] * (1 - occ)
    return R[u, f, a, lam] * S[u, f, a, lam] / (interference + background + sigma)


def denominators(R, N, S, sigma) -> np.ndarray:
    """Interference-plus-noise term for every (u, f, a, lam), whether assigned or not.

    The value for a tuple does not depend on that tuple's own S entry, nor on
    the user's own links elsewhere.
    """
    S = np.asarray(S, dtype=float)
    per_slot = S.sum(axis=(0, 1))  # [a][lam]
    per_user_slot = S.sum(axis=1)  # [u][a][lam]
    others = per_slot[None, :, :] - per_user_slot  # occupancy by users other than u
    if np.any(others > 1):
        raise ValueError("an AP wavelength is assigned to more than one other user")
    # contribution of AP b at wavelength lam to user u's branch f
    contrib = R * others[:, None, :, :] + N * (1.0 - others[:, None, :, :])
    A = R.shape[2]
    off_diag = 1.0 - np.eye(A)
    return np.einsum("ufbl,ab->ufal", contrib, off_diag) + sigma


def sinr_tensor(R, N, S, sigma) -> np.ndarray:
    """Vectorised SINR over all links; zero where S is zero."""
    S = np.asarray(S)
    return np.where(S != 0, R * S / denominators(R, N, S, sigma), 0.0)


def objective_value(gammas, S, K: float = DEFAULT_K) -> float:
    gammas = np.asarray(gammas, dtype=float)
    S = np.asarray(S, dtype=float)
    if gammas.shape != S.shape:
        raise ValueError(f"shape mismatch: gammas {gammas.shape} vs S {S.shape}")
    return float(np.sum(gammas + K * S))
