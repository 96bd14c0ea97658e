"""Minimum-norm distribution of a desired load wrench to the cables."""

from dataclasses import dataclass, field

import numpy as np

from .errors import AllocationError
from .so3 import hat3


@dataclass
class AllocationGeometry:
    """Stacked distribution map P = [I ... I; hat(r_1) ... hat(r_n)].

    Caches (P P^T)^{-1} and the min-norm right inverse P^T (P P^T)^{-1}.
    """

    r: np.ndarray
    P: np.ndarray = field(init=False)
    PPT_inv: np.ndarray = field(init=False)
    P_pinv: np.ndarray = field(init=False)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        n = r.shape[0]
        P = np.zeros((6, 3 * n))
        for j in range(n):
            P[0:3, 3 * j:3 * j + 3] = np.eye(3)
            P[3:6, 3 * j:3 * j + 3] = hat3(r[j])
        if np.linalg.matrix_rank(P) < 6:
            raise AllocationError("distribution map P has rank below 6")
        self.r = r
        self.P = P
        self.PPT_inv = np.linalg.inv(P @ P.T)
        self.P_pinv = P.T @ self.PPT_inv

    @property
    def n_cables(self):
        return self.r.shape[0]

    @property
    def lambda_min_PPT(self):
        return float(np.min(np.linalg.eigvalsh(self.P @ self.P.T)))


def mu_distribution(F_des, M_des, R_L, geometry: AllocationGeometry):
    """Per-cable force targets mu_tilde with minimal Euclidean norm.

    Solves P diag(R_L^T) mu = [R_L^T F; M] exactly; returns shape (n, 3).
    """
    F_des = np.asarray(F_des, dtype=float)
    M_des = np.asarray(M_des, dtype=float)
    R_L = np.asarray(R_L, dtype=float)
    w = np.concatenate([R_L.T @ F_des, M_des])
    lam = geometry.P_pinv @ w
    n = geometry.n_cables
    mu = np.empty((n, 3))
    for j in range(n):
        mu[j] = R_L @ lam[3 * j:3 * j + 3]
    residual = geometry.P @ np.concatenate([R_L.T @ mu[j] for j in range(n)]) - w
    if np.linalg.norm(residual) > 1e-8 * max(1.0, np.linalg.norm(w)):
        raise AllocationError(
            f"allocation residual {np.linalg.norm(residual):.3e} too large"
        )
    return mu
