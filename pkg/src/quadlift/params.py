"""Physical parameters of the load + cables + quadrotor assembly."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStateError

GRAVITY = 9.81


def _check_inertia(J, name):
    J = np.asarray(J, dtype=float)
    if J.shape != (3, 3):
        raise InvalidStateError(f"{name} must be 3x3, got {J.shape}")
    if np.max(np.abs(J - J.T)) > 1e-9:
        raise InvalidStateError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(J)) <= 0.0:
        raise InvalidStateError(f"{name} must be positive definite")
    return J


@dataclass(frozen=True)
class PhysicalParams:
    """Masses, inertias, attachment geometry and cable constants.

    ``k`` and ``c`` are the physical spring stiffness [N/m] and damping
    [N s/m] of the elastic cables; the stiff-cable scaling k = k_bar/eps^2,
    c = c_bar/eps is applied by the scenario harness, not here.
    """

    m_L: float = 2.0
    J_L: np.ndarray = field(default_factory=lambda: np.diag([1.04, 5.0, 4.04]))
    m_Q: float = 0.755
    J_Q: np.ndarray = field(default_factory=lambda: np.diag([0.02, 0.02, 0.04]))
    r: np.ndarray = field(
        default_factory=lambda: np.array(
            [
                [0.5, 1.0, 0.1],
                [0.5, -1.0, 0.1],
                [-0.5, -1.0, 0.1],
                [-0.5, 1.0, 0.1],
            ]
        )
    )
    L: float = 1.0
    k: float = 0.0
    c: float = 0.0
    g: float = GRAVITY

    def __post_init__(self):
        if self.m_L <= 0.0:
            raise InvalidStateError(f"m_L must be positive, got {self.m_L}")
        if self.m_Q <= 0.0:
            raise InvalidStateError(f"m_Q must be positive, got {self.m_Q}")
        if self.L <= 0.0:
            raise InvalidStateError(f"L must be positive, got {self.L}")
        if self.k < 0.0 or self.c < 0.0:
            raise InvalidStateError("cable stiffness/damping must be >= 0")
        object.__setattr__(self, "J_L", _check_inertia(self.J_L, "J_L"))
        object.__setattr__(self, "J_Q", _check_inertia(self.J_Q, "J_Q"))
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 2 or r.shape[1] != 3:
            raise InvalidStateError(f"attachment array must be (n, 3), got {r.shape}")
        object.__setattr__(self, "r", r)
        if np.min(np.linalg.svd(self.J_eff, compute_uv=False)) < 1e-12:
            raise InvalidStateError("effective inertia J_eff is singular")

    @property
    def n_cables(self):
        return self.r.shape[0]

    @property
    def m_eff(self):
        return self.n_cables * self.m_Q + self.m_L

    @property
    def J_eff(self):
        # J_L - sum_j m_Q hat(r_j)^2; hat(r)^2 = r r^T - |r|^2 I
        acc = np.array(self.J_L)
        for rj in self.r:
            acc -= self.m_Q * (np.outer(rj, rj) - float(rj @ rj) * np.eye(3))
        return acc

    def with_cable(self, k, c):
        """Copy with new physical stiffness/damping."""
        return PhysicalParams(
            m_L=self.m_L, J_L=self.J_L, m_Q=self.m_Q, J_Q=self.J_Q,
            r=self.r, L=self.L, k=float(k), c=float(c), g=self.g,
        )

    def pack(self):
        """Arrays consumed by the simulation kernels."""
        scal = np.array([self.m_L, self.m_Q, self.L, self.k, self.c, self.g])
        return (
            scal,
            np.ascontiguousarray(self.J_L),
            np.ascontiguousarray(np.linalg.inv(self.J_L)),
            np.ascontiguousarray(self.J_Q),
            np.ascontiguousarray(np.linalg.inv(self.J_Q)),
            np.ascontiguousarray(self.r),
        )
