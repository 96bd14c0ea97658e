"""State containers and the packed array layout used by the kernels.

Packed layout for n cables (98 floats for n = 4):

    [0:3]   x_L          [3:6]  v_L
    [6:15]  R_L row-major         [15:18] Om_L (body frame)
    [18 + 8j : 26 + 8j]  cable j: q (3), w (3), l (1), l_dot (1)
    [18 + 8n + 12j : ...]  quad j: R row-major (9), Om (3)

A reduced (inelastic) state packs into the same layout with l = L and
l_dot = 0 so that every kernel shares one vector format.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStateError
from .params import PhysicalParams
from .so3 import rotation_check, unit_check

CABLE_STRIDE = 8
QUAD_STRIDE = 12
HEADER = 18

W_TANGENT_TOL = 1e-9


def packed_size(n_cables):
    return HEADER + (CABLE_STRIDE + QUAD_STRIDE) * n_cables


def cable_offset(n_cables, j):
    return HEADER + CABLE_STRIDE * j


def quad_offset(n_cables, j):
    return HEADER + CABLE_STRIDE * n_cables + QUAD_STRIDE * j


def _identity_stack(n):
    return np.stack([np.eye(3) for _ in range(n)])


def _validate_common(x_L, v_L, R_L, Om_L, q, w, R_Q, Om_Q):
    for name, vec in (("x_L", x_L), ("v_L", v_L), ("Om_L", Om_L)):
        if vec.shape != (3,) or not np.all(np.isfinite(vec)):
            raise InvalidStateError(f"{name} must be a finite 3-vector")
    rotation_check(R_L)
    n = q.shape[0]
    for j in range(n):
        unit_check(q[j])
        if abs(float(q[j] @ w[j])) > W_TANGENT_TOL:
            raise InvalidStateError(
                f"cable {j}: w not tangent (q.w = {float(q[j] @ w[j]):.3e})"
            )
        rotation_check(R_Q[j])
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(Om_Q))):
        raise InvalidStateError("cable/quad rates must be finite")


@dataclass
class FullState:
    """30-DOF elastic-cable state (n = 4 cables)."""

    x_L: np.ndarray
    v_L: np.ndarray
    R_L: np.ndarray
    Om_L: np.ndarray
    q: np.ndarray        # (n, 3) unit cable directions, quad -> attachment
    w: np.ndarray        # (n, 3) cable angular velocities, w . q = 0
    l: np.ndarray        # (n,) cable lengths > 0
    l_dot: np.ndarray    # (n,) length rates
    R_Q: np.ndarray      # (n, 3, 3) quadrotor attitudes
    Om_Q: np.ndarray     # (n, 3) quadrotor body rates

    def __post_init__(self):
        for name in ("x_L", "v_L", "R_L", "Om_L", "q", "w", "l", "l_dot", "R_Q", "Om_Q"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        _validate_common(self.x_L, self.v_L, self.R_L, self.Om_L,
                         self.q, self.w, self.R_Q, self.Om_Q)
        if np.any(self.l <= 0.0):
            raise InvalidStateError("cable lengths must be positive")

    @property
    def n_cables(self):
        return self.q.shape[0]

    def pack(self):
        n = self.n_cables
        y = np.empty(packed_size(n))
        y[0:3] = self.x_L
        y[3:6] = self.v_L
        y[6:15] = self.R_L.reshape(9)
        y[15:18] = self.Om_L
        for j in range(n):
            o = cable_offset(n, j)
            y[o:o + 3] = self.q[j]
            y[o + 3:o + 6] = self.w[j]
            y[o + 6] = self.l[j]
            y[o + 7] = self.l_dot[j]
            p = quad_offset(n, j)
            y[p:p + 9] = self.R_Q[j].reshape(9)
            y[p + 9:p + 12] = self.Om_Q[j]
        return y

    @classmethod
    def unpack(cls, y, n_cables=4):
        n = n_cables
        q = np.empty((n, 3)); w = np.empty((n, 3))
        l = np.empty(n); ld = np.empty(n)
        R_Q = np.empty((n, 3, 3)); Om_Q = np.empty((n, 3))
        for j in range(n):
            o = cable_offset(n, j)
            q[j] = y[o:o + 3]
            w[j] = y[o + 3:o + 6]
            l[j] = y[o + 6]
            ld[j] = y[o + 7]
            p = quad_offset(n, j)
            R_Q[j] = np.asarray(y[p:p + 9]).reshape(3, 3)
            Om_Q[j] = y[p + 9:p + 12]
        return cls(x_L=y[0:3], v_L=y[3:6], R_L=np.asarray(y[6:15]).reshape(3, 3),
                   Om_L=y[15:18], q=q, w=w, l=l, l_dot=ld, R_Q=R_Q, Om_Q=Om_Q)

    @classmethod
    def hanging_rest(cls, params: PhysicalParams, x_L=(0.0, 0.0, 0.0), l=None):
        """All bodies at rest, cables straight down at length l (default L)."""
        n = params.n_cables
        l = params.L if l is None else l
        return cls(
            x_L=np.asarray(x_L, dtype=float), v_L=np.zeros(3), R_L=np.eye(3),
            Om_L=np.zeros(3),
            q=np.tile([0.0, 0.0, -1.0], (n, 1)), w=np.zeros((n, 3)),
            l=np.full(n, float(l)), l_dot=np.zeros(n),
            R_Q=_identity_stack(n), Om_Q=np.zeros((n, 3)),
        )


@dataclass
class ReducedState:
    """26-DOF inelastic-cable state: FullState minus cable lengths/rates."""

    x_L: np.ndarray
    v_L: np.ndarray
    R_L: np.ndarray
    Om_L: np.ndarray
    q: np.ndarray
    w: np.ndarray
    R_Q: np.ndarray
    Om_Q: np.ndarray

    def __post_init__(self):
        for name in ("x_L", "v_L", "R_L", "Om_L", "q", "w", "R_Q", "Om_Q"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        _validate_common(self.x_L, self.v_L, self.R_L, self.Om_L,
                         self.q, self.w, self.R_Q, self.Om_Q)

    @property
    def n_cables(self):
        return self.q.shape[0]

    def pack(self, L):
        """Packed vector with length slots pinned at l = L, l_dot = 0."""
        n = self.n_cables
        full = FullState(
            x_L=self.x_L, v_L=self.v_L, R_L=self.R_L, Om_L=self.Om_L,
            q=self.q, w=self.w, l=np.full(n, float(L)), l_dot=np.zeros(n),
            R_Q=self.R_Q, Om_Q=self.Om_Q,
        )
        return full.pack()

    @classmethod
    def unpack(cls, y, n_cables=4):
        full = FullState.unpack(y, n_cables)
        return cls(x_L=full.x_L, v_L=full.v_L, R_L=full.R_L, Om_L=full.Om_L,
                   q=full.q, w=full.w, R_Q=full.R_Q, Om_Q=full.Om_Q)

    @classmethod
    def hanging_rest(cls, params: PhysicalParams, x_L=(0.0, 0.0, 0.0)):
        n = params.n_cables
        return cls(
            x_L=np.asarray(x_L, dtype=float), v_L=np.zeros(3), R_L=np.eye(3),
            Om_L=np.zeros(3),
            q=np.tile([0.0, 0.0, -1.0], (n, 1)), w=np.zeros((n, 3)),
            R_Q=_identity_stack(n), Om_Q=np.zeros((n, 3)),
        )


@dataclass
class ControlInput:
    """Inertial-frame thrust vectors and body moments for each quadrotor."""

    u: np.ndarray  # (n, 3) N
    M: np.ndarray  # (n, 3) N m

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.M))):
            raise InvalidStateError("control input must be finite")

    @classmethod
    def zero(cls, n_cables=4):
        return cls(u=np.zeros((n_cables, 3)), M=np.zeros((n_cables, 3)))
