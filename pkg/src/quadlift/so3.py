"""Coordinate-free primitives on SO(3) and the unit sphere.

Rotations, skew matrices and unit vectors are plain float64 ndarrays; the
``*_check`` / constructor helpers validate the invariants documented here:

* skew matrix:     S + S^T entrywise zero to 1e-12
* rotation matrix: R^T R = I entrywise to 1e-9, det R = 1 +/- 1e-9
* unit vector:     ||q|| = 1 +/- 1e-12 (constructor renormalizes up to 1e-6)

The @jit helpers at the top are shared with the simulation kernels.
"""

import numpy as np

from .backend import jit
from .errors import InvalidStateError

SKEW_TOL = 1e-12
ROT_TOL = 1e-9
UNIT_TOL = 1e-12
UNIT_CONSTRUCT_TOL = 1e-6

_EXP_SERIES_CUTOFF = 1e-6


@jit
def cross3(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@jit
def hat3(v):
    out = np.zeros((3, 3))
    out[0, 1] = -v[2]
    out[0, 2] = v[1]
    out[1, 0] = v[2]
    out[1, 2] = -v[0]
    out[2, 0] = -v[1]
    out[2, 1] = v[0]
    return out


@jit
def vee3(S):
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


@jit
def rodrigues(v):
    """exp of the skew matrix of v, series branch below the cutoff angle.

    1 - cos(t) is evaluated as 2 sin^2(t/2) so there is no cancellation for
    small angles; the series branch only guards the 0/0 of sin(t)/t.
    """
    t2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
    t = np.sqrt(t2)
    if t < _EXP_SERIES_CUTOFF:
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        a = np.sin(t) / t
        s = np.sin(0.5 * t)
        b = 2.0 * s * s / t2
    S = hat3(v)
    return np.eye(3) + a * S + b * (S @ S)


@jit
def rotation_log3(Q):
    """Axis-angle vector of a (near-)rotation Q with angle < pi.

    Robust for the small relative rotations produced by one integration
    step; not intended for angles at or beyond pi.
    """
    a = 0.5 * np.array([Q[2, 1] - Q[1, 2], Q[0, 2] - Q[2, 0], Q[1, 0] - Q[0, 1]])
    sn = np.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
    cs = 0.5 * (Q[0, 0] + Q[1, 1] + Q[2, 2] - 1.0)
    t = np.arctan2(sn, cs)
    if sn < 1e-12:
        return a
    return (t / sn) * a


def hat(v):
    """Skew matrix of a 3-vector, so that hat(v) @ w == cross(v, w)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise InvalidStateError(f"hat expects a 3-vector, got shape {v.shape}")
    return hat3(v)


def vee(S):
    """Inverse of :func:`hat`; rejects matrices that are not skew."""
    S = np.asarray(S, dtype=float)
    if S.shape != (3, 3):
        raise InvalidStateError(f"vee expects a 3x3 matrix, got shape {S.shape}")
    defect = np.max(np.abs(S + S.T))
    if defect > SKEW_TOL:
        raise InvalidStateError(f"vee input is not skew (defect {defect:.3e})")
    return vee3(S)


def so3_exp(v):
    """Rotation matrix exp(hat(v))."""
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise InvalidStateError(f"so3_exp expects a 3-vector, got shape {v.shape}")
    return rodrigues(v)


def project_so3(M):
    """Nearest rotation to M in Frobenius norm (polar factor via SVD)."""
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise InvalidStateError(f"project_so3 expects 3x3, got shape {M.shape}")
    if np.linalg.det(M) <= 0.0:
        raise InvalidStateError("project_so3 requires det M > 0")
    U, s, Vt = np.linalg.svd(M)
    if s[-1] <= 0.0:
        raise InvalidStateError("project_so3 input is singular")
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        # det M > 0 rules this out analytically; keep the guard for safety
        U[:, -1] = -U[:, -1]
        R = U @ Vt
    return R


def rotation_error(R, R_des):
    """Attitude tracking error 0.5 * vee(R_des^T R - R^T R_des)."""
    R = np.asarray(R, dtype=float)
    R_des = np.asarray(R_des, dtype=float)
    return 0.5 * vee3(R_des.T @ R - R.T @ R_des)


def attitude_psi(R, R_des):
    """Configuration error 0.5 * tr(I - R_des^T R), in [0, 2]."""
    R = np.asarray(R, dtype=float)
    R_des = np.asarray(R_des, dtype=float)
    return 0.5 * np.trace(np.eye(3) - R_des.T @ R)


def sphere_psi(q, q_des):
    """Configuration error 1 - q_des^T q on the sphere, in [0, 2]."""
    q = np.asarray(q, dtype=float)
    q_des = np.asarray(q_des, dtype=float)
    return 1.0 - float(q_des @ q)


def sphere_errors(q, w, q_des, w_des):
    """Direction/rate tracking errors (e_q, e_w) for one cable.

    e_q = q_des x q and e_w = w + hat(q)^2 w_des.  Requires the angular
    velocity convention w . q = 0 from q_dot = w x q.
    """
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    q_des = np.asarray(q_des, dtype=float)
    w_des = np.asarray(w_des, dtype=float)
    if abs(float(q @ w)) > 1e-9:
        raise InvalidStateError(
            f"cable angular velocity not tangent: q.w = {float(q @ w):.3e}"
        )
    e_q = cross3(q_des, q)
    qh = hat3(q)
    e_w = w + qh @ (qh @ w_des)
    return e_q, e_w


def unit_vector(v):
    """Return v normalized; rejects inputs whose norm is off by > 1e-6."""
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise InvalidStateError(f"unit_vector expects a 3-vector, got {v.shape}")
    n = np.linalg.norm(v)
    if abs(n - 1.0) > UNIT_CONSTRUCT_TOL:
        raise InvalidStateError(f"vector norm {n:.9f} too far from 1 to renormalize")
    return v / n


def rotation_check(R, tol=ROT_TOL):
    """Raise unless R satisfies the rotation-matrix invariants."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise InvalidStateError(f"rotation has shape {R.shape}")
    defect = np.max(np.abs(R.T @ R - np.eye(3)))
    if defect > tol:
        raise InvalidStateError(f"R^T R - I defect {defect:.3e} exceeds {tol:.1e}")
    det = np.linalg.det(R)
    if abs(det - 1.0) > tol:
        raise InvalidStateError(f"det R = {det:.12f} is not 1")
    return R


def unit_check(q, tol=UNIT_TOL):
    """Raise unless q is a unit vector to the stated tolerance."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if abs(n - 1.0) > tol:
        raise InvalidStateError(f"unit vector norm {n:.15f} off by > {tol:.1e}")
    return q
