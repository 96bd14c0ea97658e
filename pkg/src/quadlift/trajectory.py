"""Desired load trajectories and their sampled form.

A trajectory is a set of callables of time.  Load angular velocity and
acceleration may be omitted; they are then recovered by central finite
differences of the rotation function on a fine stencil.  Closed-loop runs
consume a :class:`DesiredSamples` table aligned with the integration grid,
so arbitrary Python callables stay out of the hot loop.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidStateError
from .so3 import rodrigues, rotation_log3

FD_STEP = 1e-5


@dataclass
class DesiredTrajectory:
    position: Callable
    velocity: Callable
    acceleration: Callable
    rotation: Callable
    ang_velocity: Optional[Callable] = None
    ang_acceleration: Optional[Callable] = None

    def ang_velocity_fd(self, t, h=FD_STEP):
        Ra = np.asarray(self.rotation(t - h))
        Rb = np.asarray(self.rotation(t + h))
        return rotation_log3(Ra.T @ Rb) / (2.0 * h)

    def ang_acceleration_fd(self, t, h=FD_STEP):
        wa = self.sampled_ang_velocity(t - 10 * h, h)
        wb = self.sampled_ang_velocity(t + 10 * h, h)
        return (wb - wa) / (20.0 * h)

    def sampled_ang_velocity(self, t, h=FD_STEP):
        if self.ang_velocity is not None:
            return np.asarray(self.ang_velocity(t), dtype=float)
        return self.ang_velocity_fd(t, h)

    def sampled_ang_acceleration(self, t, h=FD_STEP):
        if self.ang_acceleration is not None:
            return np.asarray(self.ang_acceleration(t), dtype=float)
        return self.ang_acceleration_fd(t, h)


@dataclass
class DesiredSamples:
    """Trajectory evaluated on the integration grid (row per step).

    j and ddW are the jerk and angular jerk, recovered by differencing the
    sampled acceleration rows (smooth functions of the trajectory alone);
    the controller needs them to differentiate its force targets.
    """

    t: np.ndarray
    x: np.ndarray    # (N, 3)
    v: np.ndarray
    a: np.ndarray
    R: np.ndarray    # (N, 9) row-major
    W: np.ndarray
    dW: np.ndarray
    j: np.ndarray
    ddW: np.ndarray


def _grid_derivative(t, arr):
    out = np.zeros_like(arr)
    if arr.shape[0] >= 3:
        out[1:-1] = (arr[2:] - arr[:-2]) / (t[2:] - t[:-2])[:, None]
        out[0] = out[1]
        out[-1] = out[-2]
    return out


def sample_trajectory(traj: DesiredTrajectory, times):
    times = np.asarray(times, dtype=float)
    N = times.shape[0]
    x = np.empty((N, 3)); v = np.empty((N, 3)); a = np.empty((N, 3))
    R = np.empty((N, 9)); W = np.empty((N, 3)); dW = np.empty((N, 3))
    for i, t in enumerate(times):
        x[i] = traj.position(t)
        v[i] = traj.velocity(t)
        a[i] = traj.acceleration(t)
        R[i] = np.asarray(traj.rotation(t), dtype=float).reshape(9)
        W[i] = traj.sampled_ang_velocity(t)
        dW[i] = traj.sampled_ang_acceleration(t)
    return DesiredSamples(t=times, x=x, v=v, a=a, R=R, W=W, dW=dW,
                          j=_grid_derivative(times, a),
                          ddW=_grid_derivative(times, dW))


def _velocity_frame(v, last_valid):
    """Rotation [v/|v|, e3 x v / |e3 x v|, e3]; holds last frame when the
    formula degenerates (slow or vertical desired velocity)."""
    nv = np.linalg.norm(v)
    c = np.array([-v[1], v[0], 0.0])  # e3 x v
    nc = np.linalg.norm(c)
    if nv < 1e-6 or nc < 1e-6:
        return last_valid
    b1 = v / nv
    # exactly [v/|v|, e3 x v/|e3 x v|, e3] for horizontal v; for a tilted v
    # keep b1 and re-orthogonalize so the frame stays in SO(3)
    b2 = c / nc
    b3 = np.cross(b1, b2)
    b3 /= np.linalg.norm(b3)
    b2 = np.cross(b3, b1)
    return np.column_stack([b1, b2, b3])


def figure_trajectory(amp_x=1.2, freq_x=0.4 * np.pi, amp_y=4.2,
                      freq_y=0.2 * np.pi, height=5.0):
    """Benchmark load trajectory: sinusoid in x, cosine in y, constant z,
    attitude aligned with the horizontal velocity direction."""

    def position(t):
        return np.array([amp_x * np.sin(freq_x * t),
                         amp_y * np.cos(freq_y * t), height])

    def velocity(t):
        return np.array([amp_x * freq_x * np.cos(freq_x * t),
                         -amp_y * freq_y * np.sin(freq_y * t), 0.0])

    def acceleration(t):
        return np.array([-amp_x * freq_x ** 2 * np.sin(freq_x * t),
                         -amp_y * freq_y ** 2 * np.cos(freq_y * t), 0.0])

    last = {"R": np.eye(3)}

    def rotation(t):
        R = _velocity_frame(velocity(t), last["R"])
        last["R"] = R
        return R

    return DesiredTrajectory(position=position, velocity=velocity,
                             acceleration=acceleration, rotation=rotation)


def hover_trajectory(point=(0.0, 0.0, 5.0), R=None):
    """Constant setpoint with fixed attitude."""
    point = np.asarray(point, dtype=float)
    R = np.eye(3) if R is None else np.asarray(R, dtype=float)
    zero = np.zeros(3)
    return DesiredTrajectory(
        position=lambda t: point, velocity=lambda t: zero,
        acceleration=lambda t: zero, rotation=lambda t: R,
        ang_velocity=lambda t: zero, ang_acceleration=lambda t: zero,
    )


def constant_rotation_trajectory(point, axis_rate):
    """Setpoint position with the attitude spinning at a constant body rate.

    Mostly a test fixture: the angular velocity is exact by construction.
    """
    point = np.asarray(point, dtype=float)
    axis_rate = np.asarray(axis_rate, dtype=float)
    zero = np.zeros(3)
    return DesiredTrajectory(
        position=lambda t: point, velocity=lambda t: zero,
        acceleration=lambda t: zero,
        rotation=lambda t: rodrigues(axis_rate * t),
        ang_velocity=lambda t: axis_rate,
        ang_acceleration=lambda t: zero,
    )


def check_frame_consistency(samples: DesiredSamples, tol=1e-3):
    """Verify R^T dR/dt matches hat(W) on the sampled grid (FD check)."""
    t = samples.t
    worst = 0.0
    for i in range(1, len(t) - 1):
        dt2 = t[i + 1] - t[i - 1]
        Ra = samples.R[i - 1].reshape(3, 3)
        Rb = samples.R[i + 1].reshape(3, 3)
        W_fd = rotation_log3(Ra.T @ Rb) / dt2
        worst = max(worst, float(np.max(np.abs(W_fd - samples.W[i]))))
    if worst > tol:
        raise InvalidStateError(
            f"desired frame inconsistent with angular velocity ({worst:.3e})"
        )
    return worst
