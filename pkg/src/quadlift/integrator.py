"""Fixed-step integration that respects the SO(3) and sphere structure.

The stage combination runs in the ambient vector space; after each step the
state is retracted: rotation slots by a relative exponential (or a polar
projection), cable directions by renormalization, cable angular velocities
by tangent re-projection.  The closed-loop driver keeps the control update
at the integration rate with zero-order hold across the stages.
"""

from dataclasses import dataclass

import numpy as np

from .backend import jit
from .controller import GeometricController, control_kernel, diag_size, err_size
from .disturbance import DisturbanceSpec, eval_disturbance, zero_disturbance
from .dynamics_full import deriv_full
from .dynamics_reduced import deriv_reduced
from .errors import (
    DegenerateAllocationError,
    DegenerateAttitudeError,
    InvalidStateError,
    NumericalBlowupError,
)
from .params import PhysicalParams
from .so3 import rodrigues, rotation_log3
from .state import FullState, ReducedState, packed_size

MODEL_FLAGS = {"full": 0, "reduced": 1, "perturbed": 2}
SCHEME_FLAGS = {"rk4": 0, "euler": 1}
RETRACTION_FLAGS = {"lie_exp": 0, "project": 1}


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.002
    scheme: str = "rk4"
    retraction: str = "lie_exp"
    horizon: float = 40.0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise InvalidStateError("dt must be positive")
        if self.horizon < 0.0:
            raise InvalidStateError("horizon must be nonnegative")
        if self.scheme not in SCHEME_FLAGS:
            raise InvalidStateError(f"unknown scheme {self.scheme!r}")
        if self.retraction not in RETRACTION_FLAGS:
            raise InvalidStateError(f"unknown retraction {self.retraction!r}")

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))


@jit
def _retract_rotation(Rold_flat, Ramb_flat, mode, out_flat):
    Rold = Rold_flat.copy().reshape(3, 3)
    Ramb = Ramb_flat.copy().reshape(3, 3)
    if mode == 0:
        v = rotation_log3(Rold.T @ Ramb)
        Rnew = Rold @ rodrigues(v)
    else:
        U, s, Vt = np.linalg.svd(Ramb)
        Rnew = U @ Vt
        if np.linalg.det(Rnew) < 0.0:
            U[:, 2] = -U[:, 2]
            Rnew = U @ Vt
    for a in range(3):
        for b in range(3):
            out_flat[3 * a + b] = Rnew[a, b]


@jit
def retract_state(y_old, y_amb, n, mode, y_out):
    """Map the ambient step result back onto the state manifold."""
    y_out[0:6] = y_amb[0:6]
    _retract_rotation(y_old[6:15], y_amb[6:15], mode, y_out[6:15])
    y_out[15:18] = y_amb[15:18]
    for j in range(n):
        o = 18 + 8 * j
        q = y_amb[o:o + 3]
        nq = np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2])
        qn = q / nq
        w = y_amb[o + 3:o + 6]
        wt = w - qn * (qn @ w)
        y_out[o:o + 3] = qn
        y_out[o + 3:o + 6] = wt
        y_out[o + 6] = y_amb[o + 6]
        y_out[o + 7] = y_amb[o + 7]
        p = 18 + 8 * n + 12 * j
        _retract_rotation(y_old[p:p + 9], y_amb[p:p + 9], mode, y_out[p:p + 9])
        y_out[p + 9:p + 12] = y_amb[p + 9:p + 12]


@jit
def eval_deriv(y, u, M, scal, J_L, J_Li, J_Q, J_Qi, r_att, model,
               dist_terms, t, dy, T_out, dist_buf, T_zero):
    if model == 0:
        deriv_full(y, u, M, scal, J_L, J_Li, J_Q, J_Qi, r_att, T_zero, 0, dy)
    else:
        dist_buf[:] = 0.0
        if model == 2:
            eval_disturbance(t, dist_terms, dist_buf)
        deriv_reduced(y, u, M, scal, J_L, J_Q, J_Qi, r_att, dist_buf, dy, T_out)


@jit
def rk4_step(y, u, M, dt, t, model, scheme, retraction,
             scal, J_L, J_Li, J_Q, J_Qi, r_att, dist_terms,
             k1, k2, k3, k4, y_tmp, y_amb, T_out, dist_buf, T_zero, y_next):
    """One fixed step; k1 doubles as the acceleration estimate source."""
    n = r_att.shape[0]
    eval_deriv(y, u, M, scal, J_L, J_Li, J_Q, J_Qi, r_att, model,
               dist_terms, t, k1, T_out, dist_buf, T_zero)
    if scheme == 1:
        for i in range(y.shape[0]):
            y_amb[i] = y[i] + dt * k1[i]
    else:
        for i in range(y.shape[0]):
            y_tmp[i] = y[i] + 0.5 * dt * k1[i]
        eval_deriv(y_tmp, u, M, scal, J_L, J_Li, J_Q, J_Qi, r_att, model,
                   dist_terms, t + 0.5 * dt, k2, T_out, dist_buf, T_zero)
        for i in range(y.shape[0]):
            y_tmp[i] = y[i] + 0.5 * dt * k2[i]
        eval_deriv(y_tmp, u, M, scal, J_L, J_Li, J_Q, J_Qi, r_att, model,
                   dist_terms, t + 0.5 * dt, k3, T_out, dist_buf, T_zero)
        for i in range(y.shape[0]):
            y_tmp[i] = y[i] + dt * k3[i]
        eval_deriv(y_tmp, u, M, scal, J_L, J_Li, J_Q, J_Qi, r_att, model,
                   dist_terms, t + dt, k4, T_out, dist_buf, T_zero)
        c = dt / 6.0
        for i in range(y.shape[0]):
            y_amb[i] = y[i] + c * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    retract_state(y, y_amb, n, retraction, y_next)
    ok = 0
    for i in range(y.shape[0]):
        if not np.isfinite(y_next[i]):
            ok = 1
    return ok


@jit
def run_fixed_input(y0, N, dt, model, scheme, retraction,
                    scal, J_L, J_Li, J_Q, J_Qi, r_att, dist_terms,
                    u, M, states):
    """Open-loop rollout with constant inputs; records every step."""
    nx = y0.shape[0]
    n = r_att.shape[0]
    y = y0.copy()
    k1 = np.empty(nx); k2 = np.empty(nx); k3 = np.empty(nx); k4 = np.empty(nx)
    y_tmp = np.empty(nx); y_amb = np.empty(nx); y_next = np.empty(nx)
    T_out = np.empty(n)
    dist_buf = np.empty(6 + 3 * n)
    T_zero = np.zeros(n)
    for i in range(N + 1):
        states[i, :] = y
        if i == N:
            break
        bad = rk4_step(y, u, M, dt, i * dt, model, scheme, retraction,
                       scal, J_L, J_Li, J_Q, J_Qi, r_att, dist_terms,
                       k1, k2, k3, k4, y_tmp, y_amb, T_out, dist_buf, T_zero,
                       y_next)
        if bad != 0:
            return 2, i
        y[:] = y_next
    return 0, N


@jit
def run_replay(y0, N, dt, model, scheme, retraction,
               scal, J_L, J_Li, J_Q, J_Qi, r_att, dist_terms,
               u_seq, M_seq, states):
    """Open-loop rollout replaying a recorded input sequence."""
    nx = y0.shape[0]
    n = r_att.shape[0]
    y = y0.copy()
    k1 = np.empty(nx); k2 = np.empty(nx); k3 = np.empty(nx); k4 = np.empty(nx)
    y_tmp = np.empty(nx); y_amb = np.empty(nx); y_next = np.empty(nx)
    T_out = np.empty(n)
    dist_buf = np.empty(6 + 3 * n)
    T_zero = np.zeros(n)
    for i in range(N + 1):
        states[i, :] = y
        if i == N:
            break
        bad = rk4_step(y, u_seq[i], M_seq[i], dt, i * dt, model, scheme,
                       retraction, scal, J_L, J_Li, J_Q, J_Qi, r_att,
                       dist_terms, k1, k2, k3, k4, y_tmp, y_amb, T_out,
                       dist_buf, T_zero, y_next)
        if bad != 0:
            return 2, i
        y[:] = y_next
    return 0, N


@jit
def run_closed_loop(y0, N, dt, model, scheme, retraction, thrust_mode,
                    scal, J_L, J_Li, J_Q, J_Qi, r_att, P_pinv, gains, mu_min,
                    fd_caps, fd_lp, xd, vd, ad, jd, Rd, Wd, dWd, ddWd,
                    dist_terms,
                    states, u_log, M_log, err_log, diag_log):
    """Closed-loop rollout; controller runs once per step (zero-order hold).

    Returns (status, step): status 0 ok, 2 non-finite state, 11 degenerate
    force target, 12 degenerate thrust direction.
    """
    nx = y0.shape[0]
    n = r_att.shape[0]
    y = y0.copy()
    k1 = np.empty(nx); k2 = np.empty(nx); k3 = np.empty(nx); k4 = np.empty(nx)
    y_tmp = np.empty(nx); y_amb = np.empty(nx); y_next = np.empty(nx)
    T_out = np.empty(n)
    dist_buf = np.empty(6 + 3 * n)
    T_zero = np.zeros(n)
    u = np.empty((n, 3))
    M = np.empty((n, 3))
    accel_prev = np.zeros(6)
    Rdj_prev = np.zeros((n, 9))
    Wq_raw_prev = np.zeros((n, 3))
    wd_prev = np.zeros((n, 3))
    dwd_filt = np.zeros((n, 3))
    Wq_filt = np.zeros((n, 3))
    dWq_filt = np.zeros((n, 3))

    for i in range(N + 1):
        status = control_kernel(
            y, i, dt, xd[i], vd[i], ad[i], jd[i], Rd[i], Wd[i], dWd[i], ddWd[i],
            gains, scal, J_L, J_Q, r_att, P_pinv,
            Rdj_prev, Wq_raw_prev, accel_prev,
            wd_prev, dwd_filt, Wq_filt, dWq_filt,
            mu_min, fd_caps, fd_lp, thrust_mode,
            u, M, err_log[i], diag_log[i],
        )
        if status != 0:
            return 10 + status, i
        states[i, :] = y
        for j in range(n):
            for a in range(3):
                u_log[i, j, a] = u[j, a]
                M_log[i, j, a] = M[j, a]
        if i == N:
            break
        bad = rk4_step(y, u, M, dt, i * dt, model, scheme, retraction,
                       scal, J_L, J_Li, J_Q, J_Qi, r_att, dist_terms,
                       k1, k2, k3, k4, y_tmp, y_amb, T_out, dist_buf, T_zero,
                       y_next)
        accel_prev[0:3] = k1[3:6]
        accel_prev[3:6] = k1[15:18]
        if bad != 0:
            return 2, i
        y[:] = y_next
    return 0, N


@dataclass
class TrajectoryLog:
    """Arrays recorded by a rollout, one row per step (including t = 0)."""

    t: np.ndarray
    states: np.ndarray          # (N+1, nx) packed states
    u: np.ndarray               # (N+1, n, 3)
    M: np.ndarray               # (N+1, n, 3)
    errors: np.ndarray | None   # (N+1, err_size) closed loop only
    diagnostics: np.ndarray | None
    model: str
    n_cables: int
    dt: float
    desired: object = None

    @property
    def x_L(self):
        return self.states[:, 0:3]

    @property
    def v_L(self):
        return self.states[:, 3:6]

    @property
    def R_L(self):
        return self.states[:, 6:15]

    @property
    def Om_L(self):
        return self.states[:, 15:18]

    def cable(self, j):
        o = 18 + 8 * j
        return {
            "q": self.states[:, o:o + 3], "w": self.states[:, o + 3:o + 6],
            "l": self.states[:, o + 6], "l_dot": self.states[:, o + 7],
        }

    def quad(self, j):
        p = 18 + 8 * self.n_cables + 12 * j
        return {
            "R": self.states[:, p:p + 9], "Om": self.states[:, p + 9:p + 12],
        }

    def e_x(self):
        if self.errors is None:
            raise InvalidStateError("open-loop log has no tracking errors")
        return self.errors[:, 0:3]


def _model_flag(model):
    if model not in MODEL_FLAGS:
        raise InvalidStateError(f"unknown model {model!r}")
    return MODEL_FLAGS[model]


def step(state, inp, params: PhysicalParams, dt, model="full",
         scheme="rk4", retraction="lie_exp", disturbance=None, t=0.0):
    """Advance one state by a single fixed step; returns the same type."""
    is_full = isinstance(state, FullState)
    y = state.pack() if is_full else state.pack(params.L)
    scal, J_L, J_Li, J_Q, J_Qi, r_att = params.pack()
    n = params.n_cables
    dist_terms = (zero_disturbance(n) if disturbance is None else disturbance).terms
    nx = y.shape[0]
    k = [np.empty(nx) for _ in range(4)]
    y_tmp = np.empty(nx); y_amb = np.empty(nx); y_next = np.empty(nx)
    bad = rk4_step(
        y, np.asarray(inp.u, float), np.asarray(inp.M, float),
        float(dt), float(t), _model_flag(model), SCHEME_FLAGS[scheme],
        RETRACTION_FLAGS[retraction],
        scal, J_L, J_Li, J_Q, J_Qi, r_att, dist_terms,
        k[0], k[1], k[2], k[3], y_tmp, y_amb,
        np.empty(n), np.empty(6 + 3 * n), np.zeros(n), y_next,
    )
    if bad != 0:
        raise NumericalBlowupError("step produced non-finite state", step=0, time=t)
    return (FullState.unpack(y_next, n) if is_full
            else ReducedState.unpack(y_next, n))


def replay(initial_state, params: PhysicalParams, config: IntegratorConfig,
           u_seq, M_seq, model="full", disturbance: DisturbanceSpec = None):
    """Drive a model open loop with a recorded input sequence."""
    n = params.n_cables
    model_flag = _model_flag(model)
    is_full = isinstance(initial_state, FullState)
    y0 = initial_state.pack() if is_full else initial_state.pack(params.L)
    scal, J_L, J_Li, J_Q, J_Qi, r_att = params.pack()
    N = config.n_steps
    u_seq = np.ascontiguousarray(u_seq, dtype=float)
    M_seq = np.ascontiguousarray(M_seq, dtype=float)
    if u_seq.shape[0] < N + 1 or M_seq.shape[0] < N + 1:
        raise InvalidStateError("replay input sequence shorter than horizon")
    dist = zero_disturbance(n) if disturbance is None else disturbance
    states = np.empty((N + 1, y0.shape[0]))
    status, last = run_replay(
        y0, N, config.dt, model_flag, SCHEME_FLAGS[config.scheme],
        RETRACTION_FLAGS[config.retraction],
        scal, J_L, J_Li, J_Q, J_Qi, r_att, dist.terms, u_seq, M_seq, states)
    if status == 2:
        raise NumericalBlowupError(
            f"replay diverged at step {last} (t = {last * config.dt:.4f} s)",
            step=last, time=last * config.dt)
    return TrajectoryLog(
        t=np.arange(N + 1) * config.dt, states=states, u=u_seq[:N + 1],
        M=M_seq[:N + 1], errors=None, diagnostics=None,
        model=model, n_cables=n, dt=config.dt, desired=None)


def simulate(initial_state, params: PhysicalParams, config: IntegratorConfig,
             model="reduced", controller: GeometricController = None,
             desired_samples=None, disturbance: DisturbanceSpec = None,
             fixed_input=None):
    """Fixed-step rollout over the configured horizon.

    Closed loop when a controller and sampled desired trajectory are given;
    otherwise open loop with the supplied constant input.  Returns a
    TrajectoryLog with one record per step, t = 0 included.
    """
    n = params.n_cables
    model_flag = _model_flag(model)
    is_full = isinstance(initial_state, FullState)
    if model_flag == 0 and not is_full:
        raise InvalidStateError("full model needs a FullState initial state")
    y0 = initial_state.pack() if is_full else initial_state.pack(params.L)
    if y0.shape[0] != packed_size(n):
        raise InvalidStateError("state and params disagree on cable count")
    scal, J_L, J_Li, J_Q, J_Qi, r_att = params.pack()
    N = config.n_steps
    dist = zero_disturbance(n) if disturbance is None else disturbance
    if model == "perturbed" and disturbance is None:
        raise InvalidStateError("perturbed model needs a disturbance spec")

    states = np.empty((N + 1, y0.shape[0]))
    u_log = np.zeros((N + 1, n, 3))
    M_log = np.zeros((N + 1, n, 3))
    t_grid = np.arange(N + 1) * config.dt

    try:
        if controller is None:
            if fixed_input is None:
                u = np.zeros((n, 3))
                M = np.zeros((n, 3))
            else:
                u = np.asarray(fixed_input.u, float)
                M = np.asarray(fixed_input.M, float)
            status, last = run_fixed_input(
                y0, N, config.dt, model_flag, SCHEME_FLAGS[config.scheme],
                RETRACTION_FLAGS[config.retraction],
                scal, J_L, J_Li, J_Q, J_Qi, r_att, dist.terms, u, M, states)
            u_log[:] = u
            M_log[:] = M
            err_log = None
            diag_log = None
        else:
            if desired_samples is None:
                raise InvalidStateError("closed loop needs sampled desired trajectory")
            if desired_samples.x.shape[0] < N + 1:
                raise InvalidStateError("desired samples shorter than the horizon")
            err_log = np.empty((N + 1, err_size(n)))
            diag_log = np.empty((N + 1, diag_size(n)))
            status, last = run_closed_loop(
                y0, N, config.dt, model_flag, SCHEME_FLAGS[config.scheme],
                RETRACTION_FLAGS[config.retraction],
                1 if controller.thrust_mode == "projected" else 0,
                scal, J_L, J_Li, J_Q, J_Qi, r_att,
                controller.geometry.P_pinv, controller.gains.pack(),
                controller.mu_min, controller.fd_caps,
                controller.lp_weight(config.dt),
                desired_samples.x, desired_samples.v, desired_samples.a,
                desired_samples.j,
                desired_samples.R, desired_samples.W, desired_samples.dW,
                desired_samples.ddW,
                dist.terms,
                states, u_log, M_log, err_log, diag_log)
    except np.linalg.LinAlgError as exc:
        # solve inside the kernels hit NaNs before the per-step guard
        raise NumericalBlowupError(f"integration diverged ({exc})") from exc

    if status == 2:
        raise NumericalBlowupError(
            f"integration diverged at step {last} (t = {last * config.dt:.4f} s)",
            step=last, time=last * config.dt)
    if status == 11:
        raise DegenerateAllocationError(
            f"force target degenerate at step {last}")
    if status == 12:
        raise DegenerateAttitudeError(
            f"thrust direction degenerate at step {last}")

    return TrajectoryLog(
        t=t_grid, states=states, u=u_log, M=M_log,
        errors=err_log, diagnostics=diag_log,
        model=model, n_cables=n, dt=config.dt, desired=desired_samples)
