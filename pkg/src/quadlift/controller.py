"""Geometric load-tracking controller.

Pipeline per control step: load tracking errors -> desired wrench
(F_des, M_des) -> min-norm per-cable force targets mu_tilde -> desired cable
directions -> cable-parallel and cable-perpendicular thrust components ->
desired quadrotor attitudes -> inner-loop body moments.

Two quantities have no closed form once feedback enters the force targets
and are estimated numerically:

* the load accelerations inside a_j come from the previous integration
  step's dynamics evaluation (one-step lag);
* the desired cable direction rates are differentiated ANALYTICALLY
  through the allocation chain (the error derivatives are all available in
  closed form once the lagged accelerations stand in for v_dot, Om_dot),
  so w_des is smooth in the time step; the desired cable angular
  accelerations take one further backward difference of that smooth
  signal, low-passed with time constant fd_tau; the quadrotor attitude
  rates come from differencing the desired frames the same way.

The analytic first derivative matters: the cable loop must chase the
swinging force targets during large transients (without rate estimates it
stalls a quarter turn behind them and whirls), while numerically
differentiating the feedback-carrying targets twice closes a 1/dt^2
discrete loop through the allocation that sits at the edge of stability
at the benchmark time step.  All rate estimates are norm-capped at
(wd_max, dwd_max) as a final guard.
"""

from dataclasses import dataclass

import numpy as np

from .allocation import AllocationGeometry
from .backend import jit
from .errors import (
    DegenerateAllocationError,
    DegenerateAttitudeError,
    InvalidStateError,
)
from .params import PhysicalParams
from .so3 import cross3, hat3, rotation_log3, rotation_error, sphere_errors
from .state import ControlInput

MU_MIN = 1e-6
THRUST_MIN = 1e-9


@dataclass(frozen=True)
class GainSet:
    """Outer-loop and quadrotor-attitude-loop gains; all positive."""

    k_xL: float
    k_vL: float
    k_RL: float
    k_OmL: float
    k_q: float
    k_w: float
    k_Rj: float = 3.0
    k_Omj: float = 0.5
    eps_att: float = 1.0

    def __post_init__(self):
        for name in ("k_xL", "k_vL", "k_RL", "k_OmL", "k_q", "k_w",
                     "k_Rj", "k_Omj", "eps_att"):
            if getattr(self, name) <= 0.0:
                raise InvalidStateError(f"gain {name} must be positive")

    def scaled(self, factor):
        """Outer-loop gains multiplied by a common factor."""
        return GainSet(
            k_xL=self.k_xL * factor, k_vL=self.k_vL * factor,
            k_RL=self.k_RL * factor, k_OmL=self.k_OmL * factor,
            k_q=self.k_q * factor, k_w=self.k_w * factor,
            k_Rj=self.k_Rj, k_Omj=self.k_Omj, eps_att=self.eps_att,
        )

    def pack(self):
        return np.array([self.k_xL, self.k_vL, self.k_RL, self.k_OmL,
                         self.k_q, self.k_w, self.k_Rj, self.k_Omj,
                         self.eps_att])


@dataclass
class TrackingErrors:
    e_x: np.ndarray
    e_v: np.ndarray
    e_R: np.ndarray
    e_Om: np.ndarray
    e_q: np.ndarray    # (n, 3)
    e_w: np.ndarray    # (n, 3)
    e_R_quad: np.ndarray | None = None
    e_Om_quad: np.ndarray | None = None


def load_errors(x, v, R, Om, xd, vd, Rd, Wd):
    """Position/velocity/attitude/rate errors of the load."""
    e_x = np.asarray(x, float) - np.asarray(xd, float)
    e_v = np.asarray(v, float) - np.asarray(vd, float)
    e_R = rotation_error(R, Rd)
    e_Om = (np.asarray(Om, float)
            - np.asarray(R, float).T @ np.asarray(Rd, float) @ np.asarray(Wd, float))
    return e_x, e_v, e_R, e_Om


def wrench_targets(e_x, e_v, e_R, e_Om, R_L, Rd, Wd, dWd, vd_dot, gains: GainSet,
                   params: PhysicalParams):
    """Desired net force on the load and body-frame moment about it."""
    g_e3 = np.array([0.0, 0.0, params.g])
    F = params.m_L * (-gains.k_xL * e_x - gains.k_vL * e_v + vd_dot + g_e3)
    E = np.asarray(R_L, float).T @ np.asarray(Rd, float)
    EW = E @ np.asarray(Wd, float)
    M = (-gains.k_RL * e_R - gains.k_OmL * e_Om
         + np.cross(EW, params.J_L @ EW) + params.J_L @ (E @ np.asarray(dWd, float)))
    return F, M


def desired_cable_attitudes(mu, mu_min=MU_MIN):
    """Unit directions opposite each distributed force target."""
    mu = np.asarray(mu, dtype=float)
    out = np.empty_like(mu)
    for j in range(mu.shape[0]):
        nm = np.linalg.norm(mu[j])
        if nm <= mu_min:
            raise DegenerateAllocationError(
                f"cable {j} force target {nm:.3e} N below floor {mu_min:.1e}"
            )
        out[j] = -mu[j] / nm
    return out


def cable_controls(q, w, mu, q_des, w_des, dw_des, a_est, gains: GainSet,
                   params: PhysicalParams):
    """Thrust split u = u_par + u_perp for every cable.

    a_est is the gravity-augmented attachment acceleration per cable,
    a_j = v_dot + g e3 + R_L(Om^2 + Om_dot^)r_j, from the caller's
    acceleration estimate.
    """
    n = q.shape[0]
    u_par = np.empty((n, 3))
    u_perp = np.empty((n, 3))
    mQ = params.m_Q
    L = params.L
    for j in range(n):
        qj = q[j]
        wj = w[j]
        aj = a_est[j]
        e_q, e_w = sphere_errors(qj, wj, q_des[j], w_des[j])
        q_dot = cross3(wj, qj)
        u_par[j] = qj * (qj @ mu[j] + mQ * L * (wj @ wj) + mQ * (qj @ aj))
        inner = (-gains.k_q * e_q - gains.k_w * e_w - (qj @ w_des[j]) * q_dot
                 + (dw_des[j] - qj * (qj @ dw_des[j])))
        u_perp[j] = mQ * L * cross3(qj, inner) + mQ * (aj - qj * (qj @ aj))
    return u_par, u_perp


def desired_quad_attitude(u, yaw_ref=0.0):
    """Rotation whose third column is u/|u|, first column set by yaw."""
    u = np.asarray(u, dtype=float)
    nu = np.linalg.norm(u)
    if nu <= THRUST_MIN:
        raise DegenerateAttitudeError("thrust vector too small to orient")
    b3 = u / nu
    b1c = np.array([np.cos(yaw_ref), np.sin(yaw_ref), 0.0])
    proj = b1c - b3 * (b3 @ b1c)
    if np.linalg.norm(proj) < 1e-8:
        proj = np.array([-np.sin(yaw_ref), np.cos(yaw_ref), 0.0])
        proj = proj - b3 * (b3 @ proj)
    b1 = proj / np.linalg.norm(proj)
    b2 = cross3(b3, b1)
    return np.column_stack([b1, b2, b3])


def moment_control(R, Om, R_des, W_des, dW_des, gains: GainSet,
                   params: PhysicalParams):
    """Inner-loop moment for one quadrotor."""
    R = np.asarray(R, float)
    Om = np.asarray(Om, float)
    e_R = rotation_error(R, R_des)
    E = R.T @ np.asarray(R_des, float)
    e_Om = Om - E @ np.asarray(W_des, float)
    eps = gains.eps_att
    J = params.J_Q
    return (-(gains.k_Rj / eps ** 2) * e_R - (gains.k_Omj / eps) * e_Om
            + np.cross(Om, J @ Om)
            - J @ (hat3(Om) @ (E @ np.asarray(W_des, float))
                   - E @ np.asarray(dW_des, float)))


# --- packed control-step kernel used inside the simulation loop ----------

# err vector layout: e_x 0:3 | e_v 3:6 | e_R 6:9 | e_Om 9:12
#                    e_q 12:12+3n | e_w 12+3n:12+6n
# diag vector layout:
#   F 0:3 | M 3:6 | then 3n-blocks mu, q_des, u_par, u_perp, w_des, dw_des
#   | psi_R | psi_q (n entries)
def err_size(n):
    return 12 + 6 * n


def diag_size(n):
    return 6 + 18 * n + 1 + n


@jit
def control_kernel(y, n_step, dt, xd, vd, ad, jd, Rd9, Wd, dWd, ddWd,
                   gains, scal, J_L, J_Q, r_att, P_pinv,
                   Rdj_prev, Wq_raw_prev, accel_prev,
                   wd_prev, dwd_filt, Wq_filt, dWq_filt,
                   mu_min, fd_caps, fd_lp, thrust_mode,
                   u_out, M_out, err, diag):
    """One evaluation of the control pipeline on packed state y.

    jd/ddWd are the sampled desired jerk and angular jerk; fd_lp =
    dt/(fd_tau + dt) is the low-pass weight for the differenced rate
    estimates and fd_caps = (wd_max, dwd_max) saturates all of them.
    Returns 0 on success, 1 on a degenerate force target, 2 on a
    degenerate thrust direction.  Mutates the history/filter caches.
    """
    m_L = scal[0]
    m_Q = scal[1]
    L0 = scal[2]
    g = scal[5]
    n = r_att.shape[0]

    k_x = gains[0]; k_v = gains[1]; k_R = gains[2]; k_Om = gains[3]
    k_q = gains[4]; k_w = gains[5]; k_Rj = gains[6]; k_Omj = gains[7]
    eps_att = gains[8]

    R_L = y[6:15].copy().reshape(3, 3)
    Om = y[15:18]
    Rd = Rd9.copy().reshape(3, 3)

    e_x = y[0:3] - xd
    e_v = y[3:6] - vd
    E = R_L.T @ Rd
    e_R = 0.5 * np.array([E[1, 2] - E[2, 1], E[2, 0] - E[0, 2], E[0, 1] - E[1, 0]])
    EW = E @ Wd
    e_Om = Om - EW

    g_e3 = np.zeros(3)
    g_e3[2] = g
    F = m_L * (-k_x * e_x - k_v * e_v + ad + g_e3)
    Mw = (-k_R * e_R - k_Om * e_Om + cross3(EW, J_L @ EW) + J_L @ (E @ dWd))

    w6 = np.empty(6)
    w6[0:3] = R_L.T @ F
    w6[3:6] = Mw
    lam = P_pinv @ w6

    # analytic time derivative of the force targets (chain rule with the
    # lagged accelerations standing in for the load accelerations)
    edot_v = accel_prev[0:3] - ad
    Fdot = m_L * (-k_x * e_v - k_v * edot_v + jd)
    Edot = E @ hat3(Wd) - hat3(Om) @ E
    Ddot = Edot.T
    e_Rdot = 0.5 * np.array([Ddot[2, 1] - Ddot[1, 2],
                             Ddot[0, 2] - Ddot[2, 0],
                             Ddot[1, 0] - Ddot[0, 1]])
    EWdot = Edot @ Wd + E @ dWd
    e_Omdot = accel_prev[3:6] - EWdot
    Mdot = (-k_R * e_Rdot - k_Om * e_Omdot
            + cross3(EWdot, J_L @ EW) + cross3(EW, J_L @ EWdot)
            + J_L @ (Edot @ dWd + E @ ddWd))
    w6dot = np.empty(6)
    w6dot[0:3] = R_L.T @ Fdot - cross3(Om, R_L.T @ F)
    w6dot[3:6] = Mdot
    lamdot = P_pinv @ w6dot

    err[0:3] = e_x
    err[3:6] = e_v
    err[6:9] = e_R
    err[9:12] = e_Om
    diag[0:3] = F
    diag[3:6] = Mw

    # configuration error of the load attitude
    diag[6 + 18 * n] = 0.5 * (3.0 - (E[0, 0] + E[1, 1] + E[2, 2]))

    status = 0
    for j in range(n):
        mu_j = R_L @ lam[3 * j:3 * j + 3]
        nm = np.sqrt(mu_j[0] ** 2 + mu_j[1] ** 2 + mu_j[2] ** 2)
        if nm <= mu_min:
            status = 1
            nm = mu_min
        qd = -mu_j / nm

        # analytic desired cable rate; its backward difference (filtered)
        # supplies the angular acceleration
        mudot_j = R_L @ (cross3(Om, lam[3 * j:3 * j + 3]) + lamdot[3 * j:3 * j + 3])
        qddot = -(mudot_j - qd * (qd @ mudot_j)) / nm
        wd = cross3(qd, qddot)
        if n_step >= 1:
            dwd_raw = (wd - wd_prev[j]) / dt
        else:
            dwd_raw = np.zeros(3)
        wd_prev[j] = wd
        dwd_filt[j] = dwd_filt[j] + fd_lp * (dwd_raw - dwd_filt[j])
        dwd = dwd_filt[j].copy()
        nwd = np.sqrt(wd[0] ** 2 + wd[1] ** 2 + wd[2] ** 2)
        if nwd > fd_caps[0]:
            wd = wd * (fd_caps[0] / nwd)
        ndwd = np.sqrt(dwd[0] ** 2 + dwd[1] ** 2 + dwd[2] ** 2)
        if ndwd > fd_caps[1]:
            dwd = dwd * (fd_caps[1] / ndwd)

        o = 18 + 8 * j
        q = y[o:o + 3]
        w = y[o + 3:o + 6]
        e_q = cross3(qd, q)
        e_w = w - wd + q * (q @ wd)

        a_j = accel_prev[0:3] + g_e3 \
            + R_L @ (cross3(Om, cross3(Om, r_att[j])) + cross3(accel_prev[3:6], r_att[j]))

        q_dot = cross3(w, q)
        u_par = q * (q @ mu_j + m_Q * L0 * (w @ w) + m_Q * (q @ a_j))
        inner = (-k_q * e_q - k_w * e_w - (q @ wd) * q_dot
                 + (dwd - q * (q @ dwd)))
        u_perp = m_Q * L0 * cross3(q, inner) + m_Q * (a_j - q * (q @ a_j))
        u = u_par + u_perp

        # desired quadrotor attitude: third axis along the thrust
        un = np.sqrt(u[0] ** 2 + u[1] ** 2 + u[2] ** 2)
        if un <= 1e-9:
            status = 2
            b3 = np.zeros(3)
            b3[2] = 1.0
        else:
            b3 = u / un
        b1c = np.zeros(3)
        b1c[0] = 1.0
        proj = b1c - b3 * (b3 @ b1c)
        pn = np.sqrt(proj[0] ** 2 + proj[1] ** 2 + proj[2] ** 2)
        if pn < 1e-8:
            b1c = np.zeros(3)
            b1c[1] = 1.0
            proj = b1c - b3 * (b3 @ b1c)
            pn = np.sqrt(proj[0] ** 2 + proj[1] ** 2 + proj[2] ** 2)
        b1 = proj / pn
        b2 = cross3(b3, b1)
        Rdj = np.empty((3, 3))
        for a in range(3):
            Rdj[a, 0] = b1[a]
            Rdj[a, 1] = b2[a]
            Rdj[a, 2] = b3[a]

        Wdj_raw = np.zeros(3)
        dWdj_raw = np.zeros(3)
        if n_step >= 1:
            Rprev = Rdj_prev[j].copy().reshape(3, 3)
            Wdj_raw = rotation_log3(Rprev.T @ Rdj) / dt
            if n_step >= 2:
                dWdj_raw = (Wdj_raw - Wq_raw_prev[j]) / dt
        Wq_raw_prev[j] = Wdj_raw
        Wq_filt[j] = Wq_filt[j] + fd_lp * (Wdj_raw - Wq_filt[j])
        dWq_filt[j] = dWq_filt[j] + fd_lp * (dWdj_raw - dWq_filt[j])
        Wdj = Wq_filt[j].copy()
        dWdj = dWq_filt[j].copy()
        nW = np.sqrt(Wdj[0] ** 2 + Wdj[1] ** 2 + Wdj[2] ** 2)
        if nW > fd_caps[0]:
            Wdj = Wdj * (fd_caps[0] / nW)
        ndW = np.sqrt(dWdj[0] ** 2 + dWdj[1] ** 2 + dWdj[2] ** 2)
        if ndW > fd_caps[1]:
            dWdj = dWdj * (fd_caps[1] / ndW)

        p = 18 + 8 * n + 12 * j
        R_j = y[p:p + 9].copy().reshape(3, 3)
        Om_j = y[p + 9:p + 12]
        Ej = R_j.T @ Rdj
        e_Rj = 0.5 * np.array([Ej[1, 2] - Ej[2, 1], Ej[2, 0] - Ej[0, 2],
                               Ej[0, 1] - Ej[1, 0]])
        e_Omj = Om_j - Ej @ Wdj
        M_j = (-(k_Rj / (eps_att * eps_att)) * e_Rj - (k_Omj / eps_att) * e_Omj
               + cross3(Om_j, J_Q @ Om_j)
               - J_Q @ (cross3(Om_j, Ej @ Wdj) - Ej @ dWdj))

        if thrust_mode == 1:
            # thrust realizable only along the current body third axis
            f = u[0] * R_j[0, 2] + u[1] * R_j[1, 2] + u[2] * R_j[2, 2]
            for a in range(3):
                u_out[j, a] = f * R_j[a, 2]
        else:
            for a in range(3):
                u_out[j, a] = u[a]
        for a in range(3):
            M_out[j, a] = M_j[a]

        err[12 + 3 * j:15 + 3 * j] = e_q
        err[12 + 3 * n + 3 * j:15 + 3 * n + 3 * j] = e_w
        diag[6 + 3 * j:9 + 3 * j] = mu_j
        diag[6 + 3 * n + 3 * j:9 + 3 * n + 3 * j] = qd
        diag[6 + 6 * n + 3 * j:9 + 6 * n + 3 * j] = u_par
        diag[6 + 9 * n + 3 * j:9 + 9 * n + 3 * j] = u_perp
        diag[6 + 12 * n + 3 * j:9 + 12 * n + 3 * j] = wd
        diag[6 + 15 * n + 3 * j:9 + 15 * n + 3 * j] = dwd
        diag[6 + 18 * n + 1 + j] = 1.0 - (qd @ q)

        for a in range(9):
            Rdj_prev[j, a] = Rdj[a // 3, a % 3]

    return status


class GeometricController:
    """Stateful wrapper around the control pipeline.

    Owns the finite-difference history, the rate filters and the one-step
    lag acceleration estimate.  ``feed_accel`` must be called with the load
    accelerations realized by the subsequent dynamics evaluation.
    """

    def __init__(self, gains: GainSet, params: PhysicalParams,
                 mu_min=MU_MIN, thrust_mode="vector",
                 wd_max=30.0, dwd_max=300.0, fd_tau=0.01):
        if thrust_mode not in ("vector", "projected"):
            raise InvalidStateError(f"unknown thrust mode {thrust_mode!r}")
        if fd_tau < 0.0:
            raise InvalidStateError("fd_tau must be nonnegative")
        self.gains = gains
        self.params = params
        self.geometry = AllocationGeometry(params.r)
        self.mu_min = float(mu_min)
        self.thrust_mode = thrust_mode
        self.fd_caps = np.array([float(wd_max), float(dwd_max)])
        self.fd_tau = float(fd_tau)
        self._gains_arr = gains.pack()
        (self._scal, self._J_L, _, self._J_Q, self._J_Qi,
         self._r_att) = params.pack()
        self.reset()

    def reset(self):
        n = self.params.n_cables
        self.accel_prev = np.zeros(6)
        self.Rdj_prev = np.zeros((n, 9))
        self.Wq_raw_prev = np.zeros((n, 3))
        self.wd_prev = np.zeros((n, 3))
        self.dwd_filt = np.zeros((n, 3))
        self.Wq_filt = np.zeros((n, 3))
        self.dWq_filt = np.zeros((n, 3))
        self.n_step = 0

    def feed_accel(self, v_dot, Om_dot):
        self.accel_prev[0:3] = v_dot
        self.accel_prev[3:6] = Om_dot

    def lp_weight(self, dt):
        return float(dt) / (self.fd_tau + float(dt))

    def step(self, y_packed, dt, xd, vd, ad, Rd, Wd, dWd,
             jd=None, ddWd=None):
        """Run the pipeline once; returns (ControlInput, TrackingErrors, diag)."""
        n = self.params.n_cables
        u = np.empty((n, 3))
        M = np.empty((n, 3))
        err = np.empty(err_size(n))
        diag = np.empty(diag_size(n))
        jd = np.zeros(3) if jd is None else np.asarray(jd, float)
        ddWd = np.zeros(3) if ddWd is None else np.asarray(ddWd, float)
        status = control_kernel(
            np.ascontiguousarray(y_packed), self.n_step, float(dt),
            np.asarray(xd, float), np.asarray(vd, float), np.asarray(ad, float),
            jd, np.asarray(Rd, float).reshape(9), np.asarray(Wd, float),
            np.asarray(dWd, float), ddWd,
            self._gains_arr, self._scal, self._J_L, self._J_Q, self._r_att,
            self.geometry.P_pinv,
            self.Rdj_prev, self.Wq_raw_prev, self.accel_prev,
            self.wd_prev, self.dwd_filt, self.Wq_filt, self.dWq_filt,
            self.mu_min, self.fd_caps, self.lp_weight(dt),
            1 if self.thrust_mode == "projected" else 0,
            u, M, err, diag,
        )
        self.n_step += 1
        if status == 1:
            raise DegenerateAllocationError(
                "a distributed force target fell below the direction floor"
            )
        if status == 2:
            raise DegenerateAttitudeError("zero thrust vector in attitude pick")
        errors = TrackingErrors(
            e_x=err[0:3], e_v=err[3:6], e_R=err[6:9], e_Om=err[9:12],
            e_q=err[12:12 + 3 * n].reshape(n, 3),
            e_w=err[12 + 3 * n:12 + 6 * n].reshape(n, 3),
        )
        return ControlInput(u=u, M=M), errors, diag
