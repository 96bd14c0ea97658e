"""Right-hand side of the full elastic-cable model.

State unknowns are (x_L, v_L, R_L, Om_L), per cable (q, w, l, l_dot) and per
quadrotor (R, Om).  The cable spring-damper force

    T_j = k (L - l_j) - c l_dot_j

acts on the load along q_j, so after eliminating the length and direction
accelerations the load block reduces to a 6x6 linear solve (block diagonal
here; the inelastic model couples it).  Back-substitution gives

    w_dot_j = (q_j x b_j - 2 l_dot_j w_j) / l_j
    l_ddot_j = l_j |w_j|^2 + q_j . b_j + T_j / m_Q

with b_j = v_dot + R_L (Om x (Om x r_j) + Om_dot x r_j) + g e3 - u_j / m_Q
the gravity-augmented attachment acceleration minus the specific thrust.
"""

import numpy as np

from .backend import jit
from .errors import InvalidStateError, SingularConfigurationError
from .params import PhysicalParams
from .so3 import cross3, hat3
from .state import FullState, ControlInput, cable_offset, quad_offset, packed_size

COND_LIMIT = 1e12


@jit
def _load_block(y, scal, J_L, r_att, T, A, rhs):
    """Assemble the 6x6 load system for given cable line forces T."""
    m_L = scal[0]
    g = scal[5]
    n = r_att.shape[0]
    R_L = y[6:15].copy().reshape(3, 3)
    Om = y[15:18]

    A[:, :] = 0.0
    for i in range(3):
        A[i, i] = m_L
        for j in range(3):
            A[3 + i, 3 + j] = J_L[i, j]

    JOm = J_L @ Om
    gyro = cross3(Om, JOm)
    for i in range(3):
        rhs[i] = 0.0
        rhs[3 + i] = -gyro[i]
    rhs[2] -= m_L * g

    for j in range(n):
        o = 18 + 8 * j
        q = y[o:o + 3]
        qb = R_L.T @ q
        s = cross3(r_att[j], qb)
        for i in range(3):
            rhs[i] += T[j] * q[i]
            rhs[3 + i] += T[j] * s[i]


@jit
def deriv_full(y, u, M, scal, J_L, J_Li, J_Q, J_Qi, r_att, T_over, use_over, dy):
    """Fill dy with the elastic-model time derivative of packed state y."""
    m_L = scal[0]
    m_Q = scal[1]
    L0 = scal[2]
    k = scal[3]
    c = scal[4]
    g = scal[5]
    n = r_att.shape[0]

    R_L = y[6:15].copy().reshape(3, 3)
    Om = y[15:18]

    T = np.empty(n)
    for j in range(n):
        o = 18 + 8 * j
        if use_over != 0:
            T[j] = T_over[j]
        else:
            T[j] = k * (L0 - y[o + 6]) - c * y[o + 7]

    A = np.empty((6, 6))
    rhs = np.empty(6)
    _load_block(y, scal, J_L, r_att, T, A, rhs)
    acc = np.linalg.solve(A, rhs)
    vdot = acc[0:3]
    Omdot = acc[3:6]

    # kinematics of the load
    dy[0:3] = y[3:6]
    dy[3:6] = vdot
    dRL = R_L @ hat3(Om)
    for a in range(3):
        for b in range(3):
            dy[6 + 3 * a + b] = dRL[a, b]
    dy[15:18] = Omdot

    ge3 = np.zeros(3)
    ge3[2] = g

    for j in range(n):
        o = 18 + 8 * j
        q = y[o:o + 3]
        w = y[o + 3:o + 6]
        l = y[o + 6]
        ld = y[o + 7]
        att = cross3(Om, cross3(Om, r_att[j])) + cross3(Omdot, r_att[j])
        b = vdot + R_L @ att + ge3 - u[j] / m_Q
        wdot = (cross3(q, b) - 2.0 * ld * w) / l
        w2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
        lddot = l * w2 + q @ b + T[j] / m_Q
        dy[o:o + 3] = cross3(w, q)
        dy[o + 3:o + 6] = wdot
        dy[o + 6] = ld
        dy[o + 7] = lddot

    for j in range(n):
        p = 18 + 8 * n + 12 * j
        R_j = y[p:p + 9].copy().reshape(3, 3)
        Om_j = y[p + 9:p + 12]
        dR = R_j @ hat3(Om_j)
        for a in range(3):
            for b in range(3):
                dy[p + 3 * a + b] = dR[a, b]
        dy[p + 9:p + 12] = J_Qi @ (cross3(J_Q @ Om_j, Om_j) + M[j])


@jit
def energy_kernel(y, scal, J_L, J_Q, r_att):
    m_L = scal[0]
    m_Q = scal[1]
    L0 = scal[2]
    k = scal[3]
    g = scal[5]
    n = r_att.shape[0]

    x = y[0:3]
    v = y[3:6]
    R_L = y[6:15].copy().reshape(3, 3)
    Om = y[15:18]

    kin = 0.5 * m_L * (v @ v) + 0.5 * (Om @ (J_L @ Om))
    pot = m_L * g * x[2]
    for j in range(n):
        o = 18 + 8 * j
        q = y[o:o + 3]
        w = y[o + 3:o + 6]
        l = y[o + 6]
        ld = y[o + 7]
        xq = x + R_L @ r_att[j] - l * q
        vq = v + R_L @ cross3(Om, r_att[j]) - ld * q - l * cross3(w, q)
        kin += 0.5 * m_Q * (vq @ vq)
        pot += m_Q * g * xq[2] + 0.5 * k * (L0 - l) * (L0 - l)
        p = 18 + 8 * n + 12 * j
        Om_j = y[p + 9:p + 12]
        kin += 0.5 * (Om_j @ (J_Q @ Om_j))
    return kin + pot


def _packed(state, params):
    y = state.pack()
    if y.shape[0] != packed_size(params.n_cables):
        raise InvalidStateError("state and params disagree on cable count")
    return y


def quad_positions(state, params: PhysicalParams):
    """Quadrotor centers of mass x_L + R_L r_j - l_j q_j, shape (n, 3)."""
    out = np.empty((state.n_cables, 3))
    for j in range(state.n_cables):
        out[j] = state.x_L + state.R_L @ params.r[j] - state.l[j] * state.q[j]
    return out


def quad_velocities(state, params: PhysicalParams):
    """Time derivative of the quadrotor position constraint, shape (n, 3)."""
    out = np.empty((state.n_cables, 3))
    for j in range(state.n_cables):
        out[j] = (
            state.v_L
            + state.R_L @ np.cross(state.Om_L, params.r[j])
            - state.l_dot[j] * state.q[j]
            - state.l[j] * np.cross(state.w[j], state.q[j])
        )
    return out


def cable_tensions(state, params: PhysicalParams):
    """Spring-damper line force k(L - l) - c l_dot per cable."""
    return params.k * (params.L - state.l) - params.c * state.l_dot


def full_accelerations(state: FullState, inp: ControlInput, params: PhysicalParams):
    """Packed derivative of the elastic model; validates the load solve.

    Returns the derivative as a FullState-shaped namespace via
    ``FullState.unpack``-compatible packing: use ``unpack_derivative`` for a
    structured view.
    """
    if np.any(state.l <= 0.0):
        raise InvalidStateError("cable length must stay positive")
    y = _packed(state, params)
    scal, J_L, J_Li, J_Q, J_Qi, r_att = params.pack()
    T = cable_tensions(state, params)
    A = np.empty((6, 6))
    rhs = np.empty(6)
    _load_block(y, scal, J_L, r_att, T, A, rhs)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularConfigurationError(
            f"load acceleration system condition number {cond:.3e}"
        )
    dy = np.empty_like(y)
    deriv_full(y, inp.u, inp.M, scal, J_L, J_Li, J_Q, J_Qi, r_att,
               np.zeros(params.n_cables), 0, dy)
    return dy


def full_accelerations_with_tension(state, inp, params, tension):
    """Elastic-model derivative with the spring-damper force replaced by an
    explicit per-cable line force.  Validation hook for the inelastic limit.
    """
    y = _packed(state, params)
    scal, J_L, J_Li, J_Q, J_Qi, r_att = params.pack()
    dy = np.empty_like(y)
    deriv_full(y, inp.u, inp.M, scal, J_L, J_Li, J_Q, J_Qi, r_att,
               np.asarray(tension, dtype=float), 1, dy)
    return dy


def unpack_derivative(dy, n_cables=4):
    """Structured view of a packed derivative (R-slots hold R Om-hat)."""
    n = n_cables
    out = {
        "x_L": dy[0:3], "v_L": dy[3:6],
        "R_L": np.asarray(dy[6:15]).reshape(3, 3), "Om_L": dy[15:18],
        "q": np.empty((n, 3)), "w": np.empty((n, 3)),
        "l": np.empty(n), "l_dot": np.empty(n),
        "R_Q": np.empty((n, 3, 3)), "Om_Q": np.empty((n, 3)),
    }
    for j in range(n):
        o = cable_offset(n, j)
        out["q"][j] = dy[o:o + 3]
        out["w"][j] = dy[o + 3:o + 6]
        out["l"][j] = dy[o + 6]
        out["l_dot"][j] = dy[o + 7]
        p = quad_offset(n, j)
        out["R_Q"][j] = np.asarray(dy[p:p + 9]).reshape(3, 3)
        out["Om_Q"][j] = dy[p + 9:p + 12]
    return out


def total_energy(state: FullState, params: PhysicalParams):
    """Kinetic + potential energy; load gravity counted once."""
    y = _packed(state, params)
    scal, J_L, J_Li, J_Q, J_Qi, r_att = params.pack()
    return float(energy_kernel(y, scal, J_L, J_Q, r_att))


def linear_momentum(state: FullState, params: PhysicalParams):
    """Total linear momentum of load plus quadrotors."""
    p = params.m_L * state.v_L.copy()
    vq = quad_velocities(state, params)
    for j in range(state.n_cables):
        p += params.m_Q * vq[j]
    return p
