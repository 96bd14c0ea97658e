"""Reduced model: the inelastic-cable limit of the elastic system.

With the cable lengths pinned at L, the line force T_j becomes a constraint
multiplier.  Writing b_j = v_dot + R_L(Om x (Om x r_j) + Om_dot x r_j)
+ g e3 - u_j/m_Q, the zero length-acceleration condition gives

    T_j = -m_Q (L |w_j|^2 + q_j . b_j),

which is affine in (v_dot, Om_dot).  Substituting into the load balance
yields a symmetric positive-definite 6x6 system

    [ m_L I + m_Q sum q q^T      m_Q sum q s^T ] [v_dot ]   [rhs_f]
    [ m_Q sum s q^T        J_L + m_Q sum s s^T ] [Om_dot] = [rhs_m]

with s_j = r_j x (R_L^T q_j).  The cable directions then follow from
w_dot_j = (q_j x b_j)/L.  Additive slow disturbances enter rhs_f/rhs_m and
cable disturbances add to w_dot after the solve.

The module also provides the slow-manifold stretch solution and the frozen
boundary-layer system of the stiff-cable singular perturbation.
"""

import numpy as np

from .backend import jit
from .errors import InvalidStateError, SingularConfigurationError
from .params import PhysicalParams
from .so3 import cross3, hat3
from .state import FullState, ReducedState, ControlInput, packed_size

COND_LIMIT = 1e12


@jit
def reduced_system(y, u, scal, J_L, r_att, dist6, A, rhs, c_vec, s_vec, T0):
    """Assemble the coupled load system; fills A, rhs and per-cable caches."""
    m_L = scal[0]
    m_Q = scal[1]
    L0 = scal[2]
    g = scal[5]
    n = r_att.shape[0]

    R_L = y[6:15].copy().reshape(3, 3)
    Om = y[15:18]

    A[:, :] = 0.0
    for i in range(3):
        A[i, i] = m_L
        for jj in range(3):
            A[3 + i, 3 + jj] = J_L[i, jj]

    gyro = cross3(Om, J_L @ Om)
    for i in range(3):
        rhs[i] = dist6[i]
        rhs[3 + i] = -gyro[i] + dist6[3 + i]
    rhs[2] -= m_L * g

    for j in range(n):
        o = 18 + 8 * j
        q = y[o:o + 3]
        w = y[o + 3:o + 6]
        s = cross3(r_att[j], R_L.T @ q)
        cj = R_L @ cross3(Om, cross3(Om, r_att[j])) - u[j] / m_Q
        cj[2] += g
        w2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
        t0 = -m_Q * (L0 * w2 + q @ cj)
        T0[j] = t0
        for a in range(3):
            c_vec[j, a] = cj[a]
            s_vec[j, a] = s[a]
            rhs[a] += t0 * q[a]
            rhs[3 + a] += t0 * s[a]
            for b in range(3):
                A[a, b] += m_Q * q[a] * q[b]
                A[a, 3 + b] += m_Q * q[a] * s[b]
                A[3 + a, b] += m_Q * s[a] * q[b]
                A[3 + a, 3 + b] += m_Q * s[a] * s[b]


@jit
def deriv_reduced(y, u, M, scal, J_L, J_Q, J_Qi, r_att, dist18, dy, T_out):
    """Fill dy with the inelastic-model derivative; T_out gets the cable
    constraint forces.  dist18 holds [dx(3), dR(3), dq(n*3)] disturbances."""
    m_Q = scal[1]
    L0 = scal[2]
    n = r_att.shape[0]

    R_L = y[6:15].copy().reshape(3, 3)
    Om = y[15:18]

    A = np.empty((6, 6))
    rhs = np.empty(6)
    c_vec = np.empty((n, 3))
    s_vec = np.empty((n, 3))
    reduced_system(y, u, scal, J_L, r_att, dist18[0:6], A, rhs, c_vec, s_vec, T_out)
    acc = np.linalg.solve(A, rhs)
    vdot = acc[0:3]
    Omdot = acc[3:6]

    for j in range(n):
        T_out[j] -= m_Q * (y[18 + 8 * j:21 + 8 * j] @ vdot + s_vec[j] @ Omdot)

    dy[0:3] = y[3:6]
    dy[3:6] = vdot
    dRL = R_L @ hat3(Om)
    for a in range(3):
        for b in range(3):
            dy[6 + 3 * a + b] = dRL[a, b]
    dy[15:18] = Omdot

    for j in range(n):
        o = 18 + 8 * j
        q = y[o:o + 3]
        w = y[o + 3:o + 6]
        b = vdot + R_L @ cross3(Omdot, r_att[j]) + c_vec[j]
        wdot = cross3(q, b) / L0
        for a in range(3):
            wdot[a] += dist18[6 + 3 * j + a]
        dy[o:o + 3] = cross3(w, q)
        dy[o + 3:o + 6] = wdot
        dy[o + 6] = 0.0
        dy[o + 7] = 0.0

    for j in range(n):
        p = 18 + 8 * n + 12 * j
        R_j = y[p:p + 9].copy().reshape(3, 3)
        Om_j = y[p + 9:p + 12]
        dR = R_j @ hat3(Om_j)
        for a in range(3):
            for b in range(3):
                dy[p + 3 * a + b] = dR[a, b]
        dy[p + 9:p + 12] = J_Qi @ (cross3(J_Q @ Om_j, Om_j) + M[j])


def _solve_reduced(state, inp, params, dist18=None):
    y = state.pack(params.L)
    if y.shape[0] != packed_size(params.n_cables):
        raise InvalidStateError("state and params disagree on cable count")
    scal, J_L, J_Li, J_Q, J_Qi, r_att = params.pack()
    n = params.n_cables
    if dist18 is None:
        dist18 = np.zeros(6 + 3 * n)

    A = np.empty((6, 6))
    rhs = np.empty(6)
    c_vec = np.empty((n, 3))
    s_vec = np.empty((n, 3))
    T0 = np.empty(n)
    reduced_system(y, inp.u, scal, J_L, r_att, dist18[0:6], A, rhs, c_vec, s_vec, T0)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularConfigurationError(
            f"reduced load system condition number {cond:.3e}"
        )
    dy = np.empty_like(y)
    T = np.empty(n)
    deriv_reduced(y, inp.u, inp.M, scal, J_L, J_Q, J_Qi, r_att, dist18, dy, T)
    return dy, T


def reduced_derivative(state: ReducedState, inp: ControlInput, params: PhysicalParams):
    """Packed derivative of the reduced model (length slots stay zero)."""
    dy, _ = _solve_reduced(state, inp, params)
    return dy


def reduced_tensions(state, inp, params):
    """Constraint line forces T_j of the inelastic model."""
    _, T = _solve_reduced(state, inp, params)
    return T


def slow_manifold(state: ReducedState, inp: ControlInput, params: PhysicalParams,
                  k_bar):
    """Quasi-steady fast variables (y_j, z_j) on the slow manifold at eps = 0.

    z_j = 0 and k_bar * y_j = -T_j: the scaled stretch supplies exactly the
    constraint force of the reduced model.  Equivalently

        y_j = (m_Q / k_bar) (L |w_j|^2 + q_j . b_j)

    with the reduced-model accelerations inside b_j.
    """
    if k_bar <= 0.0:
        raise InvalidStateError("k_bar must be positive")
    T = reduced_tensions(state, inp, params)
    return -T / float(k_bar), np.zeros(params.n_cables)


def boundary_layer_matrix(params: PhysicalParams, k_bar, c_bar):
    """Fast-time system matrix of one cable's (dy, dz) boundary layer pair."""
    mQL = params.m_Q * params.L
    return np.array([[0.0, 1.0], [-k_bar / mQL, -c_bar / mQL]])


def boundary_layer_derivative(r, params: PhysicalParams, k_bar, c_bar):
    """Stretched-time derivative of the boundary-layer offsets.

    r has shape (n, 2) holding (delta_y, delta_z) per cable; the slow state
    is frozen and drops out, leaving n decoupled damped oscillators

        d(delta_y)/dtau = delta_z
        m_Q L d(delta_z)/dtau = -c_bar delta_z - k_bar delta_y.
    """
    r = np.asarray(r, dtype=float)
    if r.ndim != 2 or r.shape[1] != 2:
        raise InvalidStateError(f"boundary layer state must be (n, 2), got {r.shape}")
    B = boundary_layer_matrix(params, k_bar, c_bar)
    return r @ B.T


def embed_reduced_in_full(state: ReducedState, y_fast, z_fast, eps,
                          params: PhysicalParams):
    """FullState with l = eps^2 y + L and l_dot = eps z."""
    if eps <= 0.0:
        raise InvalidStateError("eps must be positive")
    y_fast = np.asarray(y_fast, dtype=float)
    z_fast = np.asarray(z_fast, dtype=float)
    l = eps * eps * y_fast + params.L
    if np.any(l <= 0.0):
        raise InvalidStateError("embedding produced a non-positive cable length")
    return FullState(
        x_L=state.x_L, v_L=state.v_L, R_L=state.R_L, Om_L=state.Om_L,
        q=state.q, w=state.w, l=l, l_dot=eps * z_fast,
        R_Q=state.R_Q, Om_Q=state.Om_Q,
    )


def extract_fast_vars(full: FullState, eps, params: PhysicalParams):
    """Inverse of :func:`embed_reduced_in_full` on its image."""
    if eps <= 0.0:
        raise InvalidStateError("eps must be positive")
    y_fast = (full.l - params.L) / (eps * eps)
    z_fast = full.l_dot / eps
    reduced = ReducedState(
        x_L=full.x_L, v_L=full.v_L, R_L=full.R_L, Om_L=full.Om_L,
        q=full.q, w=full.w, R_Q=full.R_Q, Om_Q=full.Om_Q,
    )
    return reduced, y_fast, z_fast
