"""Unstructured additive disturbances and the ultimate-bound computation.

Disturbance signals are sums of elementary terms per channel so they can be
declared in scenario files and evaluated inside compiled kernels:

    kind 0: const  ->  amp
    kind 1: sin    ->  amp * sin(rate * t + phase)
    kind 2: cos    ->  amp * cos(rate * t + phase)
    kind 3: exp    ->  amp * exp(-rate * t)

Channels 0-2 force the load translational balance, 3-5 the load moment
balance, 6 + 3j + c the direction dynamics of cable j.
"""

from dataclasses import dataclass, field

import numpy as np

from .backend import jit
from .errors import InvalidStateError
from .params import PhysicalParams
from .state import ReducedState, ControlInput

TERM_KINDS = {"const": 0, "sin": 1, "cos": 2, "exp": 3}


@jit
def eval_disturbance(t, terms, out):
    """Accumulate all terms at time t into the per-channel vector out."""
    out[:] = 0.0
    for i in range(terms.shape[0]):
        ch = int(terms[i, 0])
        kind = int(terms[i, 1])
        amp = terms[i, 2]
        rate = terms[i, 3]
        phase = terms[i, 4]
        if kind == 0:
            out[ch] += amp
        elif kind == 1:
            out[ch] += amp * np.sin(rate * t + phase)
        elif kind == 2:
            out[ch] += amp * np.cos(rate * t + phase)
        else:
            out[ch] += amp * np.exp(-rate * t)


@dataclass
class DisturbanceSpec:
    """Term table plus channel bounds obtained by dense time sampling."""

    terms: np.ndarray
    n_cables: int = 4
    horizon: float = 40.0
    x_bound: float = field(init=False)
    R_bound: float = field(init=False)
    q_bound: np.ndarray = field(init=False)

    def __post_init__(self):
        terms = np.asarray(self.terms, dtype=float)
        if terms.size == 0:
            terms = np.zeros((0, 5))
        if terms.ndim != 2 or terms.shape[1] != 5:
            raise InvalidStateError("disturbance terms must be (n, 5)")
        n_ch = 6 + 3 * self.n_cables
        if terms.shape[0] and (np.min(terms[:, 0]) < 0
                               or np.max(terms[:, 0]) >= n_ch):
            raise InvalidStateError("disturbance channel index out of range")
        self.terms = terms
        ts = np.linspace(0.0, self.horizon, 4001)
        sup = np.zeros(n_ch)
        buf = np.empty(n_ch)
        x_sup = 0.0
        R_sup = 0.0
        q_sup = np.zeros(self.n_cables)
        for t in ts:
            eval_disturbance(t, terms, buf)
            sup = np.maximum(sup, np.abs(buf))
            x_sup = max(x_sup, float(np.linalg.norm(buf[0:3])))
            R_sup = max(R_sup, float(np.linalg.norm(buf[3:6])))
            for j in range(self.n_cables):
                q_sup[j] = max(q_sup[j], float(np.linalg.norm(buf[6 + 3 * j:9 + 3 * j])))
        self.channel_sup = sup
        self.x_bound = x_sup
        self.R_bound = R_sup
        self.q_bound = q_sup

    def __call__(self, t):
        buf = np.empty(6 + 3 * self.n_cables)
        eval_disturbance(float(t), self.terms, buf)
        dq = buf[6:].reshape(self.n_cables, 3)
        return buf[0:3], buf[3:6], dq

    def channel_vector(self, t):
        buf = np.empty(6 + 3 * self.n_cables)
        eval_disturbance(float(t), self.terms, buf)
        return buf


def zero_disturbance(n_cables=4):
    return DisturbanceSpec(terms=np.zeros((0, 5)), n_cables=n_cables)


def paper_disturbances(n_cables=4, horizon=40.0):
    """The benchmark disturbance signals used by the disturbed scenario.

    Slow channels only; the cable channels stay zero (the API accepts them
    for coverage of the perturbed direction dynamics).
    """
    terms = np.array([
        # dx_L
        [0, 1, 0.5, 0.43, 0.0],
        [1, 2, 0.5, 0.21, 0.0],
        [2, 1, 0.2, 0.75, 0.0],
        [2, 3, -1.0, 1.0, 0.0],
        # dR_L
        [3, 0, 0.2, 0.0, 0.0],
        [3, 1, 0.45, 3.0, 0.0],
        [4, 0, 0.3, 0.0, 0.0],
        [4, 2, -0.65, 1.4, 0.0],
        [5, 1, 0.05, 2.1, 0.0],
    ])
    return DisturbanceSpec(terms=terms, n_cables=n_cables, horizon=horizon)


def perturbed_derivative(state: ReducedState, inp: ControlInput,
                         params: PhysicalParams, spec: DisturbanceSpec, t):
    """Reduced-model derivative with the additive disturbances inserted into
    the force/moment balances (before the load solve) and cable dynamics."""
    from .dynamics_reduced import _solve_reduced

    dist = spec.channel_vector(t)
    dy, _ = _solve_reduced(state, inp, params, dist18=dist)
    return dy


@dataclass
class UltimateBoundReport:
    eps_young: float
    E: np.ndarray
    E_norm: float
    lam_min_W_star: float
    lam_max_P_bar: float
    d1: float
    radius: float
    interpretive_constants: dict


def ultimate_bound(gains, constants, params: PhysicalParams,
                   x_bound, R_bound, q_bound, eps_young,
                   m_r=None, L_r=1.0, L_c=None):
    """Ultimate-bound level d1 for the disturbed error dynamics.

    Assembles the scaled disturbance vector E, checks that the damping
    matrices stay positive definite after the Young's-inequality shift, and
    returns d1 = lam_max(P_bar)/lam_min(W*) * |E|^2 / (64 eps).  The radius
    converts the V-level to an error-norm ball through the lower quadratic
    bound.  m_r, L_r, L_c are interpretive normalization constants and
    default to m_L, 1, L.
    """
    from .lyapunov import build_P_matrices, build_W, assemble_symmetric_W

    if eps_young <= 0.0:
        raise InvalidStateError("eps_young must be positive")
    m_r = params.m_L if m_r is None else float(m_r)
    L_c = params.L if L_c is None else float(L_c)
    q_b = float(np.max(np.atleast_1d(q_bound)))

    E = np.array([
        constants.c_x * x_bound / m_r,
        x_bound / m_r,
        3.0 * constants.c_R * R_bound / (2.0 * m_r * L_r),
        3.0 * R_bound / (2.0 * m_r * L_r),
        constants.c_q * q_b / (params.m_Q * L_c),
        q_b / (params.m_Q * L_c),
    ])
    E_norm = float(np.linalg.norm(E))

    P = build_P_matrices(gains, constants, params.J_L)
    lam_max_P = max(
        float(np.max(np.linalg.eigvalsh(P["P_upper_x"]))),
        float(np.max(np.linalg.eigvalsh(P["P_upper_R"]))),
        float(np.max(np.linalg.eigvalsh(P["P_upper_q"]))),
    )
    lam_min_P_lower = min(
        float(np.min(np.linalg.eigvalsh(P["P_lower_x"]))),
        float(np.min(np.linalg.eigvalsh(P["P_lower_R"]))),
        float(np.min(np.linalg.eigvalsh(P["P_lower_q"]))),
    )

    lam_min_star = np.inf
    for j in range(params.n_cables):
        Wj = assemble_symmetric_W(build_W(gains, constants, params, j))
        lam = float(np.min(np.linalg.eigvalsh(Wj))) - eps_young
        lam_min_star = min(lam_min_star, lam)
    if lam_min_star <= 0.0:
        raise InvalidStateError(
            "W - eps I is not positive definite; lower eps_young or raise gains"
        )

    d1 = lam_max_P / lam_min_star * E_norm ** 2 / (64.0 * eps_young)
    radius = np.sqrt(2.0 * d1 / lam_min_P_lower) if d1 > 0 else 0.0
    return UltimateBoundReport(
        eps_young=float(eps_young), E=E, E_norm=E_norm,
        lam_min_W_star=float(lam_min_star), lam_max_P_bar=float(lam_max_P),
        d1=float(d1), radius=float(radius),
        interpretive_constants={"m_r": m_r, "L_r": float(L_r), "L_c": L_c},
    )
