"""Gain certificates for the load tracking loop.

Builds the quadratic sandwich matrices for the Lyapunov candidate, the 6x6
damping matrices W_j coupling the (position, attitude, cable-j) error
pairs, evaluates their positive definiteness through nested 2x2/4x4 Schur
complements, and searches for gains that certify exponential tracking.

Geometry constants (per cable j, with P the wrench distribution map):

    alpha_j = sqrt(psi_q (2 - psi_q))     alpha_L analogous for psi_R
    gamma   = 1 / (m_L lam_min(P P^T))    beta = m_L gamma
    delta_j = m_L |r_j| / sqrt(lam_min(P P^T))    sigma_j = delta_j / m_L

B bounds the feedforward wrench along the desired trajectory and C_q twice
the supremum of the desired cable rates; both are computed numerically from
a sampled trajectory by :func:`feedforward_bounds`.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .allocation import AllocationGeometry, mu_distribution
from .controller import GainSet
from .errors import CertificationError, InvalidStateError
from .params import PhysicalParams

DEFAULT_MARGIN = 1e-8
EIG_TOL = 1e-10


@dataclass(frozen=True)
class CertificateConstants:
    """Cross-term weights, domain sizes and trajectory bounds."""

    c_x: float
    c_q: float
    c_R: float
    psi_q: float
    psi_R: float
    e_x_max: float
    B: float
    C_q: float
    alpha_q: float = field(init=False)
    alpha_L: float = field(init=False)

    def __post_init__(self):
        for name in ("c_x", "c_q", "c_R", "B"):
            if getattr(self, name) < 0.0:
                raise InvalidStateError(f"{name} must be nonnegative")
        if not (0.0 < self.psi_q < 1.0 and 0.0 < self.psi_R < 1.0):
            raise InvalidStateError("psi values must lie in (0, 1)")
        if self.e_x_max <= 0.0:
            raise InvalidStateError("e_x_max must be positive")
        if self.C_q < 0.0:
            raise InvalidStateError("C_q must be nonnegative")
        object.__setattr__(self, "alpha_q",
                           float(np.sqrt(self.psi_q * (2.0 - self.psi_q))))
        object.__setattr__(self, "alpha_L",
                           float(np.sqrt(self.psi_R * (2.0 - self.psi_R))))

    def replace(self, **kw):
        base = dict(c_x=self.c_x, c_q=self.c_q, c_R=self.c_R,
                    psi_q=self.psi_q, psi_R=self.psi_R,
                    e_x_max=self.e_x_max, B=self.B, C_q=self.C_q)
        base.update(kw)
        return CertificateConstants(**base)


@dataclass(frozen=True)
class GeometryConstants:
    """Per-cable coupling constants derived from the distribution map."""

    lam_min_PPT: float
    gamma: float
    beta: float
    delta: np.ndarray
    sigma: np.ndarray


def geometry_constants(params: PhysicalParams):
    geo = AllocationGeometry(params.r)
    lam = geo.lambda_min_PPT
    gamma = 1.0 / (params.m_L * lam)
    beta = params.m_L * gamma
    norms = np.linalg.norm(params.r, axis=1)
    delta = params.m_L * norms / np.sqrt(lam)
    sigma = delta / params.m_L
    return GeometryConstants(lam_min_PPT=lam, gamma=gamma, beta=beta,
                             delta=delta, sigma=sigma)


def build_P_matrices(gains: GainSet, constants: CertificateConstants, J_L):
    """The six 2x2 sandwich matrices bounding the Lyapunov candidate."""
    J_L = np.asarray(J_L, dtype=float)
    lmin = float(np.min(np.linalg.eigvalsh(J_L)))
    lmax = float(np.max(np.linalg.eigvalsh(J_L)))
    c_x, c_q, c_R = constants.c_x, constants.c_q, constants.c_R
    k_x, k_R, k_q = gains.k_xL, gains.k_RL, gains.k_q
    return {
        "P_lower_x": 0.5 * np.array([[k_x, -c_x], [-c_x, 1.0]]),
        "P_upper_x": 0.5 * np.array([[k_x, c_x], [c_x, 1.0]]),
        "P_lower_R": 0.5 * np.array([[2.0 * k_R, -c_R * lmax],
                                     [-c_R * lmax, lmin]]),
        "P_upper_R": 0.5 * np.array([[2.0 * k_R / (2.0 - constants.psi_R),
                                      c_R * lmax], [c_R * lmax, lmax]]),
        "P_lower_q": 0.5 * np.array([[2.0 * k_q, -c_q], [-c_q, 1.0]]),
        "P_upper_q": 0.5 * np.array([[2.0 * k_q / (2.0 - constants.psi_q),
                                      c_q], [c_q, 1.0]]),
    }


@dataclass
class WBlocks:
    """The 2x2 blocks of one cable's 6x6 damping matrix."""

    W_x: np.ndarray
    W_R: np.ndarray
    W_q: np.ndarray
    W_xR: np.ndarray
    W_xq: np.ndarray
    W_qR: np.ndarray

    def full(self):
        W = np.zeros((6, 6))
        W[0:2, 0:2] = self.W_x
        W[2:4, 2:4] = self.W_R
        W[4:6, 4:6] = self.W_q
        W[0:2, 2:4] = -0.5 * self.W_xR
        W[2:4, 0:2] = -0.5 * self.W_xR
        W[0:2, 4:6] = -0.5 * self.W_xq
        W[4:6, 0:2] = -0.5 * self.W_xq
        W[2:4, 4:6] = -0.5 * self.W_qR
        W[4:6, 2:4] = -0.5 * self.W_qR
        return W


def build_W(gains: GainSet, constants: CertificateConstants,
            params: PhysicalParams, j):
    """Assemble the damping blocks of cable j."""
    geo = geometry_constants(params)
    a = constants.alpha_q
    aL = constants.alpha_L
    gamma, beta = geo.gamma, geo.beta
    delta, sigma = float(geo.delta[j]), float(geo.sigma[j])
    c_x, c_q, c_R = constants.c_x, constants.c_q, constants.c_R
    B, C_q = constants.B, constants.C_q
    k_x, k_v = gains.k_xL, gains.k_vL
    k_R, k_Om = gains.k_RL, gains.k_OmL
    k_q, k_w = gains.k_q, gains.k_w
    lmax = float(np.max(np.linalg.eigvalsh(params.J_L)))

    if 1.0 - 4.0 * a * beta <= 0.0 or 1.0 - 4.0 * a * sigma <= 0.0:
        warnings.warn(
            "coupling too strong: 1 - 4 alpha beta or 1 - 4 alpha sigma is "
            "not positive; W cannot be positive definite", stacklevel=2)

    W_x = 0.25 * np.array([
        [c_x * k_x * (1.0 - 4.0 * a * beta),
         -0.5 * c_x * k_v * (1.0 + 4.0 * a * beta)],
        [-0.5 * c_x * k_v * (1.0 + 4.0 * a * beta),
         k_v * (1.0 - 4.0 * a * beta) - c_x],
    ])
    W_R = 0.25 * np.array([
        [c_R * k_R * (1.0 - 4.0 * a * sigma),
         -0.5 * c_R * (k_Om + B + 4.0 * a * sigma)],
        [-0.5 * c_R * (k_Om + B + 4.0 * a * sigma),
         k_Om * (1.0 - 4.0 * a * sigma) - 2.0 * c_R * lmax],
    ])
    W_q = np.array([
        [c_q * k_q, -0.5 * c_q * (k_w + C_q)],
        [-0.5 * c_q * (k_w + C_q), k_w - c_q],
    ])
    W_xq = np.array([
        [c_x * B, 0.0],
        [beta * k_x * constants.e_x_max + B, 0.0],
    ])
    W_qR = np.array([
        [c_R * B, 0.0],
        [aL * sigma * k_R + B, 0.0],
    ])
    W_xR = a * np.array([
        [gamma * c_x * k_R + delta * c_R * k_x,
         gamma * c_x * k_Om + delta * k_x],
        [gamma * k_R + delta * c_R * k_v,
         gamma * k_Om + delta * k_v],
    ])
    return WBlocks(W_x=W_x, W_R=W_R, W_q=W_q, W_xR=W_xR, W_xq=W_xq, W_qR=W_qR)


def assemble_symmetric_W(blocks: WBlocks):
    W = blocks.full()
    return 0.5 * (W + W.T)


@dataclass
class SchurReport:
    verdict: bool
    lam_min_exact: float
    lam_min_bound: float
    condition_lam_mins: tuple
    failing_condition: int | None


def schur_positivity(W_sym, margin=DEFAULT_MARGIN):
    """Positive definiteness of a symmetric 6x6 damping matrix.

    Evaluates the three nested Schur conditions (cable block, attitude
    block after eliminating the cable block, position block after both) and
    cross-checks the verdict against a direct eigendecomposition.  The
    reported lower bound on the minimum eigenvalue follows the perturbation
    construction of the nested decomposition and never exceeds the exact
    value.
    """
    W = np.asarray(W_sym, dtype=float)
    if W.shape != (6, 6):
        raise InvalidStateError(f"W must be 6x6, got {W.shape}")
    if np.max(np.abs(W - W.T)) > 1e-9:
        raise InvalidStateError("W must be symmetric")

    lam_exact = float(np.min(np.linalg.eigvalsh(W)))

    P = W[0:4, 0:4]
    S = W[0:4, 4:6]
    Q = W[4:6, 4:6]

    lam1 = float(np.min(np.linalg.eigvalsh(Q)))
    conds = [lam1, -np.inf, -np.inf]
    failing = None
    if lam1 <= margin:
        failing = 1

    if lam1 > 0.0:
        Qi = np.linalg.inv(Q)
        M4 = P - S @ Qi @ S.T
        A11 = M4[0:2, 0:2]
        A12 = M4[0:2, 2:4]
        A22 = M4[2:4, 2:4]
        lam2 = float(np.min(np.linalg.eigvalsh(A22)))
        conds[1] = lam2
        if failing is None and lam2 <= margin:
            failing = 2
        if lam2 > 0.0:
            C3 = A11 - A12 @ np.linalg.inv(A22) @ A12.T
            lam3 = float(np.min(np.linalg.eigvalsh(C3)))
            conds[2] = lam3
            if failing is None and lam3 <= margin:
                failing = 3

    verdict = failing is None and conds[2] > margin
    # cross-check: nested positivity must agree with the spectrum
    direct = lam_exact > margin
    if verdict != direct and abs(lam_exact - margin) > 1e-7 * max(1.0, abs(lam_exact)):
        raise InvalidStateError(
            f"Schur/eigen verdict mismatch (lam_min {lam_exact:.3e})")

    lam_bound = -np.inf
    if conds[1] > -np.inf and conds[2] > -np.inf:
        # perturbed minimizer construction through both decomposition levels
        vals, vecs = np.linalg.eigh(W)
        x = vecs[:, 0]
        f1 = float(x[0:4] @ x[0:4]
                   + np.sum((x[4:6] + Qi @ S.T @ x[0:4]) ** 2))
        vals4, vecs4 = np.linalg.eigh(M4)
        y = vecs4[:, 0]
        f2 = float(y[0:2] @ y[0:2]
                   + np.sum((y[2:4] + np.linalg.inv(A22) @ A12.T @ y[0:2]) ** 2))
        bound_M4 = min(conds[2], conds[1]) * f2
        lam_bound = min(conds[0], bound_M4) * f1
        lam_bound = min(lam_bound, lam_exact)  # guard eig roundoff
    return SchurReport(verdict=bool(verdict), lam_min_exact=lam_exact,
                       lam_min_bound=float(lam_bound),
                       condition_lam_mins=tuple(conds),
                       failing_condition=failing)


@dataclass
class LyapunovSample:
    value: float
    in_domain: bool


def lyapunov_value(errors, gains: GainSet, constants: CertificateConstants,
                   J_L, psi_R, psi_q):
    """Lyapunov candidate at one error sample.

    psi_R and psi_q (per cable) are the configuration error values of the
    load attitude and cable directions.  Outside the certificate domain the
    value is still returned, flagged.
    """
    J_L = np.asarray(J_L, dtype=float)
    psi_q = np.atleast_1d(np.asarray(psi_q, dtype=float))
    e_x, e_v = errors.e_x, errors.e_v
    e_R, e_Om = errors.e_R, errors.e_Om
    V = (0.5 * float(e_v @ e_v) + 0.5 * gains.k_xL * float(e_x @ e_x)
         + constants.c_x * float(e_x @ e_v))
    for j in range(errors.e_q.shape[0]):
        e_q = errors.e_q[j]
        e_w = errors.e_w[j]
        V += (0.5 * float(e_w @ e_w) + gains.k_q * float(psi_q[j])
              + constants.c_q * float(e_q @ e_w))
    V += (0.5 * float(e_Om @ (J_L @ e_Om)) + gains.k_RL * float(psi_R)
          + constants.c_R * float(e_R @ (J_L @ e_Om)))
    in_domain = (np.linalg.norm(e_x) < constants.e_x_max
                 and float(psi_R) < constants.psi_R
                 and bool(np.all(psi_q < constants.psi_q)))
    return LyapunovSample(value=float(V), in_domain=bool(in_domain))


def feedforward_bounds(samples, params: PhysicalParams):
    """Trajectory-dependent constants (B, C_q) from the sampled trajectory.

    B adds the supremum feedforward force |m_L (a_d + g e3)| and moment
    |W_d x J_L W_d + J_L dW_d| at zero tracking error; C_q is twice the
    supremum rate of the zero-error desired cable directions, obtained from
    the allocation along the trajectory and finite differences on the grid.
    """
    geo = AllocationGeometry(params.r)
    N = samples.t.shape[0]
    g_e3 = np.array([0.0, 0.0, params.g])
    F_sup = 0.0
    M_sup = 0.0
    qd = np.empty((N, params.n_cables, 3))
    for i in range(N):
        F = params.m_L * (samples.a[i] + g_e3)
        W = samples.W[i]
        M = np.cross(W, params.J_L @ W) + params.J_L @ samples.dW[i]
        F_sup = max(F_sup, float(np.linalg.norm(F)))
        M_sup = max(M_sup, float(np.linalg.norm(M)))
        mu = mu_distribution(F, M, samples.R[i].reshape(3, 3), geo)
        for j in range(params.n_cables):
            qd[i, j] = -mu[j] / np.linalg.norm(mu[j])
    w_sup = 0.0
    for i in range(1, N - 1):
        dt2 = samples.t[i + 1] - samples.t[i - 1]
        for j in range(params.n_cables):
            qdot = (qd[i + 1, j] - qd[i - 1, j]) / dt2
            w = np.cross(qd[i, j], qdot)
            w_sup = max(w_sup, float(np.linalg.norm(w)))
    return F_sup + M_sup, 2.0 * w_sup


@dataclass
class CertificateReport:
    certified: bool
    gains: GainSet | None
    constants: CertificateConstants | None
    geometry: GeometryConstants
    schur: list
    P_lam_mins: dict
    margin: float
    iterations: int
    failing_condition: int | None = None

    @property
    def lam_min_W(self):
        if not self.schur:
            return -np.inf
        return min(r.lam_min_exact for r in self.schur)

    def to_text(self):
        lines = []
        lines.append(f"certified: {self.certified}")
        lines.append(f"margin: {self.margin:.3e}")
        lines.append(f"iterations: {self.iterations}")
        if self.failing_condition is not None:
            lines.append(f"failing_condition: {self.failing_condition}")
        if self.gains is not None:
            g = self.gains
            for name in ("k_xL", "k_vL", "k_RL", "k_OmL", "k_q", "k_w"):
                lines.append(f"gain.{name}: {getattr(g, name):.6g}")
        if self.constants is not None:
            c = self.constants
            for name in ("c_x", "c_q", "c_R", "psi_q", "psi_R",
                         "e_x_max", "B", "C_q", "alpha_q", "alpha_L"):
                lines.append(f"constant.{name}: {getattr(c, name):.6g}")
        lines.append(f"geometry.lam_min_PPT: {self.geometry.lam_min_PPT:.6g}")
        lines.append(f"geometry.gamma: {self.geometry.gamma:.6g}")
        lines.append(f"geometry.beta: {self.geometry.beta:.6g}")
        for j, s in enumerate(self.schur):
            lines.append(f"W[{j}].lam_min_exact: {s.lam_min_exact:.6e}")
            lines.append(f"W[{j}].lam_min_bound: {s.lam_min_bound:.6e}")
            lines.append(
                "W[%d].condition_lam_mins: %s"
                % (j, ", ".join(f"{v:.6e}" for v in s.condition_lam_mins)))
        for name, lam in self.P_lam_mins.items():
            lines.append(f"{name}.lam_min: {lam:.6e}")
        return "\n".join(lines) + "\n"


def _check_candidate(gains, constants, params, margin):
    # the sandwich matrices only need positive definiteness; the requested
    # margin applies to the damping matrices W_j
    P = build_P_matrices(gains, constants, params.J_L)
    P_lams = {k: float(np.min(np.linalg.eigvalsh(M))) for k, M in P.items()}
    if min(P_lams.values()) <= EIG_TOL:
        return False, None, P_lams, 0
    reports = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for j in range(params.n_cables):
            rep = schur_positivity(
                assemble_symmetric_W(build_W(gains, constants, params, j)),
                margin=margin)
            reports.append(rep)
            if not rep.verdict:
                return False, reports, P_lams, rep.failing_condition
    return True, reports, P_lams, None


def gain_search(params: PhysicalParams, psi_q=0.01, psi_R=0.01,
                e_x_max=1.0, B=None, C_q=None, samples=None,
                margin=DEFAULT_MARGIN, k_x=None, k_v=None,
                k_w0=10.0, k_R0=10.0, c_steps=8, growth_steps=28,
                inner_gains=(3.0, 0.5, 1.0)):
    """Search for certified gains following the constructive recipe.

    Shrinks the cross-term weights geometrically, pins k_q = k_w / c_q and
    the attitude rate gain to the block-diagonalizing choice, and grows
    (k_w, k_RL) on independent ladders until every sandwich matrix and
    every W_j passes at the requested margin.  k_x/k_v may be pinned;
    otherwise a short ladder of position gains is tried as well (larger
    position damping enlarges the block that the cross couplings must
    defeat).  Raises CertificationError after the bounded sweep.

    Note: the coupling constants scale with alpha = sqrt(psi (2 - psi)),
    and for the benchmark attachment geometry the conditions become
    infeasible for every gain choice once psi exceeds roughly 1.5e-3 (the
    (e_v, e_Om) principal minor of W is then negative for all gains), so
    requests with large psi fail regardless of the ladder.
    """
    if (B is None or C_q is None):
        if samples is None:
            raise InvalidStateError(
                "gain_search needs either (B, C_q) or a sampled trajectory")
        B_auto, C_auto = feedforward_bounds(samples, params)
        B = B_auto if B is None else B
        C_q = C_auto if C_q is None else C_q

    geo = geometry_constants(params)
    alpha_q = float(np.sqrt(psi_q * (2.0 - psi_q)))
    nu = 1.0 - 4.0 * alpha_q * np.asarray(geo.sigma)
    nu_min = float(np.min(nu))
    if nu_min <= 0.0 or 1.0 - 4.0 * alpha_q * geo.beta <= 0.0:
        raise CertificationError(
            f"coupling constants too large for psi_q={psi_q}: "
            f"min(1 - 4 alpha sigma) = {nu_min:.4f} must be positive",
            failing_condition=2)

    if k_x is None:
        kx_ladder = [40.0, 150.0, 600.0]
    else:
        kx_ladder = [float(k_x)]
    lmax = float(np.max(np.linalg.eigvalsh(params.J_L)))

    iterations = 0
    tightest = None
    for ci in range(c_steps):
        shrink = 0.6 ** ci
        c_x = 0.25 * shrink
        c_q = 0.3 * shrink
        c_R = min(0.6, 0.8 * nu_min) * shrink
        constants = CertificateConstants(
            c_x=c_x, c_q=c_q, c_R=c_R, psi_q=psi_q, psi_R=psi_R,
            e_x_max=e_x_max, B=float(B), C_q=float(C_q))
        for total in range(growth_steps):
            for gR in range(total + 1):
                gw = total - gR
                k_w = k_w0 * 1.4 ** gw
                k_q = k_w / c_q
                k_R = k_R0 * 1.4 ** gR
                k_Om = c_R * k_R + 2.0 * c_R * lmax / nu_min
                for kx_try in kx_ladder:
                    kv_try = kx_try if k_v is None else float(k_v)
                    iterations += 1
                    gains = GainSet(k_xL=kx_try, k_vL=kv_try, k_RL=k_R,
                                    k_OmL=k_Om, k_q=k_q, k_w=k_w,
                                    k_Rj=inner_gains[0], k_Omj=inner_gains[1],
                                    eps_att=inner_gains[2])
                    ok, reports, P_lams, failing = _check_candidate(
                        gains, constants, params, margin)
                    if ok:
                        return gains, CertificateReport(
                            certified=True, gains=gains, constants=constants,
                            geometry=geo, schur=reports, P_lam_mins=P_lams,
                            margin=margin, iterations=iterations)
                    if failing is not None:
                        tightest = failing
    raise CertificationError(
        f"no certificate within {iterations} candidates "
        f"(tightest failing condition: {tightest})",
        failing_condition=tightest)
