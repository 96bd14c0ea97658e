"""Scenario execution, tracking metrics, the stiffness sweep and CSV export."""

import os
from dataclasses import dataclass, field

import numpy as np

from .controller import GainSet, GeometricController, TrackingErrors, diag_size
from .dynamics_reduced import extract_fast_vars
from .errors import InvalidStateError, NumericalBlowupError
from .integrator import IntegratorConfig, TrajectoryLog, simulate
from .lyapunov import CertificateConstants, lyapunov_value
from .scenario import ScenarioConfig, effective_config_text
from .state import FullState, ReducedState
from .trajectory import sample_trajectory

SWEEP_SKIP_TIME = 1.0  # s of boundary layer excluded from sup deviations


def initial_state(cfg: ScenarioConfig, full=None, eps=None):
    """Initial state at the configured position/velocity.

    cables = "hanging": straight down at rest length.  "allocated": cable
    directions and rates from the zero-error wrench allocation along the
    desired trajectory, with the elastic lengths pre-stretched to the
    static tension (the state starts on the slow manifold, which keeps the
    stiffness sweep free of boundary-layer transients).
    """
    make_full = cfg.model == "full" if full is None else full
    params = cfg.cable_params(eps) if make_full else cfg.params
    if make_full:
        st = FullState.hanging_rest(params, x_L=cfg.x0)
    else:
        st = ReducedState.hanging_rest(params, x_L=cfg.x0)
    st.v_L = np.asarray(cfg.v0, dtype=float)
    if cfg.cables0 == "allocated":
        from .allocation import AllocationGeometry, mu_distribution

        geo = AllocationGeometry(params.r)
        traj = cfg.build_trajectory()
        st.R_L = np.asarray(traj.rotation(0.0), dtype=float)
        st.Om_L = traj.sampled_ang_velocity(0.0)
        h = 1e-4
        g_e3 = np.array([0.0, 0.0, params.g])
        qd = {}
        mu0 = None
        for step, t in ((-1, -h), (0, 0.0), (1, h)):
            F = params.m_L * (np.asarray(traj.acceleration(t), float) + g_e3)
            W = traj.sampled_ang_velocity(t)
            M = np.cross(W, params.J_L @ W) + params.J_L @ traj.sampled_ang_acceleration(t)
            mu = mu_distribution(F, M, np.asarray(traj.rotation(t), float), geo)
            qd[step] = -mu / np.linalg.norm(mu, axis=1, keepdims=True)
            if step == 0:
                mu0 = mu
        st.q = qd[0]
        mu_norm = np.linalg.norm(mu0, axis=1)
        for j in range(params.n_cables):
            qdot = (qd[1][j] - qd[-1][j]) / (2.0 * h)
            st.w[j] = np.cross(qd[0][j], qdot)
        if make_full and params.k > 0.0:
            st.l = params.L + mu_norm / params.k
    return st


def build_controller(cfg: ScenarioConfig, gains: GainSet = None):
    return GeometricController(
        gains if gains is not None else cfg.gains, cfg.params,
        mu_min=cfg.mu_min, thrust_mode=cfg.thrust_mode,
        wd_max=cfg.wd_max, dwd_max=cfg.dwd_max, fd_tau=cfg.fd_tau)


def run_log(cfg: ScenarioConfig, gains: GainSet = None, model=None,
            eps=None, integrator: IntegratorConfig = None):
    """Closed-loop rollout of one scenario; returns the TrajectoryLog."""
    model = cfg.model if model is None else model
    icfg = cfg.integrator if integrator is None else integrator
    params = cfg.cable_params(eps) if model == "full" else cfg.params
    traj = cfg.build_trajectory()
    times = np.arange(icfg.n_steps + 1) * icfg.dt
    samples = sample_trajectory(traj, times)
    # the controller never reads the cable constants, so the base params
    # serve both the reduced and the stiffened full model
    ctrl = build_controller(cfg, gains)
    st = initial_state(cfg, full=(model == "full"), eps=eps)
    return simulate(st, params, icfg, model=model, controller=ctrl,
                    desired_samples=samples,
                    disturbance=cfg.disturbance if model == "perturbed" else None)


def lyapunov_series(log: TrajectoryLog, gains: GainSet, lyap: dict, J_L):
    """V(t) and the domain flag per sample from the recorded errors."""
    if log.errors is None:
        raise InvalidStateError("open-loop log has no tracking errors")
    n = log.n_cables
    consts = CertificateConstants(
        c_x=lyap["c_x"], c_q=lyap["c_q"], c_R=lyap["c_R"],
        psi_q=lyap["psi_q"], psi_R=lyap["psi_R"], e_x_max=lyap["e_x_max"],
        B=0.0, C_q=0.0)
    N = log.errors.shape[0]
    V = np.empty(N)
    in_dom = np.empty(N, dtype=bool)
    base = 6 + 18 * n
    for i in range(N):
        err = log.errors[i]
        errors = TrackingErrors(
            e_x=err[0:3], e_v=err[3:6], e_R=err[6:9], e_Om=err[9:12],
            e_q=err[12:12 + 3 * n].reshape(n, 3),
            e_w=err[12 + 3 * n:12 + 6 * n].reshape(n, 3))
        psi_R = log.diagnostics[i, base]
        psi_q = log.diagnostics[i, base + 1:base + 1 + n]
        s = lyapunov_value(errors, gains, consts, J_L, psi_R, psi_q)
        V[i] = s.value
        in_dom[i] = s.in_domain
    return V, in_dom


def mse_per_axis(log: TrajectoryLog):
    ex = log.e_x()
    return np.mean(ex ** 2, axis=0)


@dataclass
class RunReport:
    scenario: str
    model: str
    mse: np.ndarray
    final_error: np.ndarray
    final_error_norm: float
    max_rotation_defect: float
    max_unit_defect: float
    csv_path: str | None = None
    config_path: str | None = None

    def to_text(self):
        lines = [
            f"scenario: {self.scenario}",
            f"model: {self.model}",
            f"mse_x: {self.mse[0]:.6g}",
            f"mse_y: {self.mse[1]:.6g}",
            f"mse_z: {self.mse[2]:.6g}",
            f"final_error: {self.final_error.tolist()}",
            f"final_error_norm: {self.final_error_norm:.6g}",
            f"max_rotation_defect: {self.max_rotation_defect:.3e}",
            f"max_unit_defect: {self.max_unit_defect:.3e}",
        ]
        if self.csv_path:
            lines.append(f"csv: {self.csv_path}")
        if self.config_path:
            lines.append(f"config_echo: {self.config_path}")
        return "\n".join(lines) + "\n"


def manifold_defects(log: TrajectoryLog, stride=1):
    """Worst orthonormality / unit-norm violations over the logged run."""
    rot_defect = 0.0
    unit_defect = 0.0
    I3 = np.eye(3)
    n = log.n_cables
    for i in range(0, log.states.shape[0], stride):
        R = log.states[i, 6:15].reshape(3, 3)
        rot_defect = max(rot_defect, float(np.max(np.abs(R.T @ R - I3))))
        for j in range(n):
            o = 18 + 8 * j
            q = log.states[i, o:o + 3]
            unit_defect = max(unit_defect, abs(float(np.linalg.norm(q)) - 1.0))
            p = 18 + 8 * n + 12 * j
            Rj = log.states[i, p:p + 9].reshape(3, 3)
            rot_defect = max(rot_defect, float(np.max(np.abs(Rj.T @ Rj - I3))))
    return rot_defect, unit_defect


def run_scenario(cfg: ScenarioConfig, write_outputs=True):
    """Execute a scenario; returns (RunReport, TrajectoryLog)."""
    log = run_log(cfg)
    mse = mse_per_axis(log)
    ex = log.e_x()
    rot_defect, unit_defect = manifold_defects(log, stride=max(1, log.t.shape[0] // 4000))
    report = RunReport(
        scenario=cfg.name, model=cfg.model, mse=mse,
        final_error=ex[-1], final_error_norm=float(np.linalg.norm(ex[-1])),
        max_rotation_defect=rot_defect, max_unit_defect=unit_defect)
    if write_outputs:
        os.makedirs(cfg.output_dir, exist_ok=True)
        csv_path = os.path.join(cfg.output_dir, f"{cfg.name}.csv")
        V, _ = lyapunov_series(log, cfg.gains, cfg.lyapunov, cfg.params.J_L)
        export_csv(log, csv_path, V=V)
        cfg_path = os.path.join(cfg.output_dir, f"{cfg.name}.effective.toml")
        with open(cfg_path, "w") as fh:
            fh.write(effective_config_text(cfg))
        report.csv_path = csv_path
        report.config_path = cfg_path
    return report, log


# --- stiffness sweep ------------------------------------------------------

@dataclass
class SweepReport:
    eps: list
    deviations: list
    order: float | None
    skip_time: float = SWEEP_SKIP_TIME
    failures: dict = field(default_factory=dict)

    def to_text(self):
        lines = ["eps, sup_deviation"]
        for e, d in zip(self.eps, self.deviations):
            lines.append(f"{e:g}, {d:.6e}")
        for e, msg in self.failures.items():
            lines.append(f"{e:g}, failed: {msg}")
        lines.append(f"order: {'N/A' if self.order is None else f'{self.order:.4f}'}")
        return "\n".join(lines) + "\n"


def slow_state_indices(n_cables):
    """Packed indices of the reduced (slow) states: everything but l, l_dot."""
    idx = list(range(18))
    for j in range(n_cables):
        o = 18 + 8 * j
        idx.extend(range(o, o + 6))
    start = 18 + 8 * n_cables
    idx.extend(range(start, start + 12 * n_cables))
    return np.asarray(idx, dtype=int)


def sup_slow_deviation(log_a: TrajectoryLog, log_b: TrajectoryLog,
                       skip_time=SWEEP_SKIP_TIME):
    if log_a.states.shape != log_b.states.shape:
        raise InvalidStateError("sweep runs must share the time grid")
    idx = slow_state_indices(log_a.n_cables)
    i0 = int(np.ceil(skip_time / log_a.dt))
    diff = log_a.states[i0:, idx] - log_b.states[i0:, idx]
    return float(np.max(np.linalg.norm(diff, axis=1)))


def epsilon_sweep(cfg: ScenarioConfig, eps_list=None, mode="replay"):
    """Full-vs-reduced closeness as the cables stiffen.

    For each eps runs the elastic model with k = k_bar/eps^2, c = c_bar/eps
    against one shared reduced-model reference and reports the sup deviation
    of the slow states over t in [skip, horizon], plus the log-log slope.
    Unstable members are recorded, not fatal.

    mode "replay" (default) drives the elastic model with the input
    sequence recorded from the reduced closed loop, so the deviation
    isolates the model-reduction error; the discrete controller otherwise
    adds a zero-order-hold difference floor that scales with dt, not eps,
    and buries the asymptotics.  mode "closed" runs both loops closed.
    """
    from .integrator import replay

    eps_list = cfg.sweep_eps if eps_list is None else [float(e) for e in eps_list]
    ref = run_log(cfg, model="reduced")
    deviations = []
    eps_ok = []
    failures = {}
    for eps in eps_list:
        try:
            if mode == "replay":
                params = cfg.cable_params(eps)
                st = initial_state(cfg, full=True, eps=eps)
                # natural rest length: the O(1) offset of the scaled stretch
                # from its slow-manifold value excites the boundary layer,
                # whose slow-state imprint carries the O(eps) content
                st.l = np.full(params.n_cables, params.L)
                log = replay(st, params, cfg.integrator, ref.u, ref.M,
                             model="full")
            else:
                log = run_log(cfg, model="full", eps=eps)
        except NumericalBlowupError as exc:
            failures[eps] = str(exc)
            continue
        deviations.append(sup_slow_deviation(log, ref))
        eps_ok.append(eps)
    order = None
    if len(eps_ok) >= 2:
        slope, _ = np.polyfit(np.log(eps_ok), np.log(deviations), 1)
        order = float(slope)
    return SweepReport(eps=eps_ok, deviations=deviations, order=order,
                       failures=failures)


# --- CSV export -----------------------------------------------------------

def csv_columns(n_cables, full_model):
    cols = ["t", "xL_x", "xL_y", "xL_z", "vL_x", "vL_y", "vL_z"]
    cols += [f"RL_{a}{b}" for a in range(3) for b in range(3)]
    cols += ["OmL_x", "OmL_y", "OmL_z"]
    for j in range(1, n_cables + 1):
        cols += [f"q{j}_{ax}" for ax in "xyz"] + [f"w{j}_{ax}" for ax in "xyz"]
        if full_model:
            cols += [f"l{j}", f"ld{j}"]
    for j in range(1, n_cables + 1):
        cols += [f"R{j}_{a}{b}" for a in range(3) for b in range(3)]
        cols += [f"Om{j}_{ax}" for ax in "xyz"]
    for j in range(1, n_cables + 1):
        cols += [f"u{j}_{ax}" for ax in "xyz"]
    for j in range(1, n_cables + 1):
        cols += [f"M{j}_{ax}" for ax in "xyz"]
    cols += ["exL_x", "exL_y", "exL_z", "eRL_x", "eRL_y", "eRL_z", "V"]
    return cols


def export_csv(log: TrajectoryLog, path, V=None):
    """Write the run to CSV with a fixed column order, 17 significant digits."""
    n = log.n_cables
    full = log.model == "full"
    cols = csv_columns(n, full)
    N = log.t.shape[0]
    data = np.empty((N, len(cols)))
    c = 0

    def put(block):
        nonlocal c
        w = block.shape[1] if block.ndim == 2 else 1
        data[:, c:c + w] = block.reshape(N, w)
        c += w

    put(log.t)
    put(log.states[:, 0:18])
    for j in range(n):
        o = 18 + 8 * j
        put(log.states[:, o:o + 6])
        if full:
            put(log.states[:, o + 6:o + 8])
    start = 18 + 8 * n
    put(log.states[:, start:start + 12 * n])
    put(log.u.reshape(N, 3 * n))
    put(log.M.reshape(N, 3 * n))
    if log.errors is not None:
        put(log.errors[:, 0:3])
        put(log.errors[:, 6:9])
    else:
        put(np.full((N, 6), np.nan))
    put(np.full(N, np.nan) if V is None else np.asarray(V, dtype=float))
    assert c == len(cols)
    np.savetxt(path, data, fmt="%.17g", delimiter=",",
               header=",".join(cols), comments="")
    return path


def read_csv(path):
    """Round-trip reader for exported runs: (columns, data array)."""
    with open(path) as fh:
        header = fh.readline().strip()
    cols = header.split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return cols, data
