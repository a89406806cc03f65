"""Method-of-lines simulation with the boundary conditions as algebraic constraints.

Space: on N uniform nodes the operator ``(P2 d^2 + P1 d + P0) H`` is built
from summation-by-parts difference matrices

    Wq = dz diag(1/2, 1, ..., 1, 1/2),   D1 (central, one-sided at the ends),
    D2 = Wq^-1 (-K + B S),

where ``K`` is the stiffness matrix and ``S`` returns the 3-point one-sided
end derivatives.  With the discrete energy ``E = x* M_E x``,
``M_E = blkdiag(Wq_jj H_j / 2)``, this gives the exact discrete identity
``d/dt E = 2 Re<u_e, y_e>`` (traces taken by the same stencils) whenever P0 is
skew.

Time: the constraint ``G x = [u; 0]`` is imposed by a Lagrange multiplier and
the trapezoidal rule,

    [M_E - dt/2 M_E F   -G*] [x+]   [(M_E + dt/2 M_E F) x]
    [G                    0] [mu] = [g(t + dt)           ],

so homogeneous energy-preserving constraints conserve E to rounding.  The
saddle matrix is factored once per run.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import linalg
from .boundary import Passivity, passivity_check, trace_matrix
from .errors import (DegenerateDataError, DimensionError, NotApplicableError, NotSquareError,
                     RankDeficientConstraintsError, StepSolveFailedError)
from .model import GridFunction, SystemSpec, atomic_write_text, trapezoid_weights, validate
from .transfer import trace_operator

log = logging.getLogger(__name__)

DEFAULT_N = 200
DEFAULT_DT = 1e-3
PROJECTION_NODES = (0, 1, -2, -1)


def sbp_operators(N: int) -> tuple[sp.csr_matrix, sp.csr_matrix, np.ndarray]:
    """First and second derivative matrices and the trapezoid weights on N nodes."""
    dz = 1.0 / (N - 1)
    w = trapezoid_weights(N)
    main = np.zeros(N)
    main[0], main[-1] = -1.0 / dz, 1.0 / dz
    D1 = sp.diags([np.r_[-0.5 / dz * np.ones(N - 2), -1.0 / dz], main, np.r_[1.0 / dz, 0.5 / dz * np.ones(N - 2)]],
                  [-1, 0, 1], format="csr")
    D2 = (sp.diags([np.ones(N - 1), -2.0 * np.ones(N), np.ones(N - 1)], [-1, 0, 1]) / dz ** 2).tolil()
    D2[0, :3] = np.array([1.0, -2.0, 1.0]) / dz ** 2
    D2[N - 1, N - 3:] = np.array([1.0, -2.0, 1.0]) / dz ** 2
    return D1, D2.tocsr(), w


@dataclass
class DiscreteSystem:
    spec: SystemSpec
    N: int
    F: sp.csr_matrix        # dx/dt = F x on the interior
    M_E: sp.csr_matrix      # energy Gram matrix: E = x* M_E x
    trace: sp.csr_matrix    # x -> tau_N(H x), 4n x nN
    G: sp.csr_matrix        # constraint rows [WB1; WB2] tau_N(H x)
    constraint_rank: int

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def zeta(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N)

    def energy(self, x: np.ndarray) -> float:
        return float(np.real(np.vdot(x, self.M_E @ x)))

    def output(self, x: np.ndarray) -> np.ndarray:
        return self.spec.WC @ (self.trace @ x)

    def input(self, x: np.ndarray) -> np.ndarray:
        return self.spec.WB1 @ (self.trace @ x)

    def extended(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ue_ye = trace_matrix(self.spec) @ (self.trace @ x)
        k = 2 * self.n
        return ue_ye[:k], ue_ye[k:]


def discretize(spec: SystemSpec, N: int = DEFAULT_N) -> DiscreteSystem:
    if N < 16:
        raise ValueError(f"need N >= 16 grid points, got {N}")
    n = spec.n
    z = np.linspace(0.0, 1.0, N)
    D1, D2, w = sbp_operators(N)
    Hs = spec.H.sample(z)
    Hblk = sp.block_diag(list(Hs), format="csr")
    P0blk = sp.block_diag(list(spec.P0.sample(z)), format="csr")
    L = sp.kron(D2, spec.P2) + sp.kron(D1, spec.P1) + P0blk
    F = (L @ Hblk).tocsr()
    M_E = sp.block_diag([0.5 * w[j] * Hs[j] for j in range(N)], format="csr")
    trace = (trace_operator(n, N) @ Hblk).tocsr()
    G = (sp.csr_matrix(spec.W) @ trace).tocsr()
    rank = linalg.numerical_rank(_projection_block(G, n, N))
    if rank < 2 * n:
        raise RankDeficientConstraintsError(
            f"discrete boundary rows have rank {rank} < 2n = {2 * n} on the trace nodes")
    return DiscreteSystem(spec, N, F, M_E, trace, G, rank)


def _projection_columns(n: int, N: int) -> np.ndarray:
    nodes = [k % N for k in PROJECTION_NODES]
    return np.concatenate([np.arange(j * n, (j + 1) * n) for j in nodes])


def _projection_block(G: sp.csr_matrix, n: int, N: int) -> np.ndarray:
    return G[:, _projection_columns(n, N)].toarray()


# ---------------------------------------------------------------- inputs


@dataclass(frozen=True)
class InputSignal:
    """Open-loop input sampled at ``times`` (linear interpolation, held constant outside),
    or the feedback law ``u = -k y`` when ``feedback_gain`` is set."""

    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    values: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    feedback_gain: float | np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if t.size and np.any(np.diff(t) <= 0):
            raise ValueError("input sample times must increase strictly")
        if t.size != v.shape[0]:
            raise DimensionError(f"{t.size} times but {v.shape[0]} values")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("input samples must be finite")
        if self.feedback_gain is not None and np.any(np.real(np.atleast_1d(self.feedback_gain)) < 0) \
                and np.ndim(self.feedback_gain) == 0:
            raise ValueError("feedback gain must be nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls, m: int) -> "InputSignal":
        return cls(np.array([0.0]), np.zeros((1, m)))

    @classmethod
    def feedback(cls, k) -> "InputSignal":
        return cls(feedback_gain=k)

    @classmethod
    def smooth_step(cls, amplitude, rise: float = 0.1, samples: int = 201) -> "InputSignal":
        """``amplitude * s(t / rise)`` with the C^1 ramp ``s(r) = 3r^2 - 2r^3`` on [0, rise]."""
        t = np.linspace(0.0, rise, samples)
        r = t / rise
        shape = 3 * r ** 2 - 2 * r ** 3
        return cls(t, np.outer(shape, np.atleast_1d(amplitude)))

    @property
    def is_feedback(self) -> bool:
        return self.feedback_gain is not None

    def __call__(self, t: float) -> np.ndarray:
        if self.is_feedback:
            raise ValueError("a feedback signal has no open-loop value")
        if self.times.size == 1:
            return self.values[0].copy()
        re = [np.interp(t, self.times, self.values[:, j].real) for j in range(self.values.shape[1])]
        im = [np.interp(t, self.times, self.values[:, j].imag) for j in range(self.values.shape[1])]
        return np.array(re) + 1j * np.array(im)


# ---------------------------------------------------------------- trajectories


@dataclass(frozen=True)
class GridTrajectory:
    dt: float
    N: int
    times: np.ndarray
    energies: np.ndarray
    inputs: np.ndarray     # (steps + 1, m)
    outputs: np.ndarray    # (steps + 1, m)
    ue: np.ndarray         # (steps + 1, 2n)
    ye: np.ndarray
    projection_defect: float
    states: np.ndarray | None = None  # (steps + 1, N, n) when stored
    gain: float | None = None

    def __post_init__(self):
        for a in (self.times, self.energies, self.inputs, self.outputs, self.ue, self.ye):
            a.setflags(write=False)
        if self.states is not None:
            self.states.setflags(write=False)

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    def state(self, i: int) -> GridFunction:
        if self.states is None:
            raise ValueError("states were not stored for this run")
        return GridFunction(self.states[i])

    def to_csv(self) -> str:
        m = self.outputs.shape[1]
        header = ["t", "E"]
        header += [f"y_{p}_{j + 1}" for j in range(m) for p in ("re", "im")]
        header += [f"u_{p}_{j + 1}" for j in range(m) for p in ("re", "im")]
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        for i in range(len(self.times)):
            row = [repr(float(self.times[i])), repr(float(self.energies[i]))]
            for arr in (self.outputs, self.inputs):
                for v in arr[i]:
                    row += [repr(float(v.real)), repr(float(v.imag))]
            wr.writerow(row)
        return buf.getvalue()

    def states_csv(self) -> str:
        """Node-major dump: one row per (step, node) with ``re, im`` per component."""
        if self.states is None:
            raise ValueError("states were not stored for this run")
        n = self.states.shape[2]
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "node", "zeta"] + [f"x_{p}_{c + 1}" for c in range(n) for p in ("re", "im")])
        zs = np.linspace(0.0, 1.0, self.N)
        for i, t in enumerate(self.times):
            for j in range(self.N):
                row = [repr(float(t)), j, repr(float(zs[j]))]
                for v in self.states[i, j]:
                    row += [repr(float(v.real)), repr(float(v.imag))]
                wr.writerow(row)
        return buf.getvalue()

    def write_csv(self, path, state_path=None) -> None:
        atomic_write_text(path, self.to_csv())
        if state_path is not None:
            atomic_write_text(state_path, self.states_csv())


def _project_initial(disc: DiscreteSystem, x: np.ndarray, g: np.ndarray, Gc) -> tuple[np.ndarray, float]:
    """Least-squares smallest change of the near-boundary node blocks so that ``Gc x = g``."""
    n, N = disc.n, disc.N
    cols = _projection_columns(n, N)
    defect_vec = g - Gc @ x
    if not np.any(defect_vec):
        return x, 0.0
    block = Gc[:, cols].toarray()
    delta, *_ = np.linalg.lstsq(block, defect_vec, rcond=None)
    y = x.copy()
    y[cols] += delta
    return y, float(np.linalg.norm(delta) / max(np.linalg.norm(x), 1e-300))


def _gain_matrix(k, m: int) -> np.ndarray:
    K = np.asarray(k, dtype=complex)
    if K.ndim == 0:
        return complex(K) * np.eye(m)
    if K.shape != (m, m):
        raise NotSquareError(f"feedback gain of shape {K.shape} does not map {m} outputs to {m} inputs")
    return K


def simulate(disc: DiscreteSystem, x0: GridFunction, u: InputSignal, T: float, dt: float = DEFAULT_DT,
             store_states: bool = False) -> GridTrajectory:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not T >= 0:
        raise ValueError(f"T must be nonnegative, got {T}")
    spec = disc.spec
    n, N, m = disc.n, disc.N, spec.m
    if x0.N != N or x0.values.shape[1] != n:
        raise DimensionError(f"initial state has shape {x0.values.shape}, grid needs ({N}, {n})")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        log.info("horizon %g is not a multiple of dt %g; running %d steps", T, dt, steps)

    if u.is_feedback:
        K = _gain_matrix(u.feedback_gain, m)
        Gc = (sp.csr_matrix(np.vstack([spec.WB1 + K @ spec.WC, spec.WB2])) @ disc.trace).tocsr()
        gval = lambda t: np.zeros(2 * n, dtype=complex)  # noqa: E731
    else:
        if u.values.shape[1] != m:
            raise DimensionError(f"input has {u.values.shape[1]} channels, spec has m = {m}")
        Gc = disc.G
        gval = lambda t: np.concatenate([u(t), np.zeros(2 * n - m)])  # noqa: E731

    x = x0.values.reshape(-1).astype(complex)
    x, defect = _project_initial(disc, x, gval(0.0), Gc)

    MF = (disc.M_E @ disc.F).tocsr()
    lhs = sp.bmat([[disc.M_E - 0.5 * dt * MF, -Gc.conj().T], [Gc, None]], format="csc")
    rhs_op = (disc.M_E + 0.5 * dt * MF).tocsr()
    try:
        lu = spla.splu(lhs)
    except RuntimeError as exc:
        raise StepSolveFailedError(0.0, f"saddle system is singular ({exc})") from exc

    times = dt * np.arange(steps + 1)
    energies = np.empty(steps + 1)
    ys = np.empty((steps + 1, m), dtype=complex)
    us = np.empty((steps + 1, m), dtype=complex)
    ues = np.empty((steps + 1, 2 * n), dtype=complex)
    yes = np.empty((steps + 1, 2 * n), dtype=complex)
    states = np.empty((steps + 1, N, n), dtype=complex) if store_states else None
    T_ext = trace_matrix(spec)
    WB1, WC = spec.WB1, spec.WC

    def record(i, x):
        tr = disc.trace @ x
        energies[i] = disc.energy(x)
        ys[i] = WC @ tr
        us[i] = WB1 @ tr
        e = T_ext @ tr
        ues[i], yes[i] = e[:2 * n], e[2 * n:]
        if store_states:
            states[i] = x.reshape(N, n)

    record(0, x)
    b = np.zeros(n * N + 2 * n, dtype=complex)
    for i in range(steps):
        b[:n * N] = rhs_op @ x
        b[n * N:] = gval(times[i + 1])
        sol = lu.solve(b)
        if not np.all(np.isfinite(sol)):
            raise StepSolveFailedError(times[i + 1], "non-finite solution")
        x = sol[:n * N]
        record(i + 1, x)
    gain = None
    if u.is_feedback and np.ndim(u.feedback_gain) == 0:
        gain = float(np.real(u.feedback_gain))
    return GridTrajectory(dt, N, times, energies, us, ys, ues, yes, defect, states, gain)


# ---------------------------------------------------------------- diagnostics


def _trapezoid(values: np.ndarray, dt: float) -> float:
    if len(values) < 2:
        return 0.0
    return float(dt * (values.sum() - 0.5 * (values[0] + values[-1])))


def wellposedness_ratio(traj: GridTrajectory) -> float:
    """``(E(T) + int |y|^2) / (E(0) + int |u|^2)``."""
    y2 = np.sum(np.abs(traj.outputs) ** 2, axis=1)
    u2 = np.sum(np.abs(traj.inputs) ** 2, axis=1)
    den = traj.energies[0] + _trapezoid(u2, traj.dt)
    if not den > 0:
        raise DegenerateDataError("zero initial energy and zero input: the ratio is undefined")
    return (traj.energies[-1] + _trapezoid(y2, traj.dt)) / den


def energy_balance_residual(traj: GridTrajectory, spec: SystemSpec) -> np.ndarray:
    """Per-step ``(E_{i+1} - E_i)/dt - 2 Re<u_e, y_e>`` at the step midpoint."""
    if not validate(spec).p0_skew:
        raise NotApplicableError("energy balance needs a skew-adjoint P0")
    dE = np.diff(traj.energies) / traj.dt
    ue = 0.5 * (traj.ue[1:] + traj.ue[:-1])
    ye = 0.5 * (traj.ye[1:] + traj.ye[:-1])
    supply = 2.0 * np.real(np.sum(ye.conj() * ue, axis=1))
    return dE - supply


@dataclass
class FeedbackReport:
    gain: float
    E0: float
    max_increase: float             # max_i (E_{i+1} - E_i) / E0
    identity_defect: float          # max_i |E_{i+1} - E_i + 2 k dt |y_mid|^2| / E0
    t_half_norm: float | None       # first t with ||x(t)|| <= ||x0|| / 2
    t_half_energy: float | None     # first t with E(t) <= E0 / 2
    observability: float | None     # int_0^{t_half_norm} |y|^2 dt / E0
    final_ratio: float              # E(T) / E0

    def render(self) -> str:
        fmt = lambda v: "not reached" if v is None else f"{v:.6g}"  # noqa: E731
        return "\n".join([
            f"gain: {self.gain:g}",
            f"E(0): {self.E0:.6e}",
            f"E(T)/E(0): {self.final_ratio:.6e}",
            f"max per-step energy increase / E(0): {self.max_increase:.3e}",
            f"energy identity defect / E(0): {self.identity_defect:.3e}",
            f"half-norm time t_f: {fmt(self.t_half_norm)}",
            f"half-energy time: {fmt(self.t_half_energy)}",
            f"observability estimate int_0^t_f |y|^2 / |x0|^2: {fmt(self.observability)}",
        ])


def _first_time(times, mask) -> float | None:
    idx = np.flatnonzero(mask)
    return float(times[idx[0]]) if idx.size else None


def feedback_report(traj: GridTrajectory, k: float) -> FeedbackReport:
    E = traj.energies
    E0 = float(E[0])
    if not E0 > 0:
        raise DegenerateDataError("feedback experiment needs a nonzero initial state")
    dE = np.diff(E)
    ymid = 0.5 * (traj.outputs[1:] + traj.outputs[:-1])
    predicted = -2.0 * k * traj.dt * np.sum(np.abs(ymid) ** 2, axis=1)
    t_norm = _first_time(traj.times, E <= 0.25 * E0)
    t_energy = _first_time(traj.times, E <= 0.5 * E0)
    obs = None
    if t_norm is not None:
        i = int(round(t_norm / traj.dt))
        obs = _trapezoid(np.sum(np.abs(traj.outputs[:i + 1]) ** 2, axis=1), traj.dt) / E0
    return FeedbackReport(float(k), E0, float(np.max(dE, initial=0.0) / E0),
                          float(np.max(np.abs(dE - predicted), initial=0.0) / E0),
                          t_norm, t_energy, obs, float(E[-1] / E0))


def feedback_experiment(spec: SystemSpec, k, x0: GridFunction, T: float, dt: float = DEFAULT_DT,
                        N: int | None = None, store_states: bool = False) -> tuple[GridTrajectory, FeedbackReport]:
    """Close the loop ``u = -k y`` and measure the energy decay.

    A spec with ``m = 2n`` must pass the passivity test; for ``m < 2n`` the
    matrix test does not apply and the run proceeds with a warning.
    """
    K = _gain_matrix(k, spec.m)
    if np.ndim(k) == 0 and float(np.real(k)) < 0:
        raise ValueError("feedback gain must be nonnegative")
    pas = passivity_check(spec)
    if pas.status is Passivity.NOT_PASSIVE:
        raise NotApplicableError("feedback decay needs an impedance passive spec; passivity test: NotPassive")
    if pas.status is Passivity.NOT_APPLICABLE:
        log.warning("passivity test not applicable (%s); energy decay is not guaranteed", pas.diagnostic)
    disc = discretize(spec, N if N is not None else x0.N)
    traj = simulate(disc, x0, InputSignal.feedback(K if np.ndim(k) else k), T, dt, store_states)
    kk = float(np.real(k)) if np.ndim(k) == 0 else float(linalg.operator_norm(K))
    return traj, feedback_report(traj, kk)


def smooth_initial_state(spec: SystemSpec, N: int, seed: int | None = None) -> GridFunction:
    """A smooth state: low-frequency sine/cosine mixture per component (deterministic for a seed)."""
    rng = np.random.default_rng(0 if seed is None else seed)
    z = np.linspace(0.0, 1.0, N)
    vals = np.zeros((N, spec.n), dtype=complex)
    for c in range(spec.n):
        for freq in (1, 2, 3):
            a, b = rng.standard_normal(2)
            vals[:, c] += (a + 1j * b) / freq ** 2 * np.cos(freq * math.pi * z)
        vals[:, c] += rng.standard_normal() * np.exp(-20.0 * (z - 0.5) ** 2)
    return GridFunction(vals)


__all__ = [
    "DiscreteSystem", "InputSignal", "GridTrajectory", "FeedbackReport", "sbp_operators", "discretize",
    "simulate", "wellposedness_ratio", "energy_balance_residual", "feedback_experiment", "feedback_report",
    "smooth_initial_state",
]
