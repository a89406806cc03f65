"""Boundary algebra: trace transform, (K, B, C) decomposition and the matrix verdicts.

The extended input/output pair is

    u_e = 1/sqrt(2) [P2 h'(1) + P1 h(1)/2;  P2 h'(0) + P1 h(0)/2],
    y_e = 1/sqrt(2) [h(1); -h(0)],

and ``T`` is the 4n x 4n matrix with ``[u_e; y_e] = T tau(h)``.  Every
boundary row is re-expressed in these coordinates, ``W Tinv = [W_u | W_y]``,
which produces ``K1, K2`` (from ``WB2``), ``B1, B2`` (from ``WB1``) and
``C1, C2`` (from ``WC``).  When ``P0`` is skew-adjoint,
``Re<Ax, x> = Re<u_e, y_e>``, so whether a choice of rows is passive reduces
to a comparison of Hermitian forms on C^{4n}.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import linalg
from .errors import NotApplicableError, SingularSError
from .model import SystemSpec, validate

PSD_TOL = 1e-9
RECONSTRUCTION_TOL = 1e-10


class Verdict(str, enum.Enum):
    WELL_POSED = "WellPosed"
    NOT_WELL_POSED = "NotWellPosed"
    SUFFICIENT_CONDITION_FAILS = "SufficientConditionFails"


class Criterion(str, enum.Enum):
    B1_IFF = "B1-iff"
    K1B1_SUFFICIENT = "K1B1-sufficient"


class Passivity(str, enum.Enum):
    ENERGY_PRESERVING = "EnergyPreserving"
    PASSIVE = "Passive"
    NOT_PASSIVE = "NotPassive"
    NOT_APPLICABLE = "NotApplicable"


def sigma_matrix(k: int) -> np.ndarray:
    """``[[0, I_k], [I_k, 0]]``."""
    I = np.eye(k, dtype=complex)
    Z = np.zeros((k, k), dtype=complex)
    return np.block([[Z, I], [I, Z]])


@dataclass
class BoundaryAlgebra:
    n: int
    m: int
    T: np.ndarray
    Tinv: np.ndarray
    R: np.ndarray
    Sigma: np.ndarray
    K1: np.ndarray | None = None
    K2: np.ndarray | None = None
    B1: np.ndarray | None = None
    B2: np.ndarray | None = None
    C1: np.ndarray | None = None
    C2: np.ndarray | None = None
    WtB: np.ndarray | None = None
    WtC: np.ndarray | None = None

    @property
    def K1B1(self) -> np.ndarray:
        """``[K1; B1]``: the u_e-coefficients of ``[WB2; WB1]`` (2n x 2n)."""
        return np.vstack([self.K1, self.B1])

    def reconstruction_defect(self, spec: SystemSpec) -> float:
        blocks = np.block([[self.K1, self.K2], [self.B1, self.B2], [self.C1, self.C2]])
        target = np.vstack([spec.WB2, spec.WB1, spec.WC])
        return float(np.abs(blocks @ self.T - target).max())


def trace_matrix(spec: SystemSpec) -> np.ndarray:
    """The 4n x 4n map ``tau(h) -> [u_e; y_e]``."""
    n = spec.n
    I, Z = np.eye(n, dtype=complex), np.zeros((n, n), dtype=complex)
    half_P1 = 0.5 * spec.P1
    T = np.block([
        [half_P1, spec.P2, Z, Z],
        [Z, Z, half_P1, spec.P2],
        [I, Z, Z, Z],
        [Z, Z, -I, Z],
    ])
    return T / np.sqrt(2.0)


def r_matrix(spec: SystemSpec) -> np.ndarray:
    """``R = [[0, -P2^-1], [P2^-1, P2^-1 P1 P2^-1]]``."""
    n = spec.n
    P2inv = linalg.solve_linear(spec.P2, np.eye(n))
    Z = np.zeros((n, n), dtype=complex)
    return np.block([[Z, -P2inv], [P2inv, P2inv @ spec.P1 @ P2inv]])


def trace_transform(spec: SystemSpec) -> BoundaryAlgebra:
    T = trace_matrix(spec)
    Tinv = linalg.solve_linear(T, np.eye(4 * spec.n))
    defect = np.abs(T @ Tinv - np.eye(4 * spec.n)).max()
    if defect > RECONSTRUCTION_TOL:
        raise linalg.SingularMatrixError(f"trace transform inverse defect {defect:.3e}")
    return BoundaryAlgebra(n=spec.n, m=spec.m, T=T, Tinv=Tinv, R=r_matrix(spec),
                           Sigma=sigma_matrix(2 * spec.n))


def decompose_boundary(spec: SystemSpec) -> BoundaryAlgebra:
    alg = trace_transform(spec)
    k = 2 * spec.n
    split = lambda W: (W @ alg.Tinv[:, :k], W @ alg.Tinv[:, k:])  # noqa: E731
    alg.K1, alg.K2 = split(spec.WB2)
    alg.B1, alg.B2 = split(spec.WB1)
    alg.C1, alg.C2 = split(spec.WC)
    J = passivity_transform(alg.R)
    alg.WtB = spec.W @ J
    alg.WtC = spec.WC @ J
    return alg


def q_submatrix(spec: SystemSpec) -> np.ndarray:
    """Columns of ``[WB1; WB2]`` that act on ``h'(1)`` and ``h'(0)``."""
    n = spec.n
    return np.hstack([spec.W[:, n:2 * n], spec.W[:, 3 * n:]])


# ---------------------------------------------------------------- passivity


def dissipation_form(spec: SystemSpec) -> np.ndarray:
    """Hermitian ``Psi`` with ``tau* Psi tau = Re<Ax, x>`` when ``P0`` is skew.

    Integration by parts gives
    ``Re<Ax, x> = 1/2 Re[h* P2 h' + h* P1 h / 2]_0^1``.
    """
    n = spec.n
    P2, P1 = spec.P2, spec.P1
    Psi = np.zeros((4 * n, 4 * n), dtype=complex)
    for sign, (a, b) in ((1.0, (0, 1)), (-1.0, (2, 3))):
        sa, sb = slice(a * n, (a + 1) * n), slice(b * n, (b + 1) * n)
        Psi[sa, sb] += sign * 0.25 * P2
        Psi[sb, sa] += sign * 0.25 * linalg.dagger(P2)
        Psi[sa, sa] += sign * 0.25 * P1
    return Psi


def passivity_transform(R: np.ndarray) -> np.ndarray:
    """``J = [[R, I], [-R, I]]``; it satisfies ``J Sigma J* = Psi^-1 / 2``."""
    I = np.eye(R.shape[0], dtype=complex)
    return np.block([[R, I], [-R, I]])


@dataclass
class PassivityResult:
    status: Passivity
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))
    defect: float = float("nan")
    diagnostic: str = ""

    def __str__(self) -> str:
        return self.status.value


def _classify(eigs: np.ndarray, tol: float) -> Passivity:
    if np.all(np.abs(eigs) <= tol):
        return Passivity.ENERGY_PRESERVING
    if np.all(eigs >= -tol):
        return Passivity.PASSIVE
    return Passivity.NOT_PASSIVE


def passivity_check(spec: SystemSpec, tol: float = PSD_TOL, p0_skew: bool | None = None) -> PassivityResult:
    """Decide impedance passivity of a square (m = 2n) spec with skew ``P0``.

    With ``Wt = [WB1; WC] J`` and ``M = Wt Sigma Wt*`` the spec is passive iff
    ``Sigma - M^-1 >= 0``, and energy preserving iff it vanishes.
    """
    n, m = spec.n, spec.m
    if p0_skew is None:
        p0_skew = validate(spec).p0_skew
    if m != 2 * n:
        return PassivityResult(Passivity.NOT_APPLICABLE, diagnostic=f"m = {m} < 2n = {2 * n}")
    if not p0_skew:
        return PassivityResult(Passivity.NOT_APPLICABLE, diagnostic="P0 is not skew-adjoint")
    J = passivity_transform(r_matrix(spec))
    Wt = np.vstack([spec.WB1, spec.WC]) @ J
    Sig = sigma_matrix(m)
    M = Wt @ Sig @ linalg.dagger(Wt)
    M = 0.5 * (M + linalg.dagger(M))
    sv = linalg.singular_values(M)
    if sv[0] == 0.0 or sv[-1] / sv[0] <= linalg.INVERTIBILITY_RTOL:
        return PassivityResult(Passivity.NOT_PASSIVE, diagnostic=(
            f"M = Wt Sigma Wt* is singular (sigma_min/sigma_max = {sv[-1] / max(sv[0], 1e-300):.3e}); "
            "the inverse-form test is undefined"))
    Minv = linalg.solve_linear(M, np.eye(2 * m))
    D = Sig - Minv
    D = 0.5 * (D + linalg.dagger(D))
    eigs = linalg.hermitian_eigenvalues(D)
    return PassivityResult(_classify(eigs, tol), eigs, float(np.abs(eigs).max()))


# ---------------------------------------------------------------- verdict


@dataclass
class WellPosednessReport:
    verdict: Verdict
    criterion: Criterion
    sigma_min: float
    sigma_ratio: float
    q_sigma_ratio: float
    feedthrough: np.ndarray | None
    passivity: PassivityResult
    regular: bool
    regular_reason: str
    algebra: BoundaryAlgebra

    def render(self) -> str:
        a = self.algebra
        out = [f"verdict: {self.verdict.value}",
               f"criterion: {self.criterion.value}",
               f"sigma_min: {self.sigma_min:.6e}",
               f"sigma_min/sigma_max: {self.sigma_ratio:.6e}",
               f"Q-submatrix sigma_min/sigma_max: {self.q_sigma_ratio:.6e}",
               f"passivity: {self.passivity.status.value}"
               + (f" ({self.passivity.diagnostic})" if self.passivity.diagnostic else "")
               + ("" if np.isnan(self.passivity.defect) else f" eigen-defect={self.passivity.defect:.3e}"),
               f"regular: {'yes' if self.regular else 'undetermined'} ({self.regular_reason})"]
        out.append("feedthrough D:" + ("\n" + format_matrix(self.feedthrough)
                                       if self.feedthrough is not None else " absent"))
        for key in ("K1", "K2", "B1", "B2", "C1", "C2"):
            out.append(f"{key}:\n{format_matrix(getattr(a, key))}")
        return "\n".join(out)


def format_matrix(A: np.ndarray) -> str:
    if A.size == 0:
        return f"  (empty {A.shape[0]}x{A.shape[1]})"

    def fmt(z):
        re, im = (0.0 if abs(z.real) < 1e-14 else z.real), (0.0 if abs(z.imag) < 1e-14 else z.imag)
        return f"{re:+.6f}{im:+.6f}j"

    return "\n".join("  " + " ".join(fmt(z) for z in row) for row in A)


def _ratio(A: np.ndarray) -> tuple[float, float]:
    sv = linalg.singular_values(A)
    if sv.size == 0 or sv[0] == 0.0:
        return 0.0, 0.0
    return float(sv[-1]), float(sv[-1] / sv[0])


def feedthrough(alg: BoundaryAlgebra) -> np.ndarray:
    """``D = C1 [K1; B1]^-1`` restricted to the input columns; ``C1 B1^-1`` when m = 2n."""
    m = alg.m
    KB = alg.K1B1
    sol = linalg.solve_linear(KB, np.eye(KB.shape[0]))
    return alg.C1 @ sol[:, -m:]


def wellposedness_verdict(spec: SystemSpec, alg: BoundaryAlgebra | None = None) -> WellPosednessReport:
    alg = alg if alg is not None else decompose_boundary(spec)
    n, m = spec.n, spec.m
    square = m == 2 * n
    crit = Criterion.B1_IFF if square else Criterion.K1B1_SUFFICIENT
    smin, ratio = _ratio(alg.K1B1)
    _, q_ratio = _ratio(q_submatrix(spec))
    ok = ratio > linalg.INVERTIBILITY_RTOL
    q_ok = q_ratio > linalg.INVERTIBILITY_RTOL
    if ok != q_ok:
        raise AssertionError(f"[K1;B1] test ({ratio:.3e}) disagrees with Q-submatrix test ({q_ratio:.3e})")
    if ok:
        verdict = Verdict.WELL_POSED
    else:
        verdict = Verdict.NOT_WELL_POSED if square else Verdict.SUFFICIENT_CONDITION_FAILS
    D = feedthrough(alg) if ok else None
    if ok:
        regular, reason = True, "invertible [K1;B1]: limit of G(s) along the real axis is C1 [K1;B1]^-1"
    else:
        regular, reason = False, "criterion failed; regularity not decided"
    return WellPosednessReport(verdict, crit, smin, ratio, q_ratio, D, passivity_check(spec), regular,
                               reason, alg)


# ---------------------------------------------------------------- S-V factorization and dual


@dataclass
class SVDecomposition:
    S: np.ndarray
    V: np.ndarray
    contractive: bool
    min_eig: float  # smallest eigenvalue of I - V V*

    def reconstruct(self) -> np.ndarray:
        I = np.eye(self.S.shape[0], dtype=complex)
        return self.S @ np.hstack([I + self.V, I - self.V])


def decompose_sv(W) -> SVDecomposition:
    """Write a 2n x 4n ``W`` as ``S [I + V, I - V]``."""
    W = linalg.as_cmatrix(W, "W")
    k = W.shape[0]
    if W.shape[1] != 2 * k:
        raise ValueError(f"W must be k x 2k, got {W.shape}")
    if linalg.numerical_rank(W) < k:
        raise ValueError("W must have full row rank")
    WL, WR = W[:, :k], W[:, k:]
    S = 0.5 * (WL + WR)
    if not linalg.is_invertible(S):
        raise SingularSError("(W_L + W_R)/2 is singular")
    V = linalg.solve_linear(S, WL) - np.eye(k)
    G = np.eye(k) - V @ linalg.dagger(V)
    eigs = linalg.hermitian_eigenvalues(0.5 * (G + linalg.dagger(G)))
    return SVDecomposition(S, V, bool(eigs[0] >= -PSD_TOL), float(eigs[0]))


def skew_part(spec: SystemSpec) -> SystemSpec:
    """Same spec with ``P0`` replaced by ``(P0 - P0*)/2``."""
    return spec.replace(P0=spec.P0.map(lambda c: 0.5 * (c - linalg.dagger(c))))


def extended_spec(spec: SystemSpec) -> SystemSpec:
    """The spec whose input and output are the full ``u_e`` and ``y_e``."""
    T = trace_matrix(spec)
    k = 2 * spec.n
    return spec.replace(m=k, WB1=T[:k], WB2=np.zeros((0, 4 * spec.n)), WC=T[k:],
                        name=(spec.name + "-extended") if spec.name else "extended")


def _null_space(A: np.ndarray) -> np.ndarray:
    return scipy.linalg.null_space(A, rcond=1e-12)


def dual_system(spec: SystemSpec) -> SystemSpec:
    """Dual spec with coefficients ``(-P2, -P1, -P0, H)``.

    The input rows are ``[I - V*, -I - V*] [[R^-1, -R^-1], [I, I]]`` built from
    ``Wt_B = S [I + V, I - V]``.  The output rows are chosen collocated with
    these inputs: writing ``tau = M u + N z`` with ``N`` spanning the kernel of
    the input rows, the dual's dissipation form is ``u* a u + 2 Re u* b z``, and
    ``y = a u + 2 b z`` turns it into ``Re<u, y>``.
    """
    rep = validate(spec)
    if spec.m != 2 * spec.n:
        raise NotApplicableError(f"dual system needs m = 2n, got m = {spec.m}")
    pas = passivity_check(spec, p0_skew=rep.p0_skew)
    if pas.status not in (Passivity.PASSIVE, Passivity.ENERGY_PRESERVING):
        raise NotApplicableError(f"dual system needs an impedance passive spec, got {pas.status.value}")
    R = r_matrix(spec)
    k = 2 * spec.n
    WtB = spec.W @ passivity_transform(R)
    sv = decompose_sv(WtB)
    I = np.eye(k, dtype=complex)
    Vh = linalg.dagger(sv.V)
    Rinv = linalg.solve_linear(R, I)
    Bd = np.hstack([I - Vh, -I - Vh]) @ np.block([[Rinv, -Rinv], [I, I]])

    dual = spec.replace(P2=-spec.P2, P1=-spec.P1, P0=spec.P0.map(lambda c: -c), WB1=Bd,
                        name=(spec.name + "-dual") if spec.name else "dual")
    Psi_d = dissipation_form(dual)
    Mp = np.linalg.pinv(Bd)
    Np = _null_space(Bd)
    E = np.hstack([Mp, Np])
    F = linalg.dagger(E) @ Psi_d @ E
    a, b = F[:k, :k], F[:k, k:]
    Cd = np.hstack([a, 2.0 * b]) @ linalg.solve_linear(E, np.eye(2 * k))
    return dual.replace(WC=Cd)


__all__ = [
    "Verdict", "Criterion", "Passivity", "BoundaryAlgebra", "WellPosednessReport", "PassivityResult",
    "SVDecomposition", "trace_matrix", "trace_transform", "decompose_boundary", "q_submatrix",
    "wellposedness_verdict", "passivity_check", "dissipation_form", "passivity_transform", "r_matrix",
    "sigma_matrix", "decompose_sv", "dual_system", "extended_spec", "skew_part", "feedthrough",
    "format_matrix",
]
