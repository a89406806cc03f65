"""Reference systems: two Euler-Bernoulli beams and two Schrodinger-type test systems.

The beam specs ship as JSON files in ``data/``; :func:`resolve_spec_path` lets
the command line accept either a path or a bare fixture name.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .model import CoefficientFunction, SystemSpec, load_spec


def _rows(n_cols: int, rows) -> np.ndarray:
    """Build a selector matrix from ``{column: coefficient}`` dictionaries."""
    out = np.zeros((len(rows), n_cols), dtype=complex)
    for i, row in enumerate(rows):
        for j, v in row.items():
            out[i, j] = v
    return out


def beam_viscous(rho: float = 1.0, EI: float = 1.0, gamma: float = 0.0) -> SystemSpec:
    """Beam with viscous damping, moment-free clamped-rotation ends, shear force input at z = 1.

    State ``x = (rho w_t, w_zz)``; ``tau`` columns: h(1) -> 0,1; h'(1) -> 2,3;
    h(0) -> 4,5; h'(0) -> 6,7.
    """
    P2 = np.array([[0, -1], [1, 0]], dtype=complex)
    P0 = np.array([[-gamma, 0], [0, 0]], dtype=complex)
    H = np.diag([1.0 / rho, EI]).astype(complex)
    return SystemSpec(
        n=2, m=1, P2=P2, P1=np.zeros((2, 2)), P0=CoefficientFunction.constant(P0),
        H=CoefficientFunction.constant(H),
        WB1=_rows(8, [{3: 1}]),
        WB2=_rows(8, [{6: 1}, {2: 1}, {7: 1}]),
        WC=_rows(8, [{0: 1}]),
        name="beam_viscous",
    )


def beam_elastic(rho: float = 1.0, EI: float = 1.0, k: float = 1.0,
                 k_r: float = 1.0, k_t: float = 1.0) -> SystemSpec:
    """Beam on an elastic foundation with rotational/translational end springs.

    State ``x = (rho w_t, w_zz, w)`` with ``H = diag(1/rho, EI, k)``; so
    ``w = h3 / k`` and the spring terms carry a factor ``1/k``.  Column map:
    h(1) -> 0..2, h'(1) -> 3..5, h(0) -> 6..8, h'(0) -> 9..11.
    """
    P2 = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1j]], dtype=complex)
    P0 = np.array([[0, 0, -1], [0, 0, 0], [1, -1j * k / EI, 0]], dtype=complex)
    H = np.diag([1.0 / rho, EI, k]).astype(complex)
    r, t = k_r / k, k_t / k
    WB2 = _rows(12, [
        {7: 1, 11: r},   # EI w_zz(0) + k_r w_z(0) = 0
        {9: 1},          # w_tz(0) = 0
        {10: 1, 8: t},   # (EI w_zz)_z(0) + k_t w(0) = 0
        {3: 1},          # w_tz(1) = 0
        {1: 1, 5: r},    # EI w_zz(1) + k_r w_z(1) = 0
    ])
    return SystemSpec(
        n=3, m=1, P2=P2, P1=np.zeros((3, 3)), P0=CoefficientFunction.constant(P0),
        H=CoefficientFunction.constant(H),
        WB1=_rows(12, [{4: 1, 2: t}]),  # (EI w_zz)_z(1) + k_t w(1) = u
        WB2=WB2,
        WC=_rows(12, [{0: 1}]),          # y = w_t(1)
        name="beam_elastic",
    )


def _schrodinger(WB1, WC, name) -> SystemSpec:
    return SystemSpec(
        n=1, m=2, P2=np.array([[1j]]), P1=np.zeros((1, 1)),
        P0=CoefficientFunction.constant(np.zeros((1, 1))),
        H=CoefficientFunction.constant(np.eye(1)),
        WB1=WB1, WB2=np.zeros((0, 4)), WC=WC, name=name,
    )


def schrodinger_derivative() -> SystemSpec:
    """``x_t = i x_zz`` with ``u = (h'(1), h'(0))`` and ``y = (-i h(1), i h(0)) / 2``.

    The output is scaled so that ``Re<u, y> = Re<Ax, x>``: energy preserving.
    """
    return _schrodinger(_rows(4, [{1: 1}, {3: 1}]), _rows(4, [{0: -0.5j}, {2: 0.5j}]),
                        "schrodinger_derivative")


def schrodinger_position() -> SystemSpec:
    """``x_t = i x_zz`` with ``u = (h(1), h(0))``, ``y = (i h'(1), -i h'(0)) / 2``.

    Energy preserving, yet the inputs carry no ``u_e`` component (B1 = 0).
    """
    return _schrodinger(_rows(4, [{0: 1}, {2: 1}]), _rows(4, [{1: 0.5j}, {3: -0.5j}]),
                        "schrodinger_position")


BUILDERS = {
    "beam_viscous": beam_viscous,
    "beam_elastic": beam_elastic,
    "schrodinger_derivative": schrodinger_derivative,
    "schrodinger_position": schrodinger_position,
}


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("wellposed") / "data" / f"{name}.spec"))


def resolve_spec_path(path) -> Path:
    """``path`` if it exists, else the bundled fixture with the same stem."""
    p = Path(path)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".spec") else p.name
    if stem in BUILDERS:
        bundled = fixture_path(stem)
        if bundled.exists():
            return bundled
    return p


def load_fixture(name: str) -> SystemSpec:
    return load_spec(fixture_path(name))
