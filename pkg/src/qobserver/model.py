"""Physical descriptions and derived input-output models of open harmonic modes.

A dynamical component is a register of ``m`` harmonic modes ``a_1 .. a_m``
with a Hermitian frequency matrix ``W`` (m x m) and ``n`` travelling-field
channels.  Channel ``k`` couples to the modes through a passive amplitude row
(annihilation side, ``C-``) and an active amplitude row (creation side,
``C+``), both n x m.  From this physical data alone the linear input-output
model follows:

    d/dt a = A- a + A+ a^#  + B- b_in + B+ b_in^#
    b_out  = C- a + C+ a^#  + D b_in,            D = identity

with the coefficient blocks

    A- = -(1/2) C-^H C- + (1/2) C+^T conj(C+) - i W
    A+ = -(1/2) C-^H C+ + (1/2) C+^T conj(C-)
    B- = -C-^H
    B+ = -C+^T

where ``^H`` is the conjugate transpose, ``^T`` the plain transpose, ``conj``
the entrywise conjugate and ``a^#`` the entrywise-adjoint column of mode
operators.  Creation-sector terms are handled by the doubled representation
acting on the stacked vector ``[a; a^#]``; every matrix of a doubled form
commutes with the conjugation-swap symmetry (swap the two halves, conjugate
entrywise).

Everything is dimensionless (rates and angular frequencies of order one) and
stored as plain ``numpy`` arrays.  Instances are immutable values: arrays are
copied on construction and marked read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "DEFAULT_TOL",
    "InvalidSpecError",
    "OscillatorSpec",
    "StateSpace",
    "DoubledForm",
    "derive_state_space",
    "make_mode",
    "mode_with_rows",
    "realizability_residual",
    "to_doubled",
    "from_doubled",
    "complex_to_json",
    "complex_from_json",
    "matrix_to_json",
    "matrix_from_json",
]

# Absolute tolerance for Hermiticity / unitarity / symmetry checks at
# construction time.  Checker functions accept an explicit override.
DEFAULT_TOL = 1e-9


class InvalidSpecError(ValueError):
    """A physical description or model is dimensionally or structurally invalid."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.complex128)
    out.setflags(write=False)
    return out


def _hermiticity_defect(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 0.0
    return float(np.max(np.abs(mat - mat.conj().T)))


def _unitarity_defect(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 0.0
    eye = np.eye(mat.shape[0])
    return float(np.max(np.abs(mat @ mat.conj().T - eye)))


# ---------------------------------------------------------------------------
# JSON helpers: complex scalars as [re, im], matrices as row-major nested lists
# ---------------------------------------------------------------------------

def complex_to_json(value: complex) -> list[float]:
    z = complex(value)
    return [z.real, z.imag]


def complex_from_json(pair) -> complex:
    re, im = pair
    return complex(float(re), float(im))


def matrix_to_json(mat: np.ndarray) -> list:
    return [[complex_to_json(entry) for entry in row] for row in np.asarray(mat)]


def matrix_from_json(rows, shape: tuple[int, int] | None = None) -> np.ndarray:
    data = [[complex_from_json(entry) for entry in row] for row in rows]
    if shape is not None and (len(data), len(data[0]) if data else 0) != shape:
        if shape[0] == 0 or shape[1] == 0:
            return np.zeros(shape, dtype=np.complex128)
        raise InvalidSpecError(f"matrix must have shape {shape}")
    if not data:
        out = np.zeros((0, 0) if shape is None else shape, dtype=np.complex128)
        return out
    return np.array(data, dtype=np.complex128)


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OscillatorSpec:
    """Physical description of a register of open harmonic modes.

    Parameters
    ----------
    omega:
        Hermitian m x m frequency matrix.
    c_minus, c_plus:
        n x m coupling amplitude matrices.  Row k gives the passive
        (annihilation) and active (creation) amplitudes of channel k, so the
        channel couples through ``c_minus[k] @ a + c_plus[k] @ a^#``.
    """

    omega: np.ndarray
    c_minus: np.ndarray
    c_plus: np.ndarray

    def __post_init__(self) -> None:
        omega = np.atleast_2d(np.array(self.omega, dtype=np.complex128))
        if omega.ndim != 2 or omega.shape[0] != omega.shape[1] or omega.shape[0] < 1:
            raise InvalidSpecError(f"omega must be square and nonempty, got shape {omega.shape}")
        m = omega.shape[0]

        def coupling_block(value, name: str) -> np.ndarray:
            arr = np.array(value, dtype=np.complex128)
            if arr.size == 0:
                return np.zeros((0, m), dtype=np.complex128)
            if arr.ndim == 1 and m == 1:
                arr = arr.reshape(-1, 1)
            if arr.ndim != 2 or arr.shape[1] != m:
                raise InvalidSpecError(f"{name} must have {m} columns, got shape {arr.shape}")
            return arr

        c_minus = coupling_block(self.c_minus, "c_minus")
        c_plus = coupling_block(self.c_plus, "c_plus")
        if c_minus.shape != c_plus.shape:
            raise InvalidSpecError(
                f"coupling blocks disagree: {c_minus.shape} vs {c_plus.shape}")
        if _hermiticity_defect(omega) > DEFAULT_TOL:
            raise InvalidSpecError("omega must be Hermitian")
        object.__setattr__(self, "omega", _frozen(omega))
        object.__setattr__(self, "c_minus", _frozen(c_minus))
        object.__setattr__(self, "c_plus", _frozen(c_plus))

    @property
    def m(self) -> int:
        """Number of modes."""
        return self.omega.shape[0]

    @property
    def n(self) -> int:
        """Number of field channels."""
        return self.c_minus.shape[0]

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "omega": matrix_to_json(self.omega),
            "c_minus": matrix_to_json(self.c_minus),
            "c_plus": matrix_to_json(self.c_plus),
        }

    @classmethod
    def from_json(cls, data: dict) -> OscillatorSpec:
        m, n = int(data["m"]), int(data["n"])
        return cls(
            omega=matrix_from_json(data["omega"], (m, m)),
            c_minus=matrix_from_json(data["c_minus"], (n, m)),
            c_plus=matrix_from_json(data["c_plus"], (n, m)),
        )


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Linear input-output model in single-sector block form.

    The blocks act as ``d/dt a = a_minus a + a_plus a^# + b_minus b + b_plus
    b^#`` with output ``c_minus a + c_plus a^# + d b``.  ``d`` must be unitary
    (identity for anything produced by :func:`derive_state_space`; a general
    unitary survives when static scatterers are absorbed by reduction).
    """

    a_minus: np.ndarray
    a_plus: np.ndarray
    b_minus: np.ndarray
    b_plus: np.ndarray
    c_minus: np.ndarray
    c_plus: np.ndarray
    d: np.ndarray

    def __post_init__(self) -> None:
        a_minus = np.array(self.a_minus, dtype=np.complex128)
        if a_minus.ndim != 2 or a_minus.shape[0] != a_minus.shape[1]:
            raise InvalidSpecError(f"a_minus must be square, got {a_minus.shape}")
        m = a_minus.shape[0]
        d = np.array(self.d, dtype=np.complex128)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InvalidSpecError(f"d must be square, got {d.shape}")
        n = d.shape[0]
        shapes = {
            "a_plus": (m, m),
            "b_minus": (m, n),
            "b_plus": (m, n),
            "c_minus": (n, m),
            "c_plus": (n, m),
        }
        for name, shape in shapes.items():
            block = np.array(getattr(self, name), dtype=np.complex128)
            if block.size == 0 and 0 in shape:
                block = np.zeros(shape, dtype=np.complex128)
            if block.shape != shape:
                raise InvalidSpecError(f"{name} must be {shape}, got {block.shape}")
            object.__setattr__(self, name, _frozen(block))
        if _unitarity_defect(d) > DEFAULT_TOL:
            raise InvalidSpecError("feedthrough d must be unitary")
        object.__setattr__(self, "a_minus", _frozen(a_minus))
        object.__setattr__(self, "d", _frozen(d))

    @property
    def m(self) -> int:
        return self.a_minus.shape[0]

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "a_minus": matrix_to_json(self.a_minus),
            "a_plus": matrix_to_json(self.a_plus),
            "b_minus": matrix_to_json(self.b_minus),
            "b_plus": matrix_to_json(self.b_plus),
            "c_minus": matrix_to_json(self.c_minus),
            "c_plus": matrix_to_json(self.c_plus),
            "d": matrix_to_json(self.d),
        }

    @classmethod
    def from_json(cls, data: dict) -> StateSpace:
        m, n = int(data["m"]), int(data["n"])
        return cls(
            a_minus=matrix_from_json(data["a_minus"], (m, m)),
            a_plus=matrix_from_json(data["a_plus"], (m, m)),
            b_minus=matrix_from_json(data["b_minus"], (m, n)),
            b_plus=matrix_from_json(data["b_plus"], (m, n)),
            c_minus=matrix_from_json(data["c_minus"], (n, m)),
            c_plus=matrix_from_json(data["c_plus"], (n, m)),
            d=matrix_from_json(data["d"], (n, n)),
        )


def _swap_defect(mat: np.ndarray, rows: int, cols: int) -> float:
    """Deviation of a 2*rows x 2*cols block matrix from conjugation-swap symmetry."""
    if mat.size == 0:
        return 0.0
    swapped = np.block([
        [mat[rows:, cols:].conj(), mat[rows:, :cols].conj()],
        [mat[:rows, cols:].conj(), mat[:rows, :cols].conj()],
    ])
    return float(np.max(np.abs(mat - swapped)))


@dataclass(frozen=True, eq=False)
class DoubledForm:
    """State-space blocks assembled on the stacked coordinates ``[a; a^#]``.

    Each matrix commutes with the conjugation-swap symmetry; this is checked
    on construction.
    """

    abar: np.ndarray
    bbar: np.ndarray
    cbar: np.ndarray
    dbar: np.ndarray

    def __post_init__(self) -> None:
        abar = np.array(self.abar, dtype=np.complex128)
        dbar = np.array(self.dbar, dtype=np.complex128)
        bbar = np.array(self.bbar, dtype=np.complex128)
        cbar = np.array(self.cbar, dtype=np.complex128)
        if abar.shape[0] % 2 or dbar.shape[0] % 2:
            raise InvalidSpecError("doubled blocks must have even dimensions")
        m, n = abar.shape[0] // 2, dbar.shape[0] // 2
        if abar.shape != (2 * m, 2 * m) or dbar.shape != (2 * n, 2 * n) \
                or bbar.shape != (2 * m, 2 * n) or cbar.shape != (2 * n, 2 * m):
            raise InvalidSpecError("doubled block dimensions disagree")
        for mat, rows, cols in ((abar, m, m), (bbar, m, n), (cbar, n, m), (dbar, n, n)):
            if _swap_defect(mat, rows, cols) > DEFAULT_TOL:
                raise InvalidSpecError("doubled block breaks conjugation-swap symmetry")
        object.__setattr__(self, "abar", _frozen(abar))
        object.__setattr__(self, "bbar", _frozen(bbar))
        object.__setattr__(self, "cbar", _frozen(cbar))
        object.__setattr__(self, "dbar", _frozen(dbar))

    @property
    def m(self) -> int:
        return self.abar.shape[0] // 2

    @property
    def n(self) -> int:
        return self.dbar.shape[0] // 2


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def derive_state_space(spec: OscillatorSpec) -> StateSpace:
    """Derive the input-output model of an oscillator register.

    The passive channel rows damp the modes, the active rows anti-damp them,
    and the frequency matrix rotates them; the input blocks are fixed by the
    couplings (``B- = -C-^H``, ``B+ = -C+^T``) and the feedthrough is the
    identity.
    """
    cm, cp = spec.c_minus, spec.c_plus
    a_minus = -0.5 * (cm.conj().T @ cm) + 0.5 * (cp.T @ cp.conj()) - 1j * spec.omega
    a_plus = -0.5 * (cm.conj().T @ cp) + 0.5 * (cp.T @ cm.conj())
    return StateSpace(
        a_minus=a_minus,
        a_plus=a_plus,
        b_minus=-cm.conj().T,
        b_plus=-cp.T,
        c_minus=cm,
        c_plus=cp,
        d=np.eye(spec.n, dtype=np.complex128),
    )


def mode_with_rows(omega: float, rows: Sequence[tuple[complex, complex]]) -> OscillatorSpec:
    """Single mode with one channel per ``(alpha, beta)`` amplitude pair.

    Channel k couples through ``alpha_k a + beta_k a^#``; mixed rows are
    allowed.  Use :func:`make_mode` for the common rate-parameterized case.
    """
    n = len(rows)
    c_minus = np.zeros((n, 1), dtype=np.complex128)
    c_plus = np.zeros((n, 1), dtype=np.complex128)
    for k, (alpha, beta) in enumerate(rows):
        c_minus[k, 0] = alpha
        c_plus[k, 0] = beta
    return OscillatorSpec(omega=np.array([[omega]]), c_minus=c_minus, c_plus=c_plus)


def make_mode(omega: float, couplings: Sequence[tuple[str, float]]) -> OscillatorSpec:
    """Single mode at frequency ``omega`` with rate-parameterized channels.

    Parameters
    ----------
    omega:
        Mode frequency (real).
    couplings:
        Sequence of ``(kind, rate)`` with kind ``"annihilation"`` or
        ``"creation"`` and rate >= 0.  A kind/rate pair contributes a channel
        with amplitude ``sqrt(rate)`` on the corresponding side.
    """
    rows: list[tuple[complex, complex]] = []
    for kind, rate in couplings:
        if rate < 0:
            raise InvalidSpecError(f"coupling rate must be nonnegative, got {rate}")
        amp = math.sqrt(rate)
        if kind == "annihilation":
            rows.append((amp, 0.0))
        elif kind == "creation":
            rows.append((0.0, amp))
        else:
            raise InvalidSpecError(f"unknown coupling kind {kind!r}")
    return mode_with_rows(omega, rows)


def _sector_signature(k: int) -> np.ndarray:
    """diag(I_k, -I_k), the sign metric of the doubled ordering."""
    return np.diag(np.concatenate([np.ones(k), -np.ones(k)])).astype(np.complex128)


def realizability_residual(ss: StateSpace) -> float:
    """Largest max-norm violation of the physical-realizability relations.

    In doubled coordinates with sector signatures ``J = diag(I, -I)`` the
    relations read ``J Abar + Abar^H J + Bbar Jn Bbar^H = 0``,
    ``Bbar = -Cbar^H Dbar`` and ``Dbar Jn Dbar^H = Jn``.  They are preserved
    by concatenation and feedback reduction; with identity feedthrough they
    collapse to ``A- + A-^H = -C-^H C- + C+^T conj(C+)``, ``B- = -C-^H`` and
    ``B+ = -C+^T``.  A model produced by :func:`derive_state_space` satisfies
    them to roundoff.
    """
    df = to_doubled(ss)
    jm = _sector_signature(ss.m)
    jn = _sector_signature(ss.n)
    r1 = jm @ df.abar + df.abar.conj().T @ jm + df.bbar @ jn @ df.bbar.conj().T
    r2 = df.bbar + df.cbar.conj().T @ df.dbar
    r3 = df.dbar @ jn @ df.dbar.conj().T - jn
    worst = 0.0
    for block in (r1, r2, r3):
        if block.size:
            worst = max(worst, float(np.max(np.abs(block))))
    return worst


def to_doubled(ss: StateSpace) -> DoubledForm:
    """Assemble the doubled form on ``[a; a^#]`` / ``[b; b^#]`` coordinates."""
    zero_nn = np.zeros((ss.n, ss.n), dtype=np.complex128)
    return DoubledForm(
        abar=np.block([[ss.a_minus, ss.a_plus],
                       [ss.a_plus.conj(), ss.a_minus.conj()]]),
        bbar=np.block([[ss.b_minus, ss.b_plus],
                       [ss.b_plus.conj(), ss.b_minus.conj()]]),
        cbar=np.block([[ss.c_minus, ss.c_plus],
                       [ss.c_plus.conj(), ss.c_minus.conj()]]),
        dbar=np.block([[ss.d, zero_nn], [zero_nn, ss.d.conj()]]),
    )


def from_doubled(df: DoubledForm, tol: float = DEFAULT_TOL) -> StateSpace:
    """Extract single-sector blocks from a doubled form.

    The feedthrough must not mix sectors (true for any network of
    identity-feedthrough modes and sector-preserving scatterers).
    """
    m, n = df.m, df.n
    off = 0.0
    if n:
        off = float(np.max(np.abs(df.dbar[:n, n:])))
    if off > tol:
        raise InvalidSpecError("feedthrough mixes sectors; no single-sector form")
    return StateSpace(
        a_minus=df.abar[:m, :m],
        a_plus=df.abar[:m, m:],
        b_minus=df.bbar[:m, :n],
        b_plus=df.bbar[:m, n:],
        c_minus=df.cbar[:n, :m],
        c_plus=df.cbar[:n, m:],
        d=df.dbar[:n, :n],
    )
