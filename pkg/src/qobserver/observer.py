"""Observer construction: classical Luenberger, cascaded cavities, coherent
feedback observers built from beamsplitter junctions.

Every builder returns an :class:`ObserverSystem` bundling the joint model,
the row that extracts the estimation error from the mode means, the error
dynamics when the error evolves autonomously, and the noise amplitudes
entering the error equation.  The coherent builders assemble an explicit
component network and reduce it, then verify the resulting error rate
against the closed form; they never write the joint matrices down by hand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import (
    DEFAULT_TOL,
    InvalidSpecError,
    StateSpace,
    derive_state_space,
    make_mode,
    matrix_to_json,
    mode_with_rows,
    complex_to_json,
)
from .network import (
    ComposedNetwork,
    beamsplitter_5050,
    concatenate,
    connect,
    reduce,
    with_io,
)
from . import dynamics

__all__ = [
    "NotVerifiableError",
    "ClassicalPlant",
    "ObserverSystem",
    "OutputCombination",
    "detectable",
    "classical_luenberger",
    "one_way_cascade",
    "two_way_cascade",
    "build_quantum_observer",
    "verification_output",
]


class NotVerifiableError(ValueError):
    """The observer exposes no external comparison output."""


@dataclass(frozen=True, eq=False)
class ClassicalPlant:
    """Classical linear plant dx/dt = A x + B u, y = C x."""

    a: np.ndarray
    c: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self) -> None:
        a = np.atleast_2d(np.array(self.a, dtype=np.complex128))
        if a.shape[0] != a.shape[1]:
            raise InvalidSpecError("plant A must be square")
        k = a.shape[0]
        c = np.atleast_2d(np.array(self.c, dtype=np.complex128))
        if c.shape[1] != k:
            raise InvalidSpecError(f"plant C must have {k} columns")
        b = self.b
        if b is None:
            b = np.zeros((k, 1))
        b = np.array(b, dtype=np.complex128)
        if b.ndim == 1:
            b = b.reshape(k, -1)
        if b.shape[0] != k:
            raise InvalidSpecError(f"plant B must have {k} rows")
        for name, mat in (("a", a), ("c", c), ("b", b)):
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)

    @property
    def order(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True, eq=False)
class ObserverSystem:
    """A joint plant/observer model with its estimation-error structure.

    ``error_map`` is a row block over the joint mode means; the error means
    are ``error_map @ <modes>``.  When ``error_autonomous`` is true the error
    means obey ``de/dt = error_a e`` exactly, regardless of any drive, and
    ``noise_coeffs`` lists the nonzero quantum noise amplitudes entering the
    error equation (keys are input labels, a trailing ``*`` marks the
    conjugated channel).
    """

    kind: str
    joint: StateSpace
    error_map: np.ndarray
    error_label: str
    error_autonomous: bool
    error_a: np.ndarray | None
    noise_coeffs: dict[str, complex]
    network: ComposedNetwork | None = None
    plant: ClassicalPlant | None = None
    gain: np.ndarray | None = None
    drive_port: str | None = None
    df_mode: tuple[np.ndarray, complex] | None = None
    stability_note: str = ""
    params: dict = field(default_factory=dict)

    @property
    def error_rate(self) -> complex:
        """Scalar error eigenvalue; only for one-dimensional errors."""
        if self.error_a is None or self.error_a.shape != (1, 1):
            raise ValueError("error dynamics are not scalar")
        return complex(self.error_a[0, 0])

    @property
    def input_labels(self) -> tuple[str, ...]:
        if self.network is not None:
            return self.network.input_labels
        return ("u",)

    @property
    def output_labels(self) -> tuple[str, ...]:
        if self.network is not None:
            return self.network.output_labels
        return ("w",)

    def error_means(self, traj: dynamics.Trajectory) -> np.ndarray:
        """Estimation-error means along a trajectory (flat when scalar)."""
        if traj.means is None:
            raise ValueError("trajectory has no means")
        m = self.joint.m
        series = traj.means[:, :m] @ self.error_map.T
        if series.shape[1] == 1:
            return series[:, 0]
        return series

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "joint": self.joint.to_json(),
            "error_map": matrix_to_json(self.error_map),
            "error_label": self.error_label,
            "error_autonomous": self.error_autonomous,
            "error_a": None if self.error_a is None else matrix_to_json(self.error_a),
            "noise_coeffs": {k: complex_to_json(v) for k, v in self.noise_coeffs.items()},
            "drive_port": self.drive_port,
            "stability_note": self.stability_note,
            "params": self.params,
        }


@dataclass(frozen=True, eq=False)
class OutputCombination:
    """A linear combination of external output channels.

    ``coefficients`` maps output labels to complex weights; ``means``
    evaluates the combination along a trajectory of the owning system.
    """

    coefficients: dict[str, complex]
    system: "ObserverSystem"

    def means(self, traj: dynamics.Trajectory,
              drives: tuple[dynamics.Drive, ...] = ()) -> np.ndarray:
        outs = dynamics.output_means(self.system.joint, traj, drives)
        labels = self.system.output_labels
        series = np.zeros(outs.shape[0], dtype=np.complex128)
        for label, coeff in self.coefficients.items():
            series += coeff * outs[:, labels.index(label)]
        return series


def detectable(a, c, margin: float = 0.5, tol: float = DEFAULT_TOL
               ) -> tuple[bool, np.ndarray | None]:
    """Rank test for detectability plus a suggested stabilizing gain.

    Returns ``(False, None)`` when some non-decaying eigenvalue is invisible
    at the output.  Otherwise suggests L with ``A - L C`` stable, targeting a
    stability margin of ``margin`` (already-fast plants get L = 0).
    """
    a = np.atleast_2d(np.array(a, dtype=np.complex128))
    c = np.atleast_2d(np.array(c, dtype=np.complex128))
    k = a.shape[0]
    if a.shape != (k, k) or c.shape[1] != k:
        raise InvalidSpecError("dimension mismatch between A and C")
    q = c.shape[0]
    eigs = np.linalg.eigvals(a)
    eye = np.eye(k, dtype=np.complex128)
    for lam in eigs:
        if lam.real < -tol:
            continue
        pencil = np.vstack([lam * eye - a, c])
        if np.linalg.matrix_rank(pencil) < k:
            return False, None
    if float(np.max(eigs.real)) <= -margin:
        return True, np.zeros((k, q))
    if k == 1 and q == 1 and abs(c[0, 0]) > tol:
        target = -margin + 1j * a[0, 0].imag
        gain = (a[0, 0] - target) / c[0, 0]
        return True, np.array([[gain]])
    gain = _riccati_gain(a, c, margin)
    closed = np.linalg.eigvals(a - gain @ c)
    if float(np.max(closed.real)) >= -tol:
        raise RuntimeError("failed to stabilize a detectable pair")
    return True, gain


def _riccati_gain(a: np.ndarray, c: np.ndarray, margin: float) -> np.ndarray:
    k, q = a.shape[0], c.shape[0]
    eye_k = np.eye(k)
    eye_q = np.eye(q)
    for shift in (margin, 0.0):
        try:
            p = scipy.linalg.solve_continuous_are(
                (a + shift * eye_k).conj().T, c.conj().T, eye_k, eye_q)
            return p @ c.conj().T
        except (np.linalg.LinAlgError, ValueError):
            continue
    raise RuntimeError("Riccati gain computation failed")


def classical_luenberger(plant: ClassicalPlant, gain) -> ObserverSystem:
    """Plant plus copy-with-output-injection; error obeys de/dt = (A - LC) e.

    The joint model stacks the plant state over the estimate; its single
    output is the innovation y - yhat.  The drive u enters both halves
    identically, so it cancels from the error exactly.
    """
    k = plant.order
    q = plant.c.shape[0]
    p = plant.b.shape[1]
    gain = np.array(gain, dtype=np.complex128)
    if gain.size != k * q:
        raise InvalidSpecError(f"gain must have {k * q} entries")
    gain = gain.reshape(k, q)
    if p != q:
        raise InvalidSpecError("joint embedding needs matching input/output counts")
    err_a = plant.a - gain @ plant.c
    joint_a = np.block([
        [plant.a, np.zeros((k, k))],
        [gain @ plant.c, err_a],
    ])
    joint_b = np.vstack([plant.b, plant.b])
    joint_c = np.hstack([plant.c, -plant.c])
    zero_mode = np.zeros((2 * k, 2 * k))
    zero_io = np.zeros((2 * k, p))
    joint = StateSpace(a_minus=joint_a, a_plus=zero_mode,
                       b_minus=joint_b, b_plus=zero_io,
                       c_minus=joint_c, c_plus=zero_io.T,
                       d=np.eye(q))
    error_map = np.hstack([np.eye(k), -np.eye(k)]).astype(np.complex128)
    closed_eigs = np.linalg.eigvals(err_a)
    hurwitz = float(np.max(closed_eigs.real)) < -DEFAULT_TOL
    note = "error converges" if hurwitz else "error does not converge; increase the gain"
    return ObserverSystem(
        kind="classical",
        joint=joint,
        error_map=error_map,
        error_label="x - xhat",
        error_autonomous=True,
        error_a=err_a,
        noise_coeffs={},
        plant=plant,
        gain=gain,
        drive_port="u",
        stability_note=note,
        params={"order": k},
    )


def _error_row(joint: StateSpace, weights: np.ndarray,
               tol: float = DEFAULT_TOL) -> tuple[bool, complex | None]:
    """Check whether the weighted mode combination evolves autonomously.

    Returns ``(autonomous, rate)``; autonomous means the row is a left
    eigenvector of the mode block and does not touch the adjoint block.
    """
    row = weights @ joint.a_minus
    cross = weights @ joint.a_plus
    norm2 = float(np.vdot(weights, weights).real)
    rate = complex((weights @ joint.a_minus @ weights.conj().T).item() / norm2)
    defect = max(
        float(np.max(np.abs(row - rate * weights), initial=0.0)),
        float(np.max(np.abs(cross), initial=0.0)),
    )
    scale = max(1.0, float(np.max(np.abs(joint.a_minus))))
    if defect <= tol * scale:
        return True, rate
    return False, None


def _noise_coefficients(joint: StateSpace, weights: np.ndarray,
                        labels: tuple[str, ...],
                        floor: float = 1e-12) -> dict[str, complex]:
    coeffs: dict[str, complex] = {}
    row_minus = (weights @ joint.b_minus).ravel()
    row_plus = (weights @ joint.b_plus).ravel()
    for i, label in enumerate(labels):
        if abs(row_minus[i]) > floor:
            coeffs[label] = complex(row_minus[i])
        if abs(row_plus[i]) > floor:
            coeffs[label + "*"] = complex(row_plus[i])
    return coeffs


def _cavity(omega: float, rates: list[float]) -> StateSpace:
    return derive_state_space(make_mode(omega, [("annihilation", r) for r in rates]))


def one_way_cascade(omega: float, gamma: float) -> ObserverSystem:
    """Plant cavity driving an identical copy through one field channel.

    The estimation error a - atilde is not autonomous (the copy is kicked by
    the plant's output field), but both joint modes decay at gamma/2 so the
    error still dies out.
    """
    if gamma <= 0:
        raise InvalidSpecError("gamma must be positive")
    cav = _cavity(omega, [gamma])
    net = concatenate([("plant", cav), ("observer", cav)])
    net = connect(net, "plant.out[0]", "observer.in[0]")
    net = with_io(net,
                  inputs=[("bin", "plant.in[0]")],
                  outputs=[("bout", "observer.out[0]")])
    joint = reduce(net)
    weights = np.array([[1.0, -1.0]], dtype=np.complex128)
    autonomous, rate = _error_row(joint, weights)
    return ObserverSystem(
        kind="one-way",
        joint=joint,
        error_map=weights,
        error_label="a - atilde",
        error_autonomous=autonomous,
        error_a=None if rate is None else np.array([[rate]]),
        noise_coeffs=_noise_coefficients(joint, weights, net.input_labels),
        network=net,
        drive_port="bin",
        stability_note="stable: both joint modes decay at gamma/2",
        params={"omega": omega, "gamma": gamma},
    )


def two_way_cascade(omega: float, gamma: float) -> ObserverSystem:
    """Two cavities exchanging fields both ways, gamma/2 per channel.

    The sum mode a + atilde decays at the full rate gamma while the
    difference mode a - atilde decouples from all inputs and merely
    precesses: a decoherence-free mode, so the joint model is only
    marginally stable and the mismatch never converges.
    """
    if gamma <= 0:
        raise InvalidSpecError("gamma must be positive")
    cav = _cavity(omega, [gamma / 2.0, gamma / 2.0])
    net = concatenate([("plant", cav), ("observer", cav)])
    net = connect(net, "plant.out[0]", "observer.in[0]")
    net = connect(net, "observer.out[1]", "plant.in[1]")
    net = with_io(net,
                  inputs=[("bin1", "plant.in[0]"), ("bin2", "observer.in[1]")],
                  outputs=[("bout1", "observer.out[0]"), ("bout2", "plant.out[1]")])
    joint = reduce(net)
    weights = np.array([[1.0, 1.0]], dtype=np.complex128)
    autonomous, rate = _error_row(joint, weights)
    df_weights = np.array([1.0, -1.0], dtype=np.complex128) / math.sqrt(2.0)
    df_row = df_weights.reshape(1, 2)
    df_auton, df_rate = _error_row(joint, df_row)
    if not (autonomous and df_auton):
        raise RuntimeError("two-way cascade reduction lost its normal modes")
    return ObserverSystem(
        kind="two-way",
        joint=joint,
        error_map=weights,
        error_label="a + atilde",
        error_autonomous=True,
        error_a=np.array([[rate]]),
        noise_coeffs=_noise_coefficients(joint, weights, net.input_labels),
        network=net,
        drive_port="bin1",
        df_mode=(df_weights, complex(df_rate)),
        stability_note="marginally stable: a - atilde is decoherence-free",
        params={"omega": omega, "gamma": gamma},
    )


def _tracker(omega: float, gamma: float, gamma_l: float, verifiable: bool) -> StateSpace:
    """Observer cavity: plant-matched damping, one gain channel, one pumped
    channel whose creation-sector coupling realizes the output injection."""
    root_l = math.sqrt(gamma_l)
    pump_sign = -1.0 if verifiable else 1.0
    return derive_state_space(mode_with_rows(omega, [
        (math.sqrt(gamma), 0.0),
        (root_l, 0.0),
        (0.0, pump_sign * root_l),
    ]))


def build_quantum_observer(omega: float, gamma: float, gamma_l: float,
                           verifiable: bool = False) -> ObserverSystem:
    """Coherent observer: plant cavity watched through beamsplitter taps.

    An input splitter feeds the plant and the observer the same vacuum
    mixture, an output splitter interferes the two emitted fields, and the
    difference port drives the observer's gain channel.  The estimation
    error then evolves autonomously and the gain rate gamma_l tunes its
    decay beyond the plant's bare gamma/2.

    With ``verifiable`` set, both emitted fields pass through 50/50 taps
    first; the tap reflections leave the device as externally comparable
    outputs y and ytilde at the cost of halving the injected correction
    (error rate gamma/2 + sqrt(gamma * gamma_l)/2 instead of
    gamma/2 + sqrt(gamma * gamma_l / 2)).
    """
    if gamma <= 0:
        raise InvalidSpecError("gamma must be positive")
    if gamma_l < 0:
        raise InvalidSpecError("gamma_l must be nonnegative")
    plant = _cavity(omega, [gamma])
    tracker = _tracker(omega, gamma, gamma_l, verifiable)
    bs = beamsplitter_5050()
    if verifiable:
        net = concatenate([("plant", plant), ("tracker", tracker),
                           ("J1", bs), ("J2", bs), ("J3", bs), ("J4", bs)])
        net = connect(net, "J1.out[0]", "plant.in[0]")
        net = connect(net, "J1.out[1]", "tracker.in[0]")
        net = connect(net, "plant.out[0]", "J2.in[0]")
        net = connect(net, "tracker.out[0]", "J3.in[0]")
        net = connect(net, "J2.out[0]", "J4.in[1]")
        net = connect(net, "J3.out[0]", "J4.in[0]")
        net = connect(net, "J4.out[1]", "tracker.in[1]")
        net = with_io(net,
                      inputs=[("bin", "J1.in[0]"), ("noise", "J1.in[1]"),
                              ("tapnoise1", "J2.in[1]"), ("tapnoise2", "J3.in[1]"),
                              ("pump", "tracker.in[2]")],
                      outputs=[("y", "J2.out[1]"), ("ytilde", "J3.out[1]"),
                               ("mix", "J4.out[0]"), ("gainout", "tracker.out[1]"),
                               ("pumpout", "tracker.out[2]")])
        closed_rate = -0.5 * gamma - 0.5 * math.sqrt(gamma * gamma_l) - 1j * omega
        kind = "coherent-verified"
    else:
        net = concatenate([("plant", plant), ("tracker", tracker),
                           ("J1", bs), ("J4", bs)])
        net = connect(net, "J1.out[0]", "plant.in[0]")
        net = connect(net, "J1.out[1]", "tracker.in[0]")
        net = connect(net, "plant.out[0]", "J4.in[1]")
        net = connect(net, "tracker.out[0]", "J4.in[0]")
        net = connect(net, "J4.out[1]", "tracker.in[1]")
        net = with_io(net,
                      inputs=[("bin", "J1.in[0]"), ("noise", "J1.in[1]"),
                              ("pump", "tracker.in[2]")],
                      outputs=[("mix", "J4.out[0]"), ("gainout", "tracker.out[1]"),
                               ("pumpout", "tracker.out[2]")])
        closed_rate = -0.5 * gamma - math.sqrt(gamma * gamma_l / 2.0) - 1j * omega
        kind = "coherent"
    joint = reduce(net)
    weights = np.array([[1.0, -1.0]], dtype=np.complex128)
    autonomous, rate = _error_row(joint, weights)
    if not autonomous:
        raise RuntimeError("observer error dynamics failed to close")
    if abs(rate - closed_rate) > 1e-10:
        raise RuntimeError(
            f"reduced error rate {rate} deviates from closed form {closed_rate}")
    return ObserverSystem(
        kind=kind,
        joint=joint,
        error_map=weights,
        error_label="a - atilde",
        error_autonomous=True,
        error_a=np.array([[rate]]),
        noise_coeffs=_noise_coefficients(joint, weights, net.input_labels),
        network=net,
        drive_port="bin",
        stability_note="error decays faster than the bare cavity when gamma_l > 0",
        params={"omega": omega, "gamma": gamma, "gamma_l": gamma_l,
                "verifiable": verifiable},
    )


def verification_output(system: ObserverSystem) -> OutputCombination:
    """External comparison signal y - ytilde; its mean tracks the error.

    Only the verifiable observer exposes the tap outputs this needs.
    """
    labels = system.output_labels
    if system.kind != "coherent-verified" or "y" not in labels or "ytilde" not in labels:
        raise NotVerifiableError(
            "only the verifiable observer exposes comparison outputs; "
            "build one with verifiable=True")
    return OutputCombination(coefficients={"y": 1.0 + 0j, "ytilde": -1.0 + 0j},
                             system=system)
