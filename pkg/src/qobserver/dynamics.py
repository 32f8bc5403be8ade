"""Moment dynamics: mean/covariance integration, steady states, analysis.

First moments of the doubled coordinates obey ``d<x>/dt = Abar <x> + Bbar
u(t)`` where ``u`` stacks classical drive amplitudes on the input channels
(vacuum inputs contribute nothing at this order).  Symmetrized second moments
``S_ij = (1/2) <Dx_i Dx_j^H + Dx_j^H Dx_i>`` obey the Lyapunov equation
``dS/dt = Abar S + S Abar^H + Q`` with the vacuum noise ``Q = (1/2) Bbar
Bbar^H``; the vacuum state itself has ``S = I/2``.  See docs/conventions.md
for the ordering convention.

``integrate_means`` and ``integrate_covariance`` use a fixed-step classical
fourth-order Runge-Kutta scheme and are bitwise reproducible.
``propagate_exact`` computes the matrix exponential by scaling-and-squaring
on a Taylor series and serves as an independent cross-check of the
integrator.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .model import DEFAULT_TOL, StateSpace, complex_to_json, matrix_to_json, to_doubled

__all__ = [
    "NotHurwitzError",
    "Drive",
    "Trajectory",
    "AnalysisReport",
    "vacuum_covariance",
    "vacuum_noise",
    "integrate_means",
    "integrate_covariance",
    "steady_state_covariance",
    "propagate_exact",
    "output_means",
    "fit_decay_rate",
    "analyze",
]


class NotHurwitzError(ValueError):
    """The drift matrix is not strictly stable."""


@dataclass(frozen=True)
class Drive:
    """Classical coherent amplitude injected into one input channel.

    Presets: ``constant`` (amplitude on the support interval), ``sin``
    (``amplitude * sin(frequency * t)``), ``pulse`` (constant with a finite
    support interval required), ``samples`` (piecewise-constant sequence with
    spacing ``sample_step``).
    """

    channel: int
    kind: str = "constant"
    amplitude: complex = 1.0 + 0j
    frequency: float = 0.0
    t_start: float = 0.0
    t_end: float | None = None
    samples: tuple[complex, ...] | None = None
    sample_step: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "sin", "pulse", "samples"):
            raise ValueError(f"unknown drive kind {self.kind!r}")
        if self.channel < 0:
            raise ValueError("drive channel must be a nonnegative index")
        if not cmath.isfinite(complex(self.amplitude)) or not math.isfinite(self.frequency):
            raise ValueError("drive parameters must be finite")
        if self.t_start < 0 or (self.t_end is not None and self.t_end < self.t_start):
            raise ValueError("drive support interval is empty or negative")
        if self.kind == "pulse" and self.t_end is None:
            raise ValueError("pulse drive needs t_end")
        if self.kind == "samples":
            if self.samples is None or self.sample_step is None or self.sample_step <= 0:
                raise ValueError("samples drive needs samples and a positive sample_step")
            seq = tuple(complex(v) for v in self.samples)
            if not all(cmath.isfinite(v) for v in seq):
                raise ValueError("drive samples must be finite")
            object.__setattr__(self, "samples", seq)

    def value(self, t: float) -> complex:
        if t < self.t_start or (self.t_end is not None and t >= self.t_end):
            return 0j
        if self.kind == "sin":
            return self.amplitude * math.sin(self.frequency * t)
        if self.kind == "samples":
            idx = int((t - self.t_start) / self.sample_step)
            if idx >= len(self.samples):
                return 0j
            return self.samples[idx]
        return complex(self.amplitude)


def _drive_field(drives: Sequence[Drive], n: int) -> Callable[[float], np.ndarray] | None:
    if not drives:
        return None
    for drv in drives:
        if drv.channel >= n:
            raise ValueError(f"drive channel {drv.channel} out of range for {n} inputs")

    def u(t: float) -> np.ndarray:
        vec = np.zeros(2 * n, dtype=np.complex128)
        for drv in drives:
            val = drv.value(t)
            vec[drv.channel] += val
            vec[n + drv.channel] += val.conjugate()
        return vec

    return u


def _check_support(drives: Sequence[Drive], horizon: float) -> None:
    for drv in drives:
        end = drv.t_end
        if drv.kind == "samples":
            end = drv.t_start + len(drv.samples) * drv.sample_step
        if drv.t_start > horizon or (end is not None and end > horizon + 1e-9):
            raise ValueError("drive support extends beyond the simulation horizon")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled moment trajectory on a uniform time grid.

    ``means`` holds the doubled coordinates (modes then their adjoints), one
    row per sample; ``covariances`` optionally holds the symmetrized doubled
    covariance matrix per sample.
    """

    times: np.ndarray
    means: np.ndarray | None = None
    covariances: np.ndarray | None = None
    scenario: str = ""
    params: dict = field(default_factory=dict)
    labels: tuple[str, ...] = ()

    @property
    def num_modes(self) -> int:
        if self.means is not None:
            return self.means.shape[1] // 2
        if self.covariances is not None:
            return self.covariances.shape[1] // 2
        return 0

    def conjugation_defect(self) -> float:
        """Worst deviation of the creation-sector means from the conjugated
        annihilation-sector means."""
        if self.means is None:
            return 0.0
        m = self.num_modes
        return float(np.max(np.abs(self.means[:, m:] - self.means[:, :m].conj()), initial=0.0))

    def hermiticity_defect(self) -> float:
        if self.covariances is None:
            return 0.0
        swapped = np.transpose(self.covariances, (0, 2, 1)).conj()
        return float(np.max(np.abs(self.covariances - swapped), initial=0.0))

    def to_csv(self, path, extra: Sequence[tuple[str, np.ndarray]] = ()) -> None:
        """Write ``t,re(x1),im(x1),...`` rows (annihilation-sector means),
        any extra named complex columns, then covariance entries if present."""
        m = self.num_modes
        header = ["t"]
        for i in range(m if self.means is not None else 0):
            header += [f"re(x{i + 1})", f"im(x{i + 1})"]
        for name, _ in extra:
            header += [f"re({name})", f"im({name})"]
        if self.covariances is not None:
            for i in range(2 * m):
                for j in range(2 * m):
                    header += [f"re(cov{i + 1}_{j + 1})", f"im(cov{i + 1}_{j + 1})"]
        lines = [",".join(header)]
        for row, t in enumerate(self.times):
            cells = [repr(float(t))]
            if self.means is not None:
                for i in range(m):
                    z = self.means[row, i]
                    cells += [repr(float(z.real)), repr(float(z.imag))]
            for _, series in extra:
                z = complex(series[row])
                cells += [repr(z.real), repr(z.imag)]
            if self.covariances is not None:
                for z in self.covariances[row].ravel():
                    cells += [repr(float(z.real)), repr(float(z.imag))]
            lines.append(",".join(cells))
        text = "\n".join(lines) + "\n"
        if hasattr(path, "write"):
            path.write(text)
        else:
            with open(path, "w", encoding="ascii") as handle:
                handle.write(text)


def _time_grid(horizon: float, step: float) -> np.ndarray:
    if step <= 0:
        raise ValueError("step must be positive")
    if horizon < step:
        raise ValueError("horizon must cover at least one step")
    nsteps = int(round(horizon / step))
    return np.arange(nsteps + 1) * step


def _doubled_initial(ss: StateSpace, x0) -> np.ndarray:
    vec = np.asarray(x0, dtype=np.complex128).ravel()
    if vec.shape[0] == ss.m:
        return np.concatenate([vec, vec.conj()])
    if vec.shape[0] == 2 * ss.m:
        defect = np.max(np.abs(vec[ss.m:] - vec[:ss.m].conj()), initial=0.0)
        if defect > DEFAULT_TOL:
            raise ValueError("initial means are not conjugation-consistent")
        return vec.copy()
    raise ValueError(f"initial means must have length {ss.m} or {2 * ss.m}")


def integrate_means(ss: StateSpace, x0, drives: Sequence[Drive] = (),
                    horizon: float = 10.0, step: float = 1e-3,
                    scenario: str = "", params: dict | None = None,
                    labels: tuple[str, ...] = ()) -> Trajectory:
    """Propagate first moments with fixed-step RK4.

    ``x0`` may list the mode means (length m, the adjoint half is inferred)
    or the full doubled vector (length 2m, checked for consistency).
    """
    times = _time_grid(horizon, step)
    _check_support(drives, float(times[-1]))
    df = to_doubled(ss)
    ab, bb = df.abar, df.bbar
    u = _drive_field(drives, ss.n)
    means = np.empty((times.shape[0], 2 * ss.m), dtype=np.complex128)
    means[0] = _doubled_initial(ss, x0)
    h = step
    for i in range(times.shape[0] - 1):
        t = times[i]
        x = means[i]
        if u is None:
            k1 = ab @ x
            k2 = ab @ (x + 0.5 * h * k1)
            k3 = ab @ (x + 0.5 * h * k2)
            k4 = ab @ (x + h * k3)
        else:
            u0, um, u1 = u(t), u(t + 0.5 * h), u(t + h)
            k1 = ab @ x + bb @ u0
            k2 = ab @ (x + 0.5 * h * k1) + bb @ um
            k3 = ab @ (x + 0.5 * h * k2) + bb @ um
            k4 = ab @ (x + h * k3) + bb @ u1
        means[i + 1] = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return Trajectory(times=_frozen_real(times), means=means,
                      scenario=scenario, params=dict(params or {}), labels=labels)


def _frozen_real(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


def vacuum_covariance(m: int) -> np.ndarray:
    """Symmetrized doubled covariance of m modes in vacuum: I/2."""
    return 0.5 * np.eye(2 * m, dtype=np.complex128)


def vacuum_noise(ss: StateSpace) -> np.ndarray:
    """Symmetrized vacuum diffusion matrix ``(1/2) Bbar Bbar^H``."""
    bb = to_doubled(ss).bbar
    q = 0.5 * (bb @ bb.conj().T)
    return 0.5 * (q + q.conj().T)


def integrate_covariance(ss: StateSpace, sigma0=None,
                         horizon: float = 10.0, step: float = 1e-3,
                         scenario: str = "", params: dict | None = None,
                         labels: tuple[str, ...] = ()) -> Trajectory:
    """Propagate the symmetrized covariance with fixed-step RK4.

    ``sigma0`` defaults to the vacuum covariance I/2 and must be Hermitian.
    """
    times = _time_grid(horizon, step)
    ab = to_doubled(ss).abar
    abh = ab.conj().T
    q = vacuum_noise(ss)
    if sigma0 is None:
        sigma0 = vacuum_covariance(ss.m)
    sigma0 = np.array(sigma0, dtype=np.complex128)
    if sigma0.shape != (2 * ss.m, 2 * ss.m):
        raise ValueError(f"sigma0 must be {2 * ss.m}x{2 * ss.m}")
    if np.max(np.abs(sigma0 - sigma0.conj().T), initial=0.0) > DEFAULT_TOL:
        raise ValueError("sigma0 must be Hermitian")
    covs = np.empty((times.shape[0], 2 * ss.m, 2 * ss.m), dtype=np.complex128)
    covs[0] = sigma0

    def rhs(s: np.ndarray) -> np.ndarray:
        return ab @ s + s @ abh + q

    h = step
    for i in range(times.shape[0] - 1):
        s = covs[i]
        k1 = rhs(s)
        k2 = rhs(s + 0.5 * h * k1)
        k3 = rhs(s + 0.5 * h * k2)
        k4 = rhs(s + h * k3)
        covs[i + 1] = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return Trajectory(times=_frozen_real(times), covariances=covs,
                      scenario=scenario, params=dict(params or {}), labels=labels)


def steady_state_covariance(ss: StateSpace, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Solve ``Abar S + S Abar^H + Q = 0`` for the stationary covariance.

    Raises :class:`NotHurwitzError` when the doubled drift is only marginally
    stable or unstable (no unique steady state exists).
    """
    ab = to_doubled(ss).abar
    margin = float(np.max(np.linalg.eigvals(ab).real))
    if margin >= -tol:
        raise NotHurwitzError(
            f"drift is not Hurwitz (stability margin {margin:.3g}); "
            "the network is marginally stable or unstable")
    sigma = scipy.linalg.solve_continuous_lyapunov(ab, -vacuum_noise(ss))
    return 0.5 * (sigma + sigma.conj().T)


def _expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring on the Taylor series."""
    dim = a.shape[0]
    eye = np.eye(dim, dtype=np.complex128)
    if dim == 0:
        return eye
    norm = float(np.linalg.norm(a, np.inf))
    if norm == 0.0:
        return eye
    squarings = max(0, int(math.ceil(math.log2(norm))) + 1)
    x = a / (2.0 ** squarings)
    total = eye.copy()
    term = eye.copy()
    for k in range(1, 64):
        term = term @ x / k
        total = total + term
        if float(np.max(np.abs(term))) <= 1e-18 * max(1.0, float(np.max(np.abs(total)))):
            break
    for _ in range(squarings):
        total = total @ total
    return total


def propagate_exact(ss: StateSpace, t: float) -> np.ndarray:
    """Exact doubled-mean propagator ``exp(Abar t)``.

    Independent of the RK4 integrator; used as its oracle.
    """
    if not math.isfinite(t):
        raise ValueError("time must be finite")
    return _expm(to_doubled(ss).abar * t)


def output_means(ss: StateSpace, traj: Trajectory, drives: Sequence[Drive] = ()) -> np.ndarray:
    """Doubled output means ``Cbar x(t) + Dbar u(t)`` along a trajectory."""
    if traj.means is None:
        raise ValueError("trajectory has no means")
    df = to_doubled(ss)
    out = traj.means @ df.cbar.T
    u = _drive_field(drives, ss.n)
    if u is not None:
        stacked = np.stack([u(float(t)) for t in traj.times])
        out = out + stacked @ df.dbar.T
    return out


def fit_decay_rate(times: np.ndarray, values: np.ndarray,
                   floor: float = 1e-12) -> tuple[float | None, float | None]:
    """Log-linear least-squares decay rate of ``|values|`` over the tail half.

    Samples with magnitude below ``floor`` are skipped.  Returns ``(rate,
    rms_residual)`` or ``(None, None)`` when fewer than two usable samples
    remain.
    """
    n = len(times)
    start = n // 2
    t = np.asarray(times, dtype=float)[start:]
    v = np.abs(np.asarray(values))[start:]
    mask = v > floor
    if int(mask.sum()) < 2:
        return None, None
    logs = np.log(v[mask])
    slope, intercept = np.polyfit(t[mask], logs, 1)
    resid = float(np.sqrt(np.mean((logs - (slope * t[mask] + intercept)) ** 2)))
    return float(-slope), resid


@dataclass(frozen=True, eq=False)
class AnalysisReport:
    """Spectral and decay summary of a model (doubled form)."""

    eigenvalues: np.ndarray
    stability_margin: float
    is_hurwitz: bool
    df_eigenvalues: np.ndarray
    df_basis: np.ndarray
    fitted_rate: float | None
    fit_residual: float | None
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "eigenvalues": [complex_to_json(z) for z in self.eigenvalues],
            "stability_margin": self.stability_margin,
            "is_hurwitz": self.is_hurwitz,
            "decoherence_free": {
                "eigenvalues": [complex_to_json(z) for z in self.df_eigenvalues],
                "basis": matrix_to_json(self.df_basis),
            },
            "fitted_rate": self.fitted_rate,
            "fit_residual": self.fit_residual,
            "metadata": self.metadata,
        }


def _canonical_phase(vec: np.ndarray) -> np.ndarray:
    idx = int(np.argmax(np.abs(vec)))
    pivot = vec[idx]
    if abs(pivot) == 0.0:
        return vec
    return vec * (abs(pivot) / pivot)


def analyze(ss: StateSpace, selector=None, trajectory: Trajectory | None = None,
            tol: float = DEFAULT_TOL, metadata: dict | None = None) -> AnalysisReport:
    """Eigenvalues, stability margin, decoherence-free directions, decay fit.

    A decoherence-free direction is a left eigenvector of the doubled drift
    whose eigenvalue has negligible real part and which does not couple to
    any input (``norm(v^H Bbar) < tol``).  When a trajectory and a selector
    row over its coordinates are supplied, the decay rate of the selected
    coordinate's mean magnitude is fitted over the tail half of the horizon.
    """
    df = to_doubled(ss)
    ab, bb = df.abar, df.bbar
    eigs = np.linalg.eigvals(ab)
    order = np.lexsort((eigs.imag, eigs.real))
    eigs = eigs[order]
    margin = float(np.max(eigs.real)) if eigs.size else float("-inf")
    df_eigs: list[complex] = []
    df_vecs: list[np.ndarray] = []
    if ab.size:
        w, vl = scipy.linalg.eig(ab, left=True, right=False)
        for i in np.lexsort((w.imag, w.real)):
            if abs(w[i].real) >= tol:
                continue
            v = vl[:, i]
            v = v / np.linalg.norm(v)
            if np.linalg.norm(v.conj() @ bb) < tol:
                df_eigs.append(complex(w[i]))
                df_vecs.append(_canonical_phase(v))
    fitted_rate = fit_residual = None
    if trajectory is not None and selector is not None and trajectory.means is not None:
        sel = np.asarray(selector, dtype=np.complex128).ravel()
        m = trajectory.num_modes
        if sel.shape[0] == m:
            sel = np.concatenate([sel, np.zeros(m, dtype=np.complex128)])
        if sel.shape[0] != 2 * m:
            raise ValueError("selector length must match the mode or doubled dimension")
        series = trajectory.means @ sel
        fitted_rate, fit_residual = fit_decay_rate(trajectory.times, series)
    basis = np.array(df_vecs) if df_vecs else np.zeros((0, ab.shape[0]), dtype=np.complex128)
    return AnalysisReport(
        eigenvalues=_frozen(eigs),
        stability_margin=margin,
        is_hurwitz=bool(margin < -tol),
        df_eigenvalues=_frozen(np.array(df_eigs, dtype=np.complex128)),
        df_basis=_frozen(basis),
        fitted_rate=fitted_rate,
        fit_residual=fit_residual,
        metadata=dict(metadata or {}),
    )


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr)
    out = out.copy()
    out.setflags(write=False)
    return out
