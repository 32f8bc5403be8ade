"""qobs: compile, analyze, simulate, and sweep observer networks.

Exit codes: 0 success, 1 network parse/compile failure (including singular
feedback loops and unreadable network files), 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from .dsl import CompiledNetwork, ParseError, compile_network, parse_network
from .dynamics import (
    Drive,
    Trajectory,
    analyze,
    integrate_covariance,
    integrate_means,
)
from .model import InvalidSpecError, StateSpace
from .network import SingularLoopError
from .observer import (
    ClassicalPlant,
    ObserverSystem,
    build_quantum_observer,
    classical_luenberger,
    one_way_cascade,
    two_way_cascade,
    verification_output,
)

SCENARIOS = ("classical", "oneway", "twoway", "observer", "observer-verified")


class ConfigError(Exception):
    """Bad flag combination or value; maps to exit code 2."""


@dataclass
class _Target:
    name: str
    model: StateSpace
    system: ObserverSystem | None
    compiled: CompiledNetwork | None
    input_labels: tuple[str, ...]
    output_labels: tuple[str, ...]
    mode_labels: tuple[str, ...]
    drive_channel: int | None
    params: dict


def _build_target(args, overrides: dict | None = None) -> _Target:
    params = {
        "omega": args.omega,
        "gamma": args.gamma,
        "gamma_l": args.gamma_l,
        "gain": args.gain,
    }
    if overrides:
        params.update(overrides)
    name = args.scenario
    if name.startswith("file:"):
        path = name[len("file:"):]
        if not path:
            raise ConfigError("file: scenario needs a path")
        try:
            with open(path, "r", encoding="utf-8") as handle:
                text = handle.read()
        except OSError as exc:
            raise _CompileFailure(f"cannot read {path}: {exc}") from exc
        compiled = compile_network(parse_network(text))
        net = compiled.network
        drive = compiled.drive_channels[0] if compiled.drive_channels else None
        return _Target(name=path, model=compiled.model, system=None,
                       compiled=compiled,
                       input_labels=net.input_labels,
                       output_labels=net.output_labels,
                       mode_labels=tuple(net.mode_labels()),
                       drive_channel=drive, params={})
    if name == "classical":
        plant = ClassicalPlant(a=[[-1.0]], c=[[1.0]], b=[[1.0]])
        system = classical_luenberger(plant, params["gain"])
        mode_labels = ("x", "xhat")
    elif name == "oneway":
        system = one_way_cascade(params["omega"], params["gamma"])
        mode_labels = tuple(system.network.mode_labels())
    elif name == "twoway":
        system = two_way_cascade(params["omega"], params["gamma"])
        mode_labels = tuple(system.network.mode_labels())
    elif name in ("observer", "observer-verified"):
        system = build_quantum_observer(params["omega"], params["gamma"],
                                        params["gamma_l"],
                                        verifiable=(name == "observer-verified"))
        mode_labels = tuple(system.network.mode_labels())
    else:
        raise ConfigError(
            f"unknown scenario {name!r}; pick one of {', '.join(SCENARIOS)} "
            "or file:<path>")
    labels_in = system.input_labels
    drive = labels_in.index(system.drive_port) if system.drive_port in labels_in else None
    return _Target(name=name, model=system.joint, system=system, compiled=None,
                   input_labels=labels_in, output_labels=system.output_labels,
                   mode_labels=mode_labels, drive_channel=drive,
                   params={k: v for k, v in system.params.items()})


class _CompileFailure(Exception):
    """Network-level failure; maps to exit code 1."""


def _parse_drive(text: str, target: _Target, horizon: float) -> Drive:
    head, _, rest = text.partition(":")
    kind_map = {"const": "constant", "constant": "constant",
                "sin": "sin", "pulse": "pulse"}
    if head not in kind_map:
        raise ConfigError(f"unknown drive kind {head!r} (use const, sin, or pulse)")
    kind = kind_map[head]
    fields: dict[str, str] = {}
    if rest:
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise ConfigError(f"drive parameter {item!r} is not key=value")
            fields[key.strip()] = val.strip()
    channel = target.drive_channel
    if "port" in fields:
        label = fields.pop("port")
        if label not in target.input_labels:
            raise ConfigError(f"unknown input port {label!r}; "
                              f"inputs are {', '.join(target.input_labels)}")
        channel = target.input_labels.index(label)
    if "channel" in fields:
        try:
            channel = int(fields.pop("channel"))
        except ValueError as exc:
            raise ConfigError("drive channel must be an integer") from exc
    if channel is None:
        raise ConfigError("no default drive port; give port=NAME in --drive")
    try:
        amp = complex(fields.pop("amp", fields.pop("amplitude", "1")))
        freq = float(fields.pop("freq", fields.pop("frequency", "0")))
        start = float(fields.pop("start", "0"))
        end_text = fields.pop("end", "")
        end = float(end_text) if end_text else None
    except ValueError as exc:
        raise ConfigError(f"bad drive parameter value: {exc}") from exc
    if fields:
        raise ConfigError(f"unknown drive parameters: {', '.join(sorted(fields))}")
    if kind == "pulse" and end is None:
        end = horizon
    try:
        return Drive(channel=channel, kind=kind, amplitude=amp,
                     frequency=freq, t_start=start, t_end=end)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_x0(text: str | None, m: int) -> np.ndarray:
    if text is None:
        vec = np.zeros(m, dtype=np.complex128)
        if m:
            vec[0] = 1.0
        return vec
    try:
        values = [complex(tok.strip().replace(" ", "")) for tok in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad --x0 entry: {exc}") from exc
    if len(values) not in (m, 2 * m):
        raise ConfigError(f"--x0 needs {m} (or {2 * m}) comma-separated values")
    return np.array(values, dtype=np.complex128)


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _cmd_compile(args) -> int:
    if args.path is not None:
        args.scenario = f"file:{args.path}"
    target = _build_target(args)
    payload = {
        "scenario": target.name,
        "params": target.params,
        "inputs": list(target.input_labels),
        "outputs": list(target.output_labels),
        "modes": list(target.mode_labels),
        "model": target.model.to_json(),
    }
    if target.system is not None:
        payload["observer"] = target.system.to_json()
    _emit(_json_text(payload), args.out)
    return 0


def _cmd_analyze(args) -> int:
    target = _build_target(args)
    report = analyze(target.model)
    payload = {
        "scenario": target.name,
        "params": target.params,
        "analysis": report.to_json(),
    }
    if target.system is not None:
        sysm = target.system
        payload["error"] = {
            "label": sysm.error_label,
            "autonomous": sysm.error_autonomous,
            "rate": None if sysm.error_a is None else
                    [sysm.error_rate.real, sysm.error_rate.imag]
                    if sysm.error_a.shape == (1, 1) else None,
            "noise_coefficients": {k: [v.real, v.imag]
                                   for k, v in sysm.noise_coeffs.items()},
            "note": sysm.stability_note,
        }
    _emit(_json_text(payload), args.out)
    return 0


def _simulate(args) -> tuple[_Target, Trajectory, list[tuple[str, np.ndarray]], tuple[Drive, ...]]:
    target = _build_target(args)
    drives = tuple(_parse_drive(text, target, args.horizon)
                   for text in (args.drive or ()))
    x0 = _parse_x0(args.x0, target.model.m)
    traj = integrate_means(target.model, x0, drives=drives,
                           horizon=args.horizon, step=args.step,
                           scenario=target.name, params=target.params,
                           labels=target.mode_labels)
    if args.covariance:
        cov = integrate_covariance(target.model, horizon=args.horizon,
                                   step=args.step)
        traj = Trajectory(times=traj.times, means=traj.means,
                          covariances=cov.covariances, scenario=traj.scenario,
                          params=traj.params, labels=traj.labels)
    extras: list[tuple[str, np.ndarray]] = []
    if target.system is not None:
        extras.append(("err", target.system.error_means(traj)))
        if target.system.kind == "coherent-verified":
            combo = verification_output(target.system)
            extras.append(("vout", combo.means(traj, drives)))
    return target, traj, extras, drives


def _cmd_simulate(args) -> int:
    _, traj, extras, _ = _simulate(args)
    if args.out:
        with open(args.out, "w", encoding="ascii") as handle:
            traj.to_csv(handle, extras)
    else:
        traj.to_csv(sys.stdout, extras)
    if args.plot:
        from .plotting import render_trajectory

        render_trajectory(traj, extras, args.plot)
    return 0


_SWEEPABLE = {
    "classical": ("gain",),
    "oneway": ("omega", "gamma"),
    "twoway": ("omega", "gamma"),
    "observer": ("omega", "gamma", "gamma_l"),
    "observer-verified": ("omega", "gamma", "gamma_l"),
}


def _cmd_sweep(args) -> int:
    spec = args.sweep
    name, eq, grid = spec.partition("=")
    if not eq:
        raise ConfigError("--sweep needs name=start:stop:count")
    name = name.strip().replace("-", "_")
    parts = grid.split(":")
    if len(parts) != 3:
        raise ConfigError("--sweep needs name=start:stop:count")
    try:
        start, stop = float(parts[0]), float(parts[1])
        count = int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"bad sweep grid: {exc}") from exc
    if count < 1:
        raise ConfigError("sweep count must be at least 1")
    if args.scenario.startswith("file:"):
        raise ConfigError("sweep works on built-in scenarios only")
    allowed = _SWEEPABLE.get(args.scenario)
    if allowed is None:
        raise ConfigError(f"unknown scenario {args.scenario!r}")
    if name not in allowed:
        raise ConfigError(f"scenario {args.scenario!r} sweeps over "
                          f"{', '.join(allowed)} only")
    values = np.linspace(start, stop, count)
    rates = np.empty(count)
    margins = np.empty(count)
    for i, value in enumerate(values):
        target = _build_target(args, overrides={name: float(value)})
        report = analyze(target.model)
        margins[i] = report.stability_margin
        sysm = target.system
        if sysm is not None and sysm.error_a is not None:
            rates[i] = -float(np.max(np.linalg.eigvals(sysm.error_a).real))
        else:
            rates[i] = -report.stability_margin
    lines = [f"{name},error_decay_rate,stability_margin"]
    for value, rate, margin in zip(values, rates, margins):
        lines.append(f"{float(value)!r},{float(rate)!r},{float(margin)!r}")
    _emit("\n".join(lines) + "\n", args.out)
    if args.plot:
        from .plotting import render_sweep

        render_sweep(name, values, rates, margins, args.plot)
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--scenario", default="oneway",
                     help="classical, oneway, twoway, observer, "
                          "observer-verified, or file:<path>")
    sub.add_argument("--omega", type=float, default=1.0,
                     help="mode detuning (default 1.0)")
    sub.add_argument("--gamma", type=float, default=0.5,
                     help="plant damping rate (default 0.5)")
    sub.add_argument("--gamma-l", dest="gamma_l", type=float, default=2.0,
                     help="observer gain rate (default 2.0)")
    sub.add_argument("--gain", type=float, default=2.0,
                     help="classical observer gain (default 2.0)")
    sub.add_argument("--out", default=None, help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qobs",
        description="Compile, analyze, simulate, and sweep coherent "
                    "observer networks.")
    subs = parser.add_subparsers(dest="command", required=True)

    comp = subs.add_parser("compile", help="emit the reduced model as JSON")
    comp.add_argument("path", nargs="?", default=None,
                      help="network file; shorthand for --scenario file:PATH")
    _add_common(comp)
    comp.set_defaults(func=_cmd_compile)

    ana = subs.add_parser("analyze", help="emit spectrum and stability as JSON")
    _add_common(ana)
    ana.set_defaults(func=_cmd_analyze)

    sim = subs.add_parser("simulate", help="integrate moments and emit CSV")
    _add_common(sim)
    sim.add_argument("--horizon", type=float, default=10.0,
                     help="simulation length (default 10)")
    sim.add_argument("--step", type=float, default=1e-3,
                     help="integrator step (default 1e-3)")
    sim.add_argument("--drive", action="append", default=None,
                     metavar="KIND:K=V,...",
                     help="coherent drive, e.g. sin:amp=1,freq=2 or "
                          "pulse:amp=1,start=0,end=2[,port=NAME]; repeatable")
    sim.add_argument("--x0", default=None,
                     help="comma-separated initial mode means "
                          "(default 1,0,...)")
    sim.add_argument("--covariance", action="store_true",
                     help="also integrate and emit covariance columns")
    sim.add_argument("--plot", default=None, metavar="PATH",
                     help="render the trajectory to an image file")
    sim.set_defaults(func=_cmd_simulate)

    swp = subs.add_parser("sweep", help="scan one parameter and emit CSV")
    _add_common(swp)
    swp.add_argument("--sweep", required=True, metavar="NAME=START:STOP:COUNT",
                     help="parameter grid, e.g. gamma_l=0:4:9")
    swp.add_argument("--plot", default=None, metavar="PATH",
                     help="render decay rates to an image file")
    swp.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"qobs: {exc}", file=sys.stderr)
        return 1
    except (SingularLoopError, _CompileFailure) as exc:
        print(f"qobs: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"qobs: {exc}", file=sys.stderr)
        return 2
    except InvalidSpecError as exc:
        print(f"qobs: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"qobs: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"qobs: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
