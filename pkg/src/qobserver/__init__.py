"""Simulation and synthesis toolkit for linear quantum optical networks
acting as coherent observers: build cavity/beamsplitter networks, reduce
them to input-output models, integrate moment dynamics, and construct
classical or fully quantum estimators with verifiable error decay.
"""

from .model import (
    DEFAULT_TOL,
    DoubledForm,
    InvalidSpecError,
    OscillatorSpec,
    StateSpace,
    derive_state_space,
    from_doubled,
    make_mode,
    mode_with_rows,
    realizability_residual,
    to_doubled,
)
from .network import (
    ComposedNetwork,
    PortInUseError,
    PortNotFoundError,
    SingularLoopError,
    StaticComponent,
    beamsplitter,
    beamsplitter_5050,
    concatenate,
    connect,
    network_from_json,
    network_to_json,
    reduce,
    with_io,
)
from .dynamics import (
    AnalysisReport,
    Drive,
    NotHurwitzError,
    Trajectory,
    analyze,
    fit_decay_rate,
    integrate_covariance,
    integrate_means,
    output_means,
    propagate_exact,
    steady_state_covariance,
    vacuum_covariance,
    vacuum_noise,
)
from .observer import (
    ClassicalPlant,
    NotVerifiableError,
    ObserverSystem,
    OutputCombination,
    build_quantum_observer,
    classical_luenberger,
    detectable,
    one_way_cascade,
    two_way_cascade,
    verification_output,
)
from .dsl import (
    CompiledNetwork,
    NetworkDescription,
    ParseError,
    compile_network,
    parse_network,
    pretty_print,
)

__version__ = "0.1.0"

__all__ = [
    "CompiledNetwork",
    "DEFAULT_TOL",
    "DoubledForm",
    "InvalidSpecError",
    "OscillatorSpec",
    "StateSpace",
    "derive_state_space",
    "from_doubled",
    "make_mode",
    "mode_with_rows",
    "realizability_residual",
    "to_doubled",
    "ComposedNetwork",
    "PortInUseError",
    "PortNotFoundError",
    "SingularLoopError",
    "StaticComponent",
    "beamsplitter",
    "beamsplitter_5050",
    "concatenate",
    "connect",
    "network_from_json",
    "network_to_json",
    "reduce",
    "with_io",
    "AnalysisReport",
    "Drive",
    "NotHurwitzError",
    "Trajectory",
    "analyze",
    "fit_decay_rate",
    "integrate_covariance",
    "integrate_means",
    "output_means",
    "propagate_exact",
    "steady_state_covariance",
    "vacuum_covariance",
    "vacuum_noise",
    "ClassicalPlant",
    "NotVerifiableError",
    "ObserverSystem",
    "OutputCombination",
    "build_quantum_observer",
    "classical_luenberger",
    "detectable",
    "one_way_cascade",
    "two_way_cascade",
    "verification_output",
    "NetworkDescription",
    "ParseError",
    "compile_network",
    "parse_network",
    "pretty_print",
    "__version__",
]
