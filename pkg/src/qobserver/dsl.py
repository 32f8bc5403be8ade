"""A small text format for describing cavity/beamsplitter networks.

Statements (newlines are ordinary whitespace, ``#`` comments to end of line):

    mode NAME(omega=EXPR) { couple annihilation EXPR [phase=EXPR] ... }
    bs NAME[(theta=EXPR)]
    connect NAME.out[K] -> NAME.in[J]
    input ALIAS NAME.in[K]
    output ALIAS NAME.out[K]
    drive ALIAS            # or drive NAME.in[K] for an aliased port

Numeric expressions are float literals with optional ``pi`` factors
(``pi``, ``pi/4``, ``2*pi``, ``-0.5``).  ``couple`` declares one input-output
channel of a mode; ``annihilation`` couples the splitter network to the mode
itself with amplitude ``sqrt(rate) * exp(i*phase)``, ``creation`` couples to
its adjoint (an amplifying channel).  ``bs`` ports are ``in[0..1]`` and
``out[0..1]`` with the mixing matrix [[cos t, sin t], [sin t, -cos t]].

Parsing is total: any input either yields a :class:`NetworkDescription` or
raises :class:`ParseError` carrying a category, line, and column.
``pretty_print`` renders a description back to text that reparses equal.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Union

from .model import StateSpace, mode_with_rows, derive_state_space
from .network import ComposedNetwork, beamsplitter, concatenate, connect, reduce, with_io

__all__ = [
    "ParseError",
    "Position",
    "CouplingDecl",
    "ModeDecl",
    "SplitterDecl",
    "PortRef",
    "Connection",
    "IoDecl",
    "DriveDecl",
    "NetworkDescription",
    "CompiledNetwork",
    "parse_network",
    "pretty_print",
    "compile_network",
]

KEYWORDS = frozenset({
    "mode", "bs", "connect", "input", "output", "drive",
    "couple", "annihilation", "creation", "omega", "theta", "phase",
    "in", "out", "pi",
})

ERROR_KINDS = ("syntax", "unknown-component", "bad-parameter",
               "dangling-port", "duplicate-connection")


class ParseError(ValueError):
    """Rejection of a network description, with category and location."""

    def __init__(self, kind: str, line: int, col: int, message: str):
        assert kind in ERROR_KINDS
        self.kind = kind
        self.line = line
        self.col = col
        self.message = message
        super().__init__(f"line {line}, col {col}: {kind}: {message}")


@dataclass(frozen=True)
class Position:
    line: int = 0
    col: int = 0


_NOWHERE = Position()


@dataclass(frozen=True)
class CouplingDecl:
    kind: str
    rate: float
    phase: float = 0.0
    pos: Position = field(default=_NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class ModeDecl:
    name: str
    omega: float
    couplings: tuple[CouplingDecl, ...]
    pos: Position = field(default=_NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class SplitterDecl:
    name: str
    theta: float = math.pi / 4
    pos: Position = field(default=_NOWHERE, compare=False, repr=False)


ComponentDecl = Union[ModeDecl, SplitterDecl]


@dataclass(frozen=True)
class PortRef:
    component: str
    direction: str
    index: int
    pos: Position = field(default=_NOWHERE, compare=False, repr=False)

    @property
    def canonical(self) -> str:
        return f"{self.component}.{self.direction}[{self.index}]"


@dataclass(frozen=True)
class Connection:
    src: PortRef
    dst: PortRef
    pos: Position = field(default=_NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class IoDecl:
    kind: str
    alias: str
    port: PortRef
    pos: Position = field(default=_NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class DriveDecl:
    alias: str
    pos: Position = field(default=_NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class NetworkDescription:
    """Validated abstract form of a network file."""

    components: tuple[ComponentDecl, ...] = ()
    connections: tuple[Connection, ...] = ()
    inputs: tuple[IoDecl, ...] = ()
    outputs: tuple[IoDecl, ...] = ()
    drives: tuple[DriveDecl, ...] = ()


@dataclass(frozen=True, eq=False)
class CompiledNetwork:
    """A description lowered to an input-output model."""

    description: NetworkDescription
    network: ComposedNetwork
    model: StateSpace
    drive_channels: tuple[int, ...]


_TOKEN_RE = re.compile(r"""
      (?P<ws>[ \t\r]+)
    | (?P<comment>\#[^\n]*)
    | (?P<nl>\n)
    | (?P<arrow>->)
    | (?P<number>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
    | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<punct>[(){}\[\]=.*/,-])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col, i = 1, 1, 0
    n = len(text)
    while i < n:
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise ParseError("syntax", line, col, f"unexpected character {text[i]!r}")
        kind = m.lastgroup
        tok = m.group()
        if kind == "nl":
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(tok)
        else:
            tokens.append(_Token(kind, tok, line, col))
            col += len(tok)
        i = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def fail(self, kind: str, tok: _Token, message: str) -> ParseError:
        return ParseError(kind, tok.line, tok.col, message)

    def expect(self, text: str, what: str = "") -> _Token:
        tok = self.peek()
        if tok.text != text or tok.kind == "eof":
            raise self.fail("syntax", tok, what or f"expected {text!r}")
        return self.advance()

    def expect_name(self, what: str) -> _Token:
        tok = self.peek()
        if tok.kind != "name":
            raise self.fail("syntax", tok, f"expected {what}")
        if tok.text in KEYWORDS:
            raise self.fail("syntax", tok, f"{tok.text!r} is reserved and cannot name {what}")
        return self.advance()

    def number(self, what: str) -> tuple[float, _Token]:
        """EXPR := [-] atom (('*'|'/') atom)*, atom := FLOAT | pi."""
        first = self.peek()
        sign = 1.0
        if first.text == "-":
            self.advance()
            sign = -1.0

        def atom() -> float:
            tok = self.peek()
            if tok.kind == "number":
                self.advance()
                return float(tok.text)
            if tok.kind == "name" and tok.text == "pi":
                self.advance()
                return math.pi
            raise self.fail("syntax", tok, f"expected a number for {what}")

        value = atom()
        while self.peek().text in ("*", "/") and self.peek().kind == "punct":
            op = self.advance().text
            rhs_tok = self.peek()
            rhs = atom()
            if op == "/":
                if rhs == 0.0:
                    raise self.fail("bad-parameter", rhs_tok, f"division by zero in {what}")
                value /= rhs
            else:
                value *= rhs
        value *= sign
        if not math.isfinite(value):
            raise self.fail("bad-parameter", first, f"{what} is not finite")
        return value, first

    def integer(self, what: str) -> int:
        tok = self.peek()
        if tok.kind != "number" or not tok.text.isdigit():
            raise self.fail("syntax", tok, f"expected an integer {what}")
        self.advance()
        return int(tok.text)

    def port_ref(self) -> PortRef:
        name = self.expect_name("a component")
        self.expect(".", "expected '.' after component name in port reference")
        dir_tok = self.peek()
        if dir_tok.kind != "name" or dir_tok.text not in ("in", "out"):
            raise self.fail("syntax", dir_tok, "expected 'in' or 'out' in port reference")
        self.advance()
        self.expect("[", "expected '[' in port reference")
        index = self.integer("port index")
        self.expect("]", "expected ']' in port reference")
        return PortRef(name.text, dir_tok.text, index,
                       Position(name.line, name.col))

    def looks_like_port(self) -> bool:
        nxt = self.tokens[self.i + 1] if self.i + 1 < len(self.tokens) else None
        return nxt is not None and nxt.text == "." and nxt.kind == "punct"

    def parse_mode(self) -> ModeDecl:
        start = self.advance()
        name = self.expect_name("a mode")
        self.expect("(", "expected '(' after mode name")
        key = self.peek()
        if key.kind != "name" or key.text != "omega":
            raise self.fail("syntax", key, "expected 'omega='")
        self.advance()
        self.expect("=", "expected '=' after omega")
        omega, _ = self.number("omega")
        self.expect(")", "expected ')' after omega value")
        self.expect("{", "expected '{' opening the coupling list")
        couplings: list[CouplingDecl] = []
        while True:
            tok = self.peek()
            if tok.text == "}" and tok.kind == "punct":
                self.advance()
                break
            if tok.kind == "eof":
                raise self.fail("syntax", tok, "unterminated mode body, expected '}'")
            if tok.kind != "name" or tok.text != "couple":
                raise self.fail("syntax", tok, "expected 'couple' or '}' in mode body")
            self.advance()
            kind_tok = self.peek()
            if kind_tok.kind != "name" or kind_tok.text not in ("annihilation", "creation"):
                raise self.fail("bad-parameter", kind_tok,
                                "coupling kind must be 'annihilation' or 'creation'")
            self.advance()
            rate, rate_tok = self.number("coupling rate")
            if rate < 0:
                raise self.fail("bad-parameter", rate_tok, "coupling rate must be nonnegative")
            phase = 0.0
            nxt = self.peek()
            if nxt.kind == "name" and nxt.text == "phase":
                self.advance()
                self.expect("=", "expected '=' after phase")
                phase, _ = self.number("phase")
            couplings.append(CouplingDecl(kind_tok.text, rate, phase,
                                          Position(kind_tok.line, kind_tok.col)))
        return ModeDecl(name.text, omega, tuple(couplings),
                        Position(start.line, start.col))

    def parse_splitter(self) -> SplitterDecl:
        start = self.advance()
        name = self.expect_name("a beamsplitter")
        theta = math.pi / 4
        if self.peek().text == "(" and self.peek().kind == "punct":
            self.advance()
            key = self.peek()
            if key.kind != "name" or key.text != "theta":
                raise self.fail("syntax", key, "expected 'theta='")
            self.advance()
            self.expect("=", "expected '=' after theta")
            theta, _ = self.number("theta")
            self.expect(")", "expected ')' after theta value")
        return SplitterDecl(name.text, theta, Position(start.line, start.col))

    def parse_connect(self) -> Connection:
        start = self.advance()
        src = self.port_ref()
        if src.direction != "out":
            raise ParseError("syntax", src.pos.line, src.pos.col,
                             "connect source must be an out port")
        arrow = self.peek()
        if arrow.kind != "arrow":
            raise self.fail("syntax", arrow, "expected '->' between ports")
        self.advance()
        dst = self.port_ref()
        if dst.direction != "in":
            raise ParseError("syntax", dst.pos.line, dst.pos.col,
                             "connect destination must be an in port")
        return Connection(src, dst, Position(start.line, start.col))

    def parse_io(self) -> IoDecl:
        start = self.advance()
        alias = self.expect_name("an alias")
        port = self.port_ref()
        want = "in" if start.text == "input" else "out"
        if port.direction != want:
            raise ParseError("bad-parameter", port.pos.line, port.pos.col,
                             f"{start.text} alias must name an {want} port")
        return IoDecl(start.text, alias.text, port, Position(start.line, start.col))

    def parse_drive(self) -> tuple[DriveDecl, PortRef | None]:
        start = self.advance()
        if self.looks_like_port():
            port = self.port_ref()
            return DriveDecl("", Position(start.line, start.col)), port
        alias = self.expect_name("an input alias")
        return DriveDecl(alias.text, Position(alias.line, alias.col)), None

    def parse_file(self) -> tuple[NetworkDescription, list[tuple[DriveDecl, PortRef | None]]]:
        components: list[ComponentDecl] = []
        connections: list[Connection] = []
        inputs: list[IoDecl] = []
        outputs: list[IoDecl] = []
        drives: list[tuple[DriveDecl, PortRef | None]] = []
        while True:
            tok = self.peek()
            if tok.kind == "eof":
                break
            if tok.kind != "name":
                raise self.fail("syntax", tok, "expected a statement keyword")
            if tok.text == "mode":
                components.append(self.parse_mode())
            elif tok.text == "bs":
                components.append(self.parse_splitter())
            elif tok.text == "connect":
                connections.append(self.parse_connect())
            elif tok.text in ("input", "output"):
                decl = self.parse_io()
                (inputs if decl.kind == "input" else outputs).append(decl)
            elif tok.text == "drive":
                drives.append(self.parse_drive())
            else:
                raise self.fail("syntax", tok,
                                "expected mode, bs, connect, input, output, or drive")
        desc = NetworkDescription(tuple(components), tuple(connections),
                                  tuple(inputs), tuple(outputs))
        return desc, drives


def _port_count(comp: ComponentDecl) -> int:
    if isinstance(comp, ModeDecl):
        return len(comp.couplings)
    return 2


def _validate(desc: NetworkDescription,
              raw_drives: list[tuple[DriveDecl, PortRef | None]]) -> NetworkDescription:
    comps: dict[str, ComponentDecl] = {}
    for comp in desc.components:
        if comp.name in comps:
            raise ParseError("bad-parameter", comp.pos.line, comp.pos.col,
                             f"component {comp.name!r} is declared twice")
        comps[comp.name] = comp

    def check_port(ref: PortRef) -> None:
        comp = comps.get(ref.component)
        if comp is None:
            raise ParseError("unknown-component", ref.pos.line, ref.pos.col,
                             f"unknown component {ref.component!r}")
        if ref.index >= _port_count(comp):
            raise ParseError("dangling-port", ref.pos.line, ref.pos.col,
                             f"{ref.canonical} does not exist: {ref.component!r} "
                             f"has {_port_count(comp)} channels")

    used: dict[tuple[str, str, int], Position] = {}

    def claim(ref: PortRef) -> None:
        key = (ref.component, ref.direction, ref.index)
        if key in used:
            first = used[key]
            raise ParseError("duplicate-connection", ref.pos.line, ref.pos.col,
                             f"{ref.canonical} is already used at line {first.line}, "
                             f"col {first.col}")
        used[key] = ref.pos

    for conn in desc.connections:
        check_port(conn.src)
        check_port(conn.dst)
        claim(conn.src)
        claim(conn.dst)

    aliases: dict[str, IoDecl] = {}
    alias_port: dict[str, PortRef] = {}
    for decl in desc.inputs + desc.outputs:
        check_port(decl.port)
        claim(decl.port)
        if decl.alias in aliases:
            raise ParseError("bad-parameter", decl.pos.line, decl.pos.col,
                             f"alias {decl.alias!r} is declared twice")
        aliases[decl.alias] = decl
        alias_port[decl.alias] = decl.port

    input_by_port = {(d.port.component, d.port.index): d.alias for d in desc.inputs}
    resolved: list[DriveDecl] = []
    for decl, port in raw_drives:
        if port is not None:
            check_port(port)
            alias = input_by_port.get((port.component, port.index))
            if alias is None:
                raise ParseError("bad-parameter", port.pos.line, port.pos.col,
                                 f"drive target {port.canonical} is not an aliased input")
            resolved.append(DriveDecl(alias, decl.pos))
            continue
        if decl.alias not in input_by_port.values():
            raise ParseError("unknown-component", decl.pos.line, decl.pos.col,
                             f"unknown input alias {decl.alias!r}")
        resolved.append(decl)
    return NetworkDescription(desc.components, desc.connections,
                              desc.inputs, desc.outputs, tuple(resolved))


def parse_network(text: str) -> NetworkDescription:
    """Parse and validate a network description; raise ParseError on any flaw."""
    parser = _Parser(text)
    desc, drives = parser.parse_file()
    return _validate(desc, drives)


def _format_number(value: float) -> str:
    return repr(float(value))


def pretty_print(desc: NetworkDescription) -> str:
    """Render a description to text that reparses to an equal description."""
    lines: list[str] = []
    for comp in desc.components:
        if isinstance(comp, ModeDecl):
            lines.append(f"mode {comp.name}(omega={_format_number(comp.omega)}) {{")
            for coup in comp.couplings:
                entry = f"    couple {coup.kind} {_format_number(coup.rate)}"
                if coup.phase != 0.0:
                    entry += f" phase={_format_number(coup.phase)}"
                lines.append(entry)
            lines.append("}")
        else:
            lines.append(f"bs {comp.name}(theta={_format_number(comp.theta)})")
    for conn in desc.connections:
        lines.append(f"connect {conn.src.canonical} -> {conn.dst.canonical}")
    for decl in desc.inputs:
        lines.append(f"input {decl.alias} {decl.port.canonical}")
    for decl in desc.outputs:
        lines.append(f"output {decl.alias} {decl.port.canonical}")
    for drv in desc.drives:
        lines.append(f"drive {drv.alias}")
    return "\n".join(lines) + "\n"


def _build_component(comp: ComponentDecl):
    if isinstance(comp, SplitterDecl):
        return beamsplitter(comp.theta)
    rows = []
    for coup in comp.couplings:
        amp = math.sqrt(coup.rate)
        if coup.phase != 0.0:
            amp = amp * complex(math.cos(coup.phase), math.sin(coup.phase))
        rows.append((amp, 0.0) if coup.kind == "annihilation" else (0.0, amp))
    return derive_state_space(mode_with_rows(comp.omega, rows))


def compile_network(desc: NetworkDescription, rcond: float = 1e-12) -> CompiledNetwork:
    """Lower a validated description to a reduced input-output model.

    Components are concatenated in declaration order, connections applied in
    order, and external ports labeled with the declared aliases (aliased
    inputs first, in declaration order, then any unaliased ports).
    """
    if not desc.components:
        raise ParseError("syntax", 1, 1, "a network needs at least one component")
    net = concatenate([(comp.name, _build_component(comp)) for comp in desc.components])
    for conn in desc.connections:
        net = connect(net, conn.src.canonical, conn.dst.canonical)
    net = with_io(net,
                  inputs=[(d.alias, d.port.canonical) for d in desc.inputs],
                  outputs=[(d.alias, d.port.canonical) for d in desc.outputs])
    model = reduce(net, rcond=rcond)
    labels = net.input_labels
    channels = tuple(labels.index(drv.alias) for drv in desc.drives)
    return CompiledNetwork(description=desc, network=net, model=model,
                           drive_channels=channels)
