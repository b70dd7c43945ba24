"""SCPI line grammar: tokenizer, mnemonic table and printer.

A command header is a path of mnemonics. Each mnemonic is written in the
table with its short form in capitals (``FREQuency``); input matches either
the short form or the full word, case-insensitively. Optional nodes are
marked with brackets (``BANDwidth[:RESolution]``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

MAX_LINE_BYTES = 4096


class ScpiError(Exception):
    """Error with a SCPI error-queue code (negative, standard classes)."""

    def __init__(self, code: int, message: str, position: int | None = None):
        super().__init__(f"{code},{message}" + (f" at column {position}" if position is not None else ""))
        self.code = code
        self.message = message
        self.position = position

    def response(self) -> str:
        return f'{self.code},"{self.message}"'


class ScpiParseError(ScpiError):
    pass


class Word(str):
    """Unquoted character-data argument (a mnemonic such as TRACE1 or MAXH)."""

    def __repr__(self) -> str:
        return f"Word({str.__repr__(self)})"


Arg = float | Word | str


@dataclass(frozen=True)
class Mnemonic:
    long: str
    short: str

    @classmethod
    def parse(cls, spec: str) -> "Mnemonic":
        short = "".join(ch for ch in spec if ch.isupper() or ch.isdigit() or ch == "*")
        return cls(spec.upper(), short)

    def matches(self, token: str) -> bool:
        t = token.upper()
        return t == self.long or t == self.short


@dataclass(frozen=True)
class CommandDef:
    """One grammar entry: mnemonic path plus which forms are legal."""

    pattern: str
    settable: bool = True
    queryable: bool = True
    nodes: tuple[tuple[Mnemonic, bool], ...] = field(init=False)

    def __post_init__(self) -> None:
        nodes = []
        for part in re.findall(r"\[:?[^\]]+\]|[^:\[\]]+", self.pattern):
            optional = part.startswith("[")
            name = part.strip("[]:")
            nodes.append((Mnemonic.parse(name), optional))
        object.__setattr__(self, "nodes", tuple(nodes))

    @property
    def canonical(self) -> tuple[str, ...]:
        return tuple(m.long for m, _ in self.nodes)

    def match(self, tokens: list[str]) -> bool:
        i = 0
        for m, optional in self.nodes:
            if i < len(tokens) and m.matches(tokens[i]):
                i += 1
            elif not optional:
                return False
        return i == len(tokens)

    def forms(self) -> list[tuple[str, ...]]:
        """Every spelling (short/long per node, with and without optional nodes)."""
        out: list[tuple[str, ...]] = [()]
        for m, optional in self.nodes:
            nxt = []
            for prefix in out:
                nxt.append(prefix + (m.short,))
                if m.long != m.short:
                    nxt.append(prefix + (m.long,))
                if optional:
                    nxt.append(prefix)
            out = nxt
        return out


GRAMMAR: tuple[CommandDef, ...] = (
    CommandDef("*IDN", settable=False),
    CommandDef("*RST", queryable=False),
    CommandDef("*OPC", settable=False),
    CommandDef("FREQuency:CENTer"),
    CommandDef("FREQuency:SPAN"),
    CommandDef("BANDwidth[:RESolution]"),
    CommandDef("BANDwidth:VIDeo"),
    CommandDef("DETector"),
    CommandDef("INITiate[:IMMediate]", queryable=False),
    CommandDef("TRACe:DATA", settable=False),
    CommandDef("SYSTem:POSE"),
)


@dataclass(frozen=True)
class ScpiCommand:
    header: tuple[str, ...]
    is_query: bool = False
    args: tuple[Arg, ...] = ()

    @property
    def name(self) -> str:
        return ":".join(self.header)


_NUM_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_WORD_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*")
_HDR_RE = re.compile(r"(\*[A-Za-z]+|:?[A-Za-z][A-Za-z0-9]*(?::[A-Za-z][A-Za-z0-9]*)*)(\?)?")
_SUFFIX = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9, "S": 1.0, "MS": 1e-3, "M": 1.0, "MM": 1e-3, "DEG": 1.0}


def lookup(tokens: list[str]) -> CommandDef | None:
    for d in GRAMMAR:
        if d.match(tokens):
            return d
    return None


def _parse_args(text: str, offset: int) -> tuple[Arg, ...]:
    args: list[Arg] = []
    i = 0
    n = len(text)
    while True:
        while i < n and text[i] in " \t":
            i += 1
        if i >= n:
            if args:
                raise ScpiParseError(-109, "Missing parameter", offset + i)
            break
        c = text[i]
        if c in "\"'":
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise ScpiParseError(-151, "Invalid string data", offset + i)
                if text[j] == c:
                    if j + 1 < n and text[j + 1] == c:  # doubled quote is an escaped quote
                        buf.append(c)
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            args.append("".join(buf))
            i = j + 1
        elif c in "+-.0123456789":
            m = _NUM_RE.match(text, i)
            if m is None:
                raise ScpiParseError(-121, "Invalid character in number", offset + i)
            value = float(m.group())
            i = m.end()
            j = i
            while j < n and text[j] in " \t":
                j += 1
            s = _WORD_RE.match(text, j)
            if s is not None:
                mult = _SUFFIX.get(s.group().upper())
                if mult is None:
                    raise ScpiParseError(-131, "Invalid suffix", offset + i)
                value *= mult
                i = s.end()
            args.append(value)
        elif c.isalpha():
            m = _WORD_RE.match(text, i)
            args.append(Word(m.group().upper()))
            i = m.end()
        else:
            raise ScpiParseError(-101, "Invalid character", offset + i)
        while i < n and text[i] in " \t":
            i += 1
        if i >= n:
            break
        if text[i] != ",":
            raise ScpiParseError(-102, "Syntax error", offset + i)
        i += 1
    return tuple(args)


def parse_scpi(line: str | bytes) -> ScpiCommand:
    """Parse one program message unit (a single command line)."""
    if isinstance(line, bytes):
        if len(line) > MAX_LINE_BYTES:
            raise ScpiParseError(-223, "Too much data", MAX_LINE_BYTES)
        try:
            line = line.decode("ascii")
        except UnicodeDecodeError as exc:
            raise ScpiParseError(-101, "Invalid character", exc.start) from None
    if len(line.encode("utf-8", "replace")) > MAX_LINE_BYTES:
        raise ScpiParseError(-223, "Too much data", MAX_LINE_BYTES)
    if line.endswith("\n"):
        line = line[:-1]
    if line.endswith("\r"):
        line = line[:-1]
    if "\n" in line:
        raise ScpiParseError(-102, "Syntax error", line.index("\n"))
    start = len(line) - len(line.lstrip(" \t"))
    body = line.strip(" \t")
    if not body:
        raise ScpiParseError(-102, "Syntax error", start)
    m = _HDR_RE.match(body)
    if m is None:
        raise ScpiParseError(-102, "Syntax error", start)
    hdr_end = m.end()
    rest = body[hdr_end:]
    if rest and rest[0] not in " \t":
        raise ScpiParseError(-102, "Syntax error", start + hdr_end)
    tokens = [t for t in m.group(1).split(":") if t]
    d = lookup(tokens)
    if d is None:
        raise ScpiParseError(-113, "Undefined header", start)
    is_query = m.group(2) == "?"
    if is_query and not d.queryable:
        raise ScpiParseError(-113, "Undefined header", start + hdr_end - 1)
    if not is_query and not d.settable:
        raise ScpiParseError(-113, "Undefined header", start + hdr_end)
    args = _parse_args(rest, start + hdr_end)
    return ScpiCommand(d.canonical, is_query, args)


def _format_arg(a: Arg) -> str:
    if isinstance(a, Word):
        return str(a)
    if isinstance(a, str):
        return '"' + a.replace('"', '""') + '"'
    return repr(float(a))


def format_scpi(cmd: ScpiCommand) -> str:
    """Print a command in long form; ``parse_scpi(format_scpi(c)) == c``."""
    head = cmd.name if cmd.header[0].startswith("*") else ":" + cmd.name
    if cmd.is_query:
        head += "?"
    if cmd.args:
        head += " " + ",".join(_format_arg(a) for a in cmd.args)
    return head
