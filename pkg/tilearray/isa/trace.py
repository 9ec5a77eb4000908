"""
trace.py

Line-oriented text format for tile instruction traces.

    # comment
    machine t_m=16 t_k=32 t_n=16 in=bf16 out=fp32
    TL treg4, 0x1000, 64
    MM treg0, treg6, treg4
    TS 0x2000, 64, treg0
"""

import re
from collections import Counter
from dataclasses import dataclass

from tilearray.errors import TraceSyntaxError, TraceValidationError
from tilearray.isa.instructions import Instruction, Opcode, validate, infer_register_roles
from tilearray.isa.tiles import NUM_TILE_REGISTERS, TileGeometry
from tilearray.tools.file import sha256_text

_TOKEN = re.compile(r'[^\s,]+')
_REGISTER = re.compile(r'^treg(\d+)$', re.IGNORECASE)
_HEADER_KEYS = ('t_m', 't_k', 't_n', 'in', 'out')


@dataclass(frozen=True)
class Trace:
    geometry: TileGeometry
    instructions: tuple = ()
    in_type: str = 'bf16'
    out_type: str = 'fp32'

    def __len__(self):
        return len(self.instructions)

    def counts(self):
        counter = Counter(i.kind for i in self.instructions)
        return {op.name: counter.get(op, 0) for op in Opcode}

    @property
    def mm_count(self):
        return sum(1 for i in self.instructions if i.kind is Opcode.MM)

    def digest(self):
        return sha256_text(format_trace(self))


def _tokens(text):
    return [(m.group(0), m.start() + 1) for m in _TOKEN.finditer(text)]


def _register(token, column, line_no):
    match = _REGISTER.match(token)
    if not match:
        raise TraceSyntaxError(line_no, column, "expected a tile register, got '%s'" % token)
    reg = int(match.group(1))
    if reg >= NUM_TILE_REGISTERS:
        raise TraceSyntaxError(line_no, column, "register id out of range: %s" % token)
    return reg


def _integer(token, column, line_no, what):
    try:
        return int(token, 0)
    except ValueError:
        raise TraceSyntaxError(line_no, column, "expected %s, got '%s'" % (what, token))


def _parse_header(tokens, line_no):
    fields = {}
    for token, column in tokens[1:]:
        key, sep, value = token.partition('=')
        if not sep or key not in _HEADER_KEYS:
            raise TraceSyntaxError(line_no, column, "unexpected header field '%s'" % token)
        fields[key] = (value, column)
    missing = [k for k in _HEADER_KEYS if k not in fields]
    if missing:
        raise TraceSyntaxError(line_no, 1, "header missing field(s): " + ", ".join(missing))
    if fields['in'][0].lower() != 'bf16':
        raise TraceSyntaxError(line_no, fields['in'][1], "input type must be bf16")
    if fields['out'][0].lower() != 'fp32':
        raise TraceSyntaxError(line_no, fields['out'][1], "output type must be fp32")
    dims = [_integer(fields[k][0], fields[k][1], line_no, k) for k in ('t_m', 't_k', 't_n')]
    try:
        return TileGeometry(*dims)
    except ValueError as e:
        raise TraceSyntaxError(line_no, 1, "inconsistent machine header: %s" % e)


def _parse_instruction(tokens, line_no):
    mnemonic, column = tokens[0]
    try:
        kind = Opcode(mnemonic.upper())
    except ValueError:
        raise TraceSyntaxError(line_no, column, "unknown mnemonic '%s'" % mnemonic)
    if len(tokens) != 4:
        where = tokens[4][1] if len(tokens) > 4 else tokens[-1][1]
        raise TraceSyntaxError(line_no, where, "%s takes 3 operands, got %d" % (kind.name, len(tokens) - 1))
    (a, ca), (b, cb), (c, cc) = tokens[1:]
    if kind is Opcode.TL:
        return Instruction.tl(_register(a, ca, line_no), _integer(b, cb, line_no, "base address"),
                              _integer(c, cc, line_no, "stride"), line=line_no)
    if kind is Opcode.TS:
        return Instruction.ts(_integer(a, ca, line_no, "base address"), _integer(b, cb, line_no, "stride"),
                              _register(c, cc, line_no), line=line_no)
    return Instruction.mm(_register(a, ca, line_no), _register(b, cb, line_no), _register(c, cc, line_no), line=line_no)


def parse_trace(text):
    """
    Parse trace text into a Trace. Instructions keep their source line numbers.
    :raises TraceSyntaxError: with line and column of the first problem
    """
    geometry = None
    instructions = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split('#', 1)[0]
        tokens = _tokens(body)
        if not tokens:
            continue
        if tokens[0][0].lower() == 'machine':
            if geometry is not None:
                raise TraceSyntaxError(line_no, 1, "duplicate machine header")
            geometry = _parse_header(tokens, line_no)
            continue
        if geometry is None:
            raise TraceSyntaxError(line_no, 1, "machine header missing before first instruction")
        instructions.append(_parse_instruction(tokens, line_no))
    if geometry is None:
        raise TraceSyntaxError(1, 1, "machine header missing")
    return Trace(geometry=geometry, instructions=tuple(instructions))


def format_trace(trace):
    g = trace.geometry
    lines = ["machine t_m=%d t_k=%d t_n=%d in=%s out=%s" % (g.t_m, g.t_k, g.t_n, trace.in_type, trace.out_type)]
    lines.extend(str(i) for i in trace.instructions)
    return "\n".join(lines) + "\n"


def validate_trace(trace):
    roles, violations = infer_register_roles(trace.instructions)
    for instr in trace.instructions:
        violations.extend(validate(instr, trace.geometry, roles))
    return violations


def checked(trace):
    violations = validate_trace(trace)
    if violations:
        raise TraceValidationError(violations)
    return trace
