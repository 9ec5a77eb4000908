"""
instructions.py

Tile load (TL), tile store (TS) and matrix multiply (MM) instructions, and the
static checks applied to them before simulation.
"""

import enum
from dataclasses import dataclass, field

from tilearray.isa.tiles import NUM_TILE_REGISTERS, Role


class Opcode(enum.Enum):
    TL = 'TL'
    TS = 'TS'
    MM = 'MM'


@dataclass(frozen=True)
class Instruction:
    kind: Opcode
    # TL destination / TS source
    reg: int = None
    base: int = None
    stride: int = None
    # MM: C (accumulator) += A . B
    dst: int = None
    src_a: int = None
    src_b: int = None
    line: int = field(default=0, compare=False)

    @classmethod
    def tl(cls, reg, base, stride, line=0):
        return cls(Opcode.TL, reg=reg, base=base, stride=stride, line=line)

    @classmethod
    def ts(cls, base, stride, reg, line=0):
        return cls(Opcode.TS, reg=reg, base=base, stride=stride, line=line)

    @classmethod
    def mm(cls, dst, src_a, src_b, line=0):
        return cls(Opcode.MM, dst=dst, src_a=src_a, src_b=src_b, line=line)

    @property
    def registers(self):
        if self.kind is Opcode.MM:
            return (self.dst, self.src_a, self.src_b)
        return (self.reg,)

    @property
    def reads(self):
        if self.kind is Opcode.MM:
            return (self.dst, self.src_a, self.src_b)
        if self.kind is Opcode.TS:
            return (self.reg,)
        return ()

    @property
    def writes(self):
        if self.kind is Opcode.MM:
            return (self.dst,)
        if self.kind is Opcode.TL:
            return (self.reg,)
        return ()

    def __str__(self):
        if self.kind is Opcode.TL:
            return "TL treg%d, 0x%x, %d" % (self.reg, self.base, self.stride)
        if self.kind is Opcode.TS:
            return "TS 0x%x, %d, treg%d" % (self.base, self.stride, self.reg)
        return "MM treg%d, treg%d, treg%d" % (self.dst, self.src_a, self.src_b)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    line: int = 0

    def __str__(self):
        if self.line:
            return "line %d: %s" % (self.line, self.message)
        return self.message


def _in_range(reg):
    return isinstance(reg, int) and 0 <= reg < NUM_TILE_REGISTERS


def validate(instr, shape, roles=None):
    """
    Static checks for one instruction
    :param instr: Instruction
    :param shape: TileGeometry of the machine
    :param roles: optional {register: Role} mapping (see infer_register_roles)
    :return: list of Violation, empty when the instruction is well formed
    """
    violations = []
    roles = roles or {}
    for reg in instr.registers:
        if not _in_range(reg):
            violations.append(Violation('register-range', "register id out of range: treg%s" % reg, instr.line))
    if violations:
        return violations

    if instr.kind is Opcode.MM:
        if instr.dst in (instr.src_a, instr.src_b):
            violations.append(Violation('aliasing', "accumulator treg%d aliases a source operand" % instr.dst, instr.line))
        if instr.src_a == instr.src_b:
            violations.append(Violation('aliasing', "treg%d used as both A and B" % instr.src_a, instr.line))
        for reg, wanted in ((instr.dst, Role.ACC), (instr.src_a, Role.A), (instr.src_b, Role.B)):
            role = roles.get(reg)
            if role is not None and role.element_type is not wanted.element_type:
                violations.append(Violation('operand-type', "treg%d holds %s data but is used as %s operand (%s expected)"
                                            % (reg, role.element_type.value, wanted.name, wanted.element_type.value), instr.line))
        return violations

    if instr.base is None or instr.base < 0:
        violations.append(Violation('address', "negative or missing base address", instr.line))
    role = roles.get(instr.reg)
    element_size = role.element_type.size if role is not None else 4
    if instr.stride is None or instr.stride <= 0 or instr.stride % element_size:
        violations.append(Violation('stride', "stride %s is not a positive multiple of %d bytes" % (instr.stride, element_size), instr.line))
    elif instr.base is not None and instr.base % element_size:
        violations.append(Violation('stride', "base 0x%x is not %d-byte aligned" % (instr.base, element_size), instr.line))
    if role is not None and instr.stride is not None:
        row_bytes = shape.shape_for(role).cols_bytes
        if 0 < instr.stride < row_bytes:
            violations.append(Violation('stride', "stride %d overlaps %d-byte tile rows" % (instr.stride, row_bytes), instr.line))
    return violations


def infer_register_roles(instructions):
    """
    Derive each register's operand role from its matrix-multiply uses.
    :return: ({register: Role}, [Violation]) -- a register used in roles of different element types is a violation
    """
    roles = {}
    violations = []
    for instr in instructions:
        if instr.kind is not Opcode.MM:
            continue
        for reg, role in ((instr.dst, Role.ACC), (instr.src_a, Role.A), (instr.src_b, Role.B)):
            if not _in_range(reg):
                continue
            known = roles.get(reg)
            if known is None:
                roles[reg] = role
            elif known.element_type is not role.element_type:
                violations.append(Violation('operand-type', "treg%d used as %s and %s operand" % (reg, known.name, role.name), instr.line))
    return roles, violations
