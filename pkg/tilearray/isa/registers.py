"""
registers.py

The architectural tile register file: eight 16 x 64 B registers with one dirty
bit each. Values are immutable; every update returns a new register file and
shares the untouched payloads.

Dirty-bit automaton (per register r):
    any write to r (tile load, matrix-multiply destination)  -> dirty
    r consumed as the weight operand of a matrix multiply   -> clean
    a tile store reading r                                  -> unchanged
"""

from dataclasses import dataclass

import numpy as np

from tilearray.isa.instructions import Opcode
from tilearray.isa.tiles import NUM_TILE_REGISTERS, TILE_ROWS, TILE_ROW_BYTES, empty_payload


def _frozen(payload):
    payload = np.array(payload, dtype=np.uint8, copy=True).reshape(TILE_ROWS, TILE_ROW_BYTES)
    payload.flags.writeable = False
    return payload


def check_register(reg):
    if not isinstance(reg, int) or not 0 <= reg < NUM_TILE_REGISTERS:
        raise ValueError("register id out of range: " + str(reg))


@dataclass(frozen=True, eq=False)
class TileRegisterFile:
    regs: tuple
    dirty: tuple

    @classmethod
    def empty(cls):
        zero = _frozen(empty_payload())
        return cls(regs=(zero,) * NUM_TILE_REGISTERS, dirty=(False,) * NUM_TILE_REGISTERS)

    def read(self, reg):
        check_register(reg)
        return self.regs[reg]

    def __eq__(self, other):
        if not isinstance(other, TileRegisterFile):
            return NotImplemented
        return self.dirty == other.dirty and all(np.array_equal(a, b) for a, b in zip(self.regs, other.regs))

    def __hash__(self):
        return hash((self.dirty, tuple(r.tobytes() for r in self.regs)))


def apply_write(rf, reg, payload):
    """
    Replace the content of a register and mark it dirty
    :param rf: TileRegisterFile
    :param reg: register id in [0,7]
    :param payload: 16 x 64 uint8 tile bytes
    :return: new TileRegisterFile
    """
    check_register(reg)
    regs = list(rf.regs)
    regs[reg] = _frozen(payload)
    dirty = list(rf.dirty)
    dirty[reg] = True
    return TileRegisterFile(regs=tuple(regs), dirty=tuple(dirty))


def consume_weights(rf, reg):
    check_register(reg)
    if not rf.dirty[reg]:
        return rf
    dirty = list(rf.dirty)
    dirty[reg] = False
    return TileRegisterFile(regs=rf.regs, dirty=tuple(dirty))


def wl_bypass_eligible(rf, resident_reg, src_b):
    """
    True when the weights of src_b are already resident in the array: the
    register matches the one last loaded as weights and has not been written since.
    """
    return resident_reg is not None and resident_reg == src_b and not rf.dirty[src_b]


def replay_weight_reuse(instructions):
    """
    Replay the dirty-bit automaton over an instruction sequence
    :return: one bool per MM, True when that MM may bypass its weight load
    """
    dirty = [False] * NUM_TILE_REGISTERS
    resident = None
    result = []
    for instr in instructions:
        if instr.kind is Opcode.TL:
            dirty[instr.reg] = True
        elif instr.kind is Opcode.MM:
            result.append(resident == instr.src_b and not dirty[instr.src_b])
            dirty[instr.src_b] = False
            resident = instr.src_b
            dirty[instr.dst] = True
    return result
