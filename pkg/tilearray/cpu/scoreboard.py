"""
scoreboard.py

Per tile register bookkeeping for in-order dispatch: when the pending write
lands, and until when earlier instructions still read the register.
"""

from tilearray.isa.instructions import Opcode
from tilearray.isa.tiles import NUM_TILE_REGISTERS


class Scoreboard(object):

    def __init__(self):
        self.ready = [0] * NUM_TILE_REGISTERS
        self.read_until = [0] * NUM_TILE_REGISTERS
        self.writer = [None] * NUM_TILE_REGISTERS

    def claim_write(self, reg, until, writer):
        self.ready[reg] = until
        self.writer[reg] = writer

    def add_reader(self, reg, until):
        self.read_until[reg] = max(self.read_until[reg], until)

    def blockers(self, instr, cycle):
        """
        Hazards that keep an instruction from dispatching at cycle
        :return: list of (kind, register, cycle the hazard clears)
        """
        hazards = []
        if instr.kind is Opcode.TL:
            if self.ready[instr.reg] > cycle:
                hazards.append(('WAW', instr.reg, self.ready[instr.reg]))
            if self.read_until[instr.reg] > cycle:
                hazards.append(('WAR', instr.reg, self.read_until[instr.reg]))
            return hazards
        for reg in instr.reads:
            if self.ready[reg] > cycle:
                hazards.append(('RAW', reg, self.ready[reg]))
        if instr.kind is Opcode.MM and self.read_until[instr.dst] > cycle:
            hazards.append(('WAR', instr.dst, self.read_until[instr.dst]))
        return hazards

    def next_change(self, cycle):
        later = [c for c in self.ready + self.read_until if c > cycle]
        return min(later) if later else None
