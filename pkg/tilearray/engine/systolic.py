"""
systolic.py

Cycle engine of the weight-stationary PE array.

Every accepted multiply gets a fixed schedule from the stage machine (R physical
rows, cycles 0-based):

    WL  [s, f]            weights shift south deepest row first, f = s + R - 1
    FF  [f, f + T_M)      A[m][row r] enters PE(r,0) at f + m + r
    FS  [f + T_M, +R-1)   PE(r,c) computes element m at f + 1 + m + r + c
    DR  [.., retire)      output (m,c) leaves the array at f + m + R + c (+1 merge cycle with DM)

A bypassed weight load has no WL; a prefetched one (WLS) moves through the
shadow buffers and is captured by PE(r,c) at f + r + c.

Two datapaths share that schedule. "systolic" moves values through per-PE
latches every cycle, tagged with the op they belong to, so a schedule that lets
two ops collide on a PE fails loudly. "tile" computes each multiply with the
reference oracle at acceptance and may jump over idle cycles.
"""

import enum
import heapq
import logging
from dataclasses import dataclass, field

import numpy as np

from tilearray.engine.config import PIPE_WL_START_OFFSET, SYSTOLIC_AUTO_LIMIT
from tilearray.engine.reference import reference_gemm_tile
from tilearray.engine.stats import EngineStats
from tilearray.errors import EngineConsistencyError
from tilearray.isa.bf16 import to_bf16
from tilearray.isa.instructions import Instruction
from tilearray.isa.registers import TileRegisterFile, apply_write, consume_weights, wl_bypass_eligible
from tilearray.isa.tiles import decode_a, decode_b, decode_c
from tilearray.model.policy import Control, Prefetch


class Stage(enum.Enum):
    WL = 'WL'
    FF = 'FF'
    FS = 'FS'
    DR = 'DR'
    DONE = 'Done'


# How an op gets its weights into the PEs
LOAD = 'load'
BYPASS = 'bypass'
PREFETCH = 'prefetch'


@dataclass(frozen=True)
class IssueResult:
    accepted: bool
    reason: str = None
    op: object = None
    # first cycle the engine accepts the op, given what is in flight now
    earliest: int = 0


@dataclass(eq=False)
class InFlightOp:
    op_id: int
    instr: Instruction
    mode: str
    accept: int
    wl_start: int
    ff_start: int
    fs_start: int
    dr_start: int
    retire: int
    weight_id: int
    hidden: bool = False
    a: np.ndarray = field(default=None, repr=False)
    b: np.ndarray = field(default=None, repr=False)
    c: np.ndarray = field(default=None, repr=False)
    result: np.ndarray = field(default=None, repr=False)
    emit_cycle: np.ndarray = field(default=None, repr=False)
    emitted: int = 0

    @property
    def ff_end(self):
        return self.fs_start

    @property
    def b_release(self):
        """
        First cycle the weight register is no longer read
        """
        return self.accept if self.mode == BYPASS else self.ff_start

    @property
    def ac_release(self):
        """
        First cycle the activation and accumulator registers are no longer read
        """
        return self.fs_start

    def stage_entries(self):
        entries = []
        if self.mode != BYPASS:
            entries.append((self.accept, Stage.WL))
        entries.extend([(self.ff_start, Stage.FF), (self.fs_start, Stage.FS), (self.dr_start, Stage.DR),
                        (self.retire, Stage.DONE)])
        # zero-length stages (one physical row has no FS) are dropped
        return [e for e, nxt in zip(entries, entries[1:] + [(None, None)]) if nxt[0] is None or e[0] < nxt[0]]

    def stage(self, cycle):
        if cycle < self.ff_start:
            return Stage.WL
        if cycle < self.fs_start:
            return Stage.FF
        if cycle < self.dr_start:
            return Stage.FS
        if cycle < self.retire:
            return Stage.DR
        return Stage.DONE


def resolve_datapath(datapath, mm_count):
    if datapath == 'auto':
        return 'systolic' if mm_count <= SYSTOLIC_AUTO_LIMIT else 'tile'
    if datapath not in ('systolic', 'tile'):
        raise ValueError("unknown datapath '%s'" % datapath)
    return datapath


class SystolicEngine(object):
    """
    One PE array. Drive it with try_issue() at the current cycle and advance() to move time forward.
    """

    def __init__(self, config, datapath='systolic', debug=False, record_events=False):
        self.config = config
        self.datapath = resolve_datapath(datapath, 0)
        self.debug = debug
        geom = config.geometry
        self.rows = geom.physical_rows
        self.cols = geom.t_n
        self.lanes = config.lanes
        self.t_m = geom.t_m
        self.t_k = geom.t_k
        self.merge = geom.merge_cycles
        self.policy = config.policy
        self.cycle = 0
        self.stats = EngineStats(self.rows, self.cols)
        self.events = [] if record_events else None
        self.ops = []
        self.last = None
        self.resident = None
        self._op_weight = []
        self._next_weight = 0
        self._pending_events = []
        if self.datapath == 'systolic':
            self._reset_latches()

    def _reset_latches(self):
        shape = (self.rows, self.cols)
        lanes = shape + (self.lanes,)
        self.a_val = np.zeros(lanes, dtype=np.float32)
        self.a_tag = np.full(shape, -1, dtype=np.int64)
        self.a_m = np.zeros(shape, dtype=np.int64)
        self.p_val = np.zeros(lanes, dtype=np.float32)
        self.p_tag = np.full(shape, -1, dtype=np.int64)
        self.p_m = np.zeros(shape, dtype=np.int64)
        self.w_val = np.zeros(lanes, dtype=np.float32)
        self.w_tag = np.full(shape, -1, dtype=np.int64)
        self.s_val = np.zeros(lanes, dtype=np.float32)
        self.s_tag = np.full(shape, -1, dtype=np.int64)
        # bottom adder row of double-multiplier arrays
        self.merge_val = np.zeros((self.cols, 2), dtype=np.float32)
        self.merge_tag = np.full(self.cols, -1, dtype=np.int64)
        self.merge_m = np.zeros(self.cols, dtype=np.int64)
        self._rr, self._cc = np.meshgrid(np.arange(self.rows), np.arange(self.cols), indexing='ij')

    # ----------------------------------------------------------------- issue

    def _plan(self, mm, rf):
        """
        :return: (earliest accept cycle, stall reason before it, weight mode)
        """
        control = self.policy.control
        p = self.last
        bypass = control is Control.WLBP and p is not None and wl_bypass_eligible(rf, self.resident, mm.src_b)
        if control is Control.WLS:
            mode = PREFETCH
        else:
            mode = BYPASS if bypass else LOAD
        if p is None:
            return 0, None, mode
        if control is Control.BASE:
            return p.retire, 'array_busy', mode
        if mode == BYPASS:
            return p.ff_end, 'array_busy', mode
        if mode == LOAD:
            # DR entry of the predecessor, and its last column done with the weights being replaced
            return p.ff_end + max(self.rows, self.cols) - 1 + PIPE_WL_START_OFFSET, 'weight_link_busy', mode
        return p.ff_start + 1, 'weight_link_busy', mode

    def try_issue(self, mm, rf, cycle, operands=None, count_stall=True):
        """
        Offer a matrix multiply to the array
        :param mm: MM Instruction
        :param rf: TileRegisterFile holding its operands
        :param cycle: current cycle, the engine must have been advanced to it
        :param operands: optional (a, b, c) arrays used instead of decoding the registers
        :return: IssueResult, with the InFlightOp when accepted
        """
        if cycle != self.cycle:
            raise ValueError("engine is at cycle %d, issue offered at %d" % (self.cycle, cycle))
        earliest, reason, mode = self._plan(mm, rf)
        if cycle < earliest:
            if count_stall:
                self.stats.note_stall(reason)
            return IssueResult(False, reason=reason, earliest=earliest)
        op = self._accept(mm, rf, cycle, mode, operands)
        return IssueResult(True, op=op, earliest=earliest)

    def _operands(self, mm, rf, operands):
        if operands is None:
            tiles = self.config.tiles
            a = decode_a(rf.read(mm.src_a), tiles)
            b = decode_b(rf.read(mm.src_b), tiles)
            c = decode_c(rf.read(mm.dst), tiles)
        else:
            a, b, c = operands
        a = to_bf16(np.asarray(a, dtype=np.float32))
        b = to_bf16(np.asarray(b, dtype=np.float32))
        c = np.array(c, dtype=np.float32)
        if a.shape != (self.t_m, self.t_k) or b.shape != (self.t_k, self.cols) or c.shape != (self.t_m, self.cols):
            raise ValueError("operand shapes A%s B%s C%s do not fit a %dx%dx%d multiply"
                             % (a.shape, b.shape, c.shape, self.t_m, self.t_k, self.cols))
        return a, b, c

    def _accept(self, mm, rf, cycle, mode, operands):
        a, b, c = self._operands(mm, rf, operands)
        p = self.last
        r = self.rows
        hidden = False
        if mode == BYPASS:
            wl_start, ff = None, cycle
        elif mode == LOAD:
            wl_start, ff = cycle, cycle + r - 1
        else:
            wl_start = cycle
            hidden = (p is not None and self.policy.prefetch is Prefetch.ROW_CHASING and cycle <= p.ff_end)
            ff = max(cycle, p.ff_end) if hidden else cycle + r - 1
            if p is not None:
                ff = max(ff, p.ff_end)
        fs = ff + self.t_m
        dr = fs + r - 1
        retire = dr + self.cols + self.merge

        if mode == BYPASS:
            weight_id = p.weight_id
        else:
            weight_id = self._next_weight
            self._next_weight += 1

        op = InFlightOp(op_id=len(self._op_weight), instr=mm, mode=mode, accept=cycle, wl_start=wl_start,
                        ff_start=ff, fs_start=fs, dr_start=dr, retire=retire, weight_id=weight_id, hidden=hidden,
                        a=a, b=b, c=c)
        self._op_weight.append(weight_id)
        self.stats.issue.append(cycle)
        self.stats.wl_skips += mode == BYPASS
        self.stats.prefetches += mode == PREFETCH

        if self.datapath == 'tile':
            op.result = reference_gemm_tile(c, a, b, split_pairs=self.lanes == 2)
            self.stats.active += self.t_m
            self.stats.mac_count += self.t_m * self.t_k * self.cols
        else:
            op.result = np.full((self.t_m, self.cols), np.nan, dtype=np.float32)
            op.emit_cycle = np.full((self.t_m, self.cols), -1, dtype=np.int64)
            # physical operand views: row r of the array holds logical k = lanes*r + lane
            op.a = a.reshape(self.t_m, r, self.lanes)
            op.b = b.reshape(r, self.lanes, self.cols).transpose(0, 2, 1)

        self.ops.append(op)
        self.last = op
        self.resident = mm.src_b
        for entry_cycle, stage in op.stage_entries():
            heapq.heappush(self._pending_events, (entry_cycle, op.op_id, stage.value))
        logging.debug("engine: op%d %s accepted at %d (%s%s) ff=%d retire=%d", op.op_id, mm, cycle, mode,
                      ', hidden' if hidden else '', ff, retire)
        return op

    # ------------------------------------------------------------------ time

    def advance(self, to_cycle):
        """
        Simulate every cycle before to_cycle
        :return: ops retired on the way, in retire order
        """
        retired = []
        while self.cycle < to_cycle:
            if self.datapath == 'systolic' and self.ops:
                self._tick(self.cycle)
                self.cycle += 1
            else:
                horizon = min([op.retire for op in self.ops] + [to_cycle])
                self.cycle = max(self.cycle + 1, min(horizon, to_cycle))
            retired.extend(self._retire())
        self._flush_events(self.cycle)
        return retired

    def step(self):
        return self.advance(self.cycle + 1)

    def drain(self):
        """
        Run until every accepted op retired
        """
        retired = []
        while self.ops:
            retired.extend(self.advance(max(op.retire for op in self.ops)))
        self._flush_events(self.cycle + 1)
        return retired

    def _retire(self):
        done = [op for op in self.ops if op.retire <= self.cycle]
        if not done:
            return done
        for op in done:
            if self.datapath == 'systolic' and op.emitted != self.t_m * self.cols:
                raise EngineConsistencyError(op.retire, "op%d retired with %d of %d outputs drained"
                                             % (op.op_id, op.emitted, self.t_m * self.cols))
            self.stats.retire.append(op.retire)
            self.stats.total_cycles = max(self.stats.total_cycles, op.retire)
        self.ops = [op for op in self.ops if op.retire > self.cycle]
        return done

    def _flush_events(self, before):
        while self._pending_events and self._pending_events[0][0] < before:
            cycle, op_id, stage = heapq.heappop(self._pending_events)
            if self.events is not None:
                self.events.append("%d op%d %s" % (cycle, op_id, stage))

    # -------------------------------------------------------------- datapath

    def _op(self, op_id):
        for op in self.ops:
            if op.op_id == op_id:
                return op
        raise EngineConsistencyError(self.cycle, "op%d is not in flight" % op_id)

    def _tick(self, t):
        valid = self.a_tag >= 0
        if valid.any():
            self._check_operands_meet(t, valid)
        out_val = self.p_val + self.a_val * self.w_val
        self.stats.active += valid
        self.stats.mac_count += int(valid.sum()) * self.lanes
        if self.events is not None and valid.any():
            self.events.append("%d busy %d/%d" % (t, int(valid.sum()), valid.size))

        self._drain(t, out_val, valid)

        # posedge: partial sums south, activations east
        self.p_val[1:] = out_val[:-1]
        self.p_tag[1:] = np.where(valid[:-1], self.a_tag[:-1], -1)
        self.p_m[1:] = self.a_m[:-1]
        self.p_tag[0] = -1
        self.a_val[:, 1:] = self.a_val[:, :-1]
        self.a_tag[:, 1:] = self.a_tag[:, :-1]
        self.a_m[:, 1:] = self.a_m[:, :-1]
        self.a_tag[:, 0] = -1

        weight_writes = np.zeros((self.rows, self.cols), dtype=np.int64)
        for op in self.ops:
            self._inject(t, op)
            if op.mode == LOAD:
                self._weight_load(t, op, weight_writes)
            elif op.mode == PREFETCH:
                self._prefetch(t, op)
        for op in self.ops:
            if op.mode == PREFETCH:
                self._capture(t, op, weight_writes)
        if self.debug and (weight_writes > 1).any():
            r, c = np.argwhere(weight_writes > 1)[0]
            raise EngineConsistencyError(t, "two weight writes to PE(%d,%d) in one cycle" % (r, c))

    def _check_operands_meet(self, t, valid):
        bad = valid & ((self.p_tag != self.a_tag) | (self.p_m != self.a_m))
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise EngineConsistencyError(t, "PE(%d,%d): activation of op%d element %d met partial sum of op%d element %d"
                                         % (r, c, self.a_tag[r, c], self.a_m[r, c], self.p_tag[r, c], self.p_m[r, c]))
        expected = np.asarray(self._op_weight, dtype=np.int64)[self.a_tag[valid]]
        wrong = self.w_tag[valid] != expected
        if wrong.any():
            r, c = np.argwhere(valid)[np.argmax(wrong)]
            raise EngineConsistencyError(t, "PE(%d,%d): op%d computes with weights of load %d, expected load %d"
                                         % (r, c, self.a_tag[r, c], self.w_tag[r, c], expected[np.argmax(wrong)]))

    def _drain(self, t, out_val, valid):
        bottom = self.rows - 1
        if self.lanes == 2:
            # outputs computed last cycle leave through the merge adders now
            for c in np.flatnonzero(self.merge_tag >= 0):
                self._emit(t, self.merge_tag[c], self.merge_m[c], c, np.float32(self.merge_val[c, 0] + self.merge_val[c, 1]))
            self.merge_tag[:] = np.where(valid[bottom], self.a_tag[bottom], -1)
            self.merge_m[:] = self.a_m[bottom]
            self.merge_val[:] = out_val[bottom]
        else:
            for c in np.flatnonzero(valid[bottom]):
                self._emit(t, self.a_tag[bottom, c], self.a_m[bottom, c], c, out_val[bottom, c, 0])

    def _emit(self, t, op_id, m, c, value):
        op = self._op(op_id)
        if self.debug and op.emit_cycle[m, c] >= 0:
            raise EngineConsistencyError(t, "output (%d,%d) of op%d drained twice" % (m, c, op_id))
        op.result[m, c] = value
        op.emit_cycle[m, c] = t
        op.emitted += 1

    def _inject(self, t, op):
        f = op.ff_start
        m_rows = t - f - np.arange(self.rows)
        rows = np.flatnonzero((m_rows >= 0) & (m_rows < self.t_m))
        if rows.size:
            if self.debug and (self.a_tag[rows, 0] >= 0).any():
                raise EngineConsistencyError(t, "west edge latch claimed by two ops")
            m = m_rows[rows]
            self.a_val[rows, 0] = op.a[m, rows]
            self.a_tag[rows, 0] = op.op_id
            self.a_m[rows, 0] = m
        m_cols = t - f - np.arange(self.cols)
        cols = np.flatnonzero((m_cols >= 0) & (m_cols < self.t_m))
        if cols.size:
            if self.debug and (self.p_tag[0, cols] >= 0).any():
                raise EngineConsistencyError(t, "north edge latch claimed by two ops")
            m = m_cols[cols]
            self.p_val[0, cols, 0] = op.c[m, cols]
            if self.lanes == 2:
                # second chain starts from +0.0
                self.p_val[0, cols, 1] = 0.0
            self.p_tag[0, cols] = op.op_id
            self.p_m[0, cols] = m

    def _weight_load(self, t, op, writes):
        j = t - op.wl_start
        if not 0 <= j < self.rows:
            return
        rows = np.arange(j + 1)
        self.w_val[rows] = op.b[self.rows - 1 - j + rows]
        self.w_tag[rows] = op.weight_id
        writes[rows] += 1

    def _prefetch(self, t, op):
        a = op.accept
        if op.hidden:
            hit = (self._rr + self._cc) == (t - a)
            self.s_val[hit] = op.b[hit]
            self.s_tag[hit] = op.weight_id
            return
        for c in range(self.cols):
            j = t - a - c
            if 0 <= j < self.rows:
                rows = np.arange(j + 1)
                self.s_val[rows, c] = op.b[self.rows - 1 - j + rows, c]
                self.s_tag[rows, c] = op.weight_id

    def _capture(self, t, op, writes):
        hit = (self._rr + self._cc) == (t - op.ff_start)
        if not hit.any():
            return
        stale = hit & (self.s_tag != op.weight_id)
        if stale.any():
            r, c = np.argwhere(stale)[0]
            raise EngineConsistencyError(t, "PE(%d,%d): shadow holds load %d when op%d captures load %d"
                                         % (r, c, self.s_tag[r, c], op.op_id, op.weight_id))
        self.w_val[hit] = self.s_val[hit]
        self.w_tag[hit] = op.weight_id
        writes[hit] += 1

    # ------------------------------------------------------------ inspection

    def resident_weights(self):
        """
        Active PE weights as a logical t_k x t_n matrix (systolic datapath)
        """
        return self.w_val.transpose(0, 2, 1).reshape(self.rows * self.lanes, self.cols).copy()


@dataclass(frozen=True)
class StreamOp:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    # the weight register is not rewritten since the previous multiply
    reuse_weights: bool = False


STREAM_REGISTERS = Instruction.mm(0, 6, 4)


def run_mm_stream(config, stream, datapath='systolic', debug=False, record_events=False):
    """
    Issue multiplies back to back, each as early as the policy allows
    :param config: ArrayConfig
    :param stream: sequence of StreamOp
    :return: (list of output tiles in stream order, EngineStats)
    """
    engine = SystolicEngine(config, datapath=datapath, debug=debug, record_events=record_events)
    rf = TileRegisterFile.empty()
    mm = STREAM_REGISTERS
    outputs = {}
    previous_b = None
    for sop in stream:
        if sop.reuse_weights:
            if previous_b is None or not np.array_equal(previous_b, sop.b):
                raise ValueError("a multiply marked reuse_weights must repeat the previous weights")
        else:
            rf = apply_write(rf, mm.src_b, rf.regs[mm.src_b])
        previous_b = sop.b
        while True:
            result = engine.try_issue(mm, rf, engine.cycle, operands=(sop.a, sop.b, sop.c), count_stall=False)
            if result.accepted:
                break
            for op in engine.advance(result.earliest):
                outputs[op.op_id] = op.result
        rf = consume_weights(rf, mm.src_b)
    for op in engine.drain():
        outputs[op.op_id] = op.result
    engine.stats.events = engine.events
    return [outputs[i] for i in sorted(outputs)], engine.stats
