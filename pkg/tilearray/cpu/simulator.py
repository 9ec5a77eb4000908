"""
simulator.py

Trace-driven core model: in-order dispatch of up to `width` tile instructions
per cycle behind a register scoreboard, fixed-latency pipelined tile loads and
stores against an ideal memory, and matrix multiplies handed to the PE array
engine. Within a cycle, completions are processed before dispatch.

    TL  reads memory at dispatch, writes its register (dirty) after the load latency
    TS  reads its register and writes memory at dispatch
    MM  reads B until its feed starts, A and C during its feed, writes C at retire
"""

import heapq
import logging

from tilearray.cpu.config import CoreConfig
from tilearray.cpu.memory import MemoryImage
from tilearray.cpu.report import SimReport
from tilearray.cpu.scoreboard import Scoreboard
from tilearray.engine.config import ArrayConfig
from tilearray.engine.reference import reference_gemm_tile
from tilearray.engine.stats import mean_utilization
from tilearray.engine.systolic import SystolicEngine, resolve_datapath
from tilearray.errors import DeadlockError, PolicyError
from tilearray.isa.instructions import Opcode, infer_register_roles
from tilearray.isa.registers import TileRegisterFile, apply_write, consume_weights
from tilearray.isa.tiles import Role, encode_c, decode_a, decode_b, decode_c
from tilearray.isa.trace import checked
from tilearray.model.policy import PolicyDescriptor
from tilearray.tools.file import sha256_bytes


def _shapes(trace):
    roles, _ = infer_register_roles(trace.instructions)
    # registers never used by a multiply move accumulator-shaped tiles
    return {reg: trace.geometry.shape_for(roles.get(reg, Role.ACC)) for reg in range(8)}


def memory_extent(trace):
    """
    Smallest image size covering every tile load and store of a trace
    """
    shapes = _shapes(trace)
    end = 0
    for instr in trace.instructions:
        if instr.kind is not Opcode.MM:
            shape = shapes[instr.reg]
            end = max(end, instr.base + (shape.rows - 1) * instr.stride + shape.cols_bytes)
    return end


def _as_image(memory, trace):
    if memory is None:
        return MemoryImage.zeros(memory_extent(trace))
    if isinstance(memory, MemoryImage):
        return memory.copy()
    return MemoryImage(memory)


def _describe(instr, hazards, reason):
    parts = ["%s %s treg%d (ready at %d)" % (kind, 'on', reg, until) for kind, reg, until in hazards]
    if reason:
        parts.append(reason)
    return "line %d '%s': %s" % (instr.line, instr, ", ".join(parts) or "no progress")


def run_functional(trace, memory=None, split_pairs=False):
    """
    Sequential execution of a trace, one instruction at a time. The order oracle for run_trace.
    :return: final MemoryImage
    """
    trace = checked(trace)
    image = _as_image(memory, trace)
    shapes = _shapes(trace)
    tiles = trace.geometry
    rf = TileRegisterFile.empty()
    for instr in trace.instructions:
        if instr.kind is Opcode.TL:
            rf = apply_write(rf, instr.reg, image.read_tile(instr.base, instr.stride, shapes[instr.reg]))
        elif instr.kind is Opcode.TS:
            image.write_tile(instr.base, instr.stride, shapes[instr.reg], rf.read(instr.reg))
        else:
            c = reference_gemm_tile(decode_c(rf.read(instr.dst), tiles), decode_a(rf.read(instr.src_a), tiles),
                                    decode_b(rf.read(instr.src_b), tiles), split_pairs)
            rf = consume_weights(rf, instr.src_b)
            rf = apply_write(rf, instr.dst, encode_c(c))
    return image


def run_trace(trace, core=None, array=None, memory=None, datapath='auto', debug=False, record_events=False,
              workload=''):
    """
    Simulate a trace cycle by cycle
    :param trace: Trace, validated here
    :param core: CoreConfig
    :param array: ArrayConfig, its tile dims must match the trace header
    :param memory: MemoryImage or uint8 array; a zero image of the needed size when omitted
    :param datapath: 'systolic', 'tile' or 'auto'
    :return: SimReport, with the final memory image attached
    """
    trace = checked(trace)
    core = core or CoreConfig()
    array = array or ArrayConfig.for_tiles(trace.geometry, PolicyDescriptor())
    if array.tiles != trace.geometry:
        raise PolicyError("array tiles %s do not match the trace machine header %s"
                          % (array.tiles.as_tuple(), trace.geometry.as_tuple()))
    image = _as_image(memory, trace)
    shapes = _shapes(trace)
    engine = SystolicEngine(array, datapath=resolve_datapath(datapath, trace.mm_count), debug=debug,
                            record_events=record_events)
    scoreboard = Scoreboard()
    rf = TileRegisterFile.empty()
    instructions = trace.instructions
    loads = []
    class_latency = {'TL': 0, 'TS': 0, 'MM': 0}
    pc = 0
    cycle = 0
    end = 0
    logging.debug("run_trace: %d instructions, %s, datapath=%s", len(instructions), array.label, engine.datapath)

    while pc < len(instructions) or engine.ops or loads:
        if cycle > core.cycle_bound:
            raise DeadlockError(cycle, "cycle bound %d exceeded at line %d" % (core.cycle_bound, instructions[pc].line)
                                if pc < len(instructions) else "cycle bound exceeded while draining")

        for op in engine.advance(cycle):
            rf = apply_write(rf, op.instr.dst, encode_c(op.result))
            class_latency['MM'] += op.retire - op.accept
            end = max(end, op.retire)
        while loads and loads[0][0] <= cycle:
            _, _, reg, payload = heapq.heappop(loads)
            rf = apply_write(rf, reg, payload)

        dispatched = 0
        hazards = []
        reason = None
        wait_until = None
        while pc < len(instructions) and dispatched < core.width:
            instr = instructions[pc]
            hazards = scoreboard.blockers(instr, cycle)
            if hazards:
                if instr.kind is Opcode.MM:
                    engine.stats.note_stall('operand_not_ready')
                break
            if instr.kind is Opcode.TL:
                if len(loads) >= core.max_outstanding_loads:
                    reason = "all %d load slots busy" % core.max_outstanding_loads
                    break
                done = cycle + core.tileload_latency
                payload = image.read_tile(instr.base, instr.stride, shapes[instr.reg])
                heapq.heappush(loads, (done, pc, instr.reg, payload))
                scoreboard.claim_write(instr.reg, done, pc)
                class_latency['TL'] += core.tileload_latency
                end = max(end, done)
            elif instr.kind is Opcode.TS:
                image.write_tile(instr.base, instr.stride, shapes[instr.reg], rf.read(instr.reg))
                class_latency['TS'] += core.tilestore_latency
                end = max(end, cycle + core.tilestore_latency)
            else:
                result = engine.try_issue(instr, rf, cycle)
                if not result.accepted:
                    reason = result.reason
                    wait_until = result.earliest
                    break
                op = result.op
                rf = consume_weights(rf, instr.src_b)
                scoreboard.add_reader(instr.src_b, op.b_release)
                scoreboard.add_reader(instr.src_a, op.ac_release)
                scoreboard.add_reader(instr.dst, op.ac_release)
                scoreboard.claim_write(instr.dst, op.retire, pc)
            pc += 1
            dispatched += 1
            end = max(end, cycle + 1)

        if pc < len(instructions) and dispatched == core.width and not hazards and reason is None:
            cycle += 1
            continue
        candidates = [loads[0][0]] if loads else []
        candidates.extend(op.retire for op in engine.ops)
        if wait_until is not None:
            candidates.append(wait_until)
        later = scoreboard.next_change(cycle)
        if later is not None:
            candidates.append(later)
        candidates = [c for c in candidates if c > cycle]
        if not candidates:
            if pc < len(instructions):
                raise DeadlockError(cycle, _describe(instructions[pc], hazards, reason))
            break
        next_cycle = min(candidates)
        if pc < len(instructions) and next_cycle > cycle + 1:
            if instructions[pc].kind is Opcode.MM and (hazards or reason in ('array_busy', 'weight_link_busy')):
                engine.stats.note_stall('operand_not_ready' if hazards else reason, next_cycle - cycle - 1)
        cycle = next_cycle

    engine.advance(max(cycle, end))
    total = end + core.frontend_depth
    stats = engine.stats
    stats.events = engine.events
    counts = trace.counts()
    logging.info("%s %s: %d cycles, %d MM, mean II %.2f", workload or 'trace', array.label, total,
                 counts['MM'], stats.mean_ii)
    return SimReport(workload=workload, design=array.label, policy=array.policy.control.value,
                     pe=array.policy.pe.value, prefetch=array.policy.prefetch.value, total_cycles=total,
                     mm_count=counts['MM'], counts=counts, class_latency=class_latency, mean_ii=stats.mean_ii,
                     mean_utilization=float(mean_utilization(stats)), trace_digest=trace.digest(),
                     memory_digest=sha256_bytes(image.data.tobytes()), engine=stats, memory=image)
