import numpy as np
import pytest

from tilearray.errors import TraceSyntaxError, TraceValidationError
from tilearray.isa.bf16 import float32_to_bf16_bits, bf16_bits_to_float32, random_bf16, to_bf16
from tilearray.isa.instructions import Instruction, Opcode, infer_register_roles, validate
from tilearray.isa.registers import (TileRegisterFile, apply_write, consume_weights, replay_weight_reuse,
                                     wl_bypass_eligible)
from tilearray.isa.tiles import (Role, TileGeometry, decode_a, decode_b, decode_c, encode_a, encode_b, encode_c,
                                 empty_payload)
from tilearray.isa.trace import Trace, checked, format_trace, parse_trace, validate_trace
from tilearray.lowering.emit import lower_layer
from tilearray.lowering.layers import default_catalog


def _bits(u32):
    return np.array([u32], dtype=np.uint32).view(np.float32)


class TestBf16:

    def test_exact_values_keep_their_bits(self):
        assert float32_to_bf16_bits([1.0, -2.0, 0.0])[0] == 0x3F80
        assert float32_to_bf16_bits([-2.0])[0] == 0xC000

    def test_round_half_to_even(self):
        # ties go to the even bf16 mantissa
        assert float32_to_bf16_bits(_bits(0x3F808000))[0] == 0x3F80
        assert float32_to_bf16_bits(_bits(0x3F818000))[0] == 0x3F82
        assert float32_to_bf16_bits(_bits(0x3F808001))[0] == 0x3F81

    def test_overflow_rounds_to_infinity(self):
        assert float32_to_bf16_bits(_bits(0x7F7FFFFF))[0] == 0x7F80

    def test_nan_stays_quiet_nan(self):
        bits = float32_to_bf16_bits([np.nan])
        assert np.isnan(bf16_bits_to_float32(bits))[0]

    def test_random_operands_are_bf16(self):
        values = random_bf16(np.random.default_rng(3), (8, 8))
        assert not (values.view(np.uint32) & 0xFFFF).any()
        assert np.array_equal(to_bf16(values), values)


class TestTiles:

    def test_default_shapes_fill_a_register(self, tiles):
        for role in Role:
            shape = tiles.shape_for(role)
            assert (shape.rows, shape.cols_bytes) == (16, 64)

    def test_odd_t_k_rejected(self):
        with pytest.raises(ValueError):
            TileGeometry(16, 31, 16)

    def test_oversized_tile_rejected(self):
        with pytest.raises(ValueError):
            TileGeometry(16, 64, 16)
        with pytest.raises(ValueError):
            TileGeometry(17, 32, 16)

    def test_payload_codecs(self, tiles):
        rng = np.random.default_rng(0)
        a = random_bf16(rng, (16, 32))
        b = random_bf16(rng, (32, 16))
        c = rng.standard_normal((16, 16)).astype(np.float32)
        assert np.array_equal(decode_a(encode_a(a), tiles), a)
        assert np.array_equal(decode_b(encode_b(b), tiles), b)
        assert np.array_equal(decode_c(encode_c(c), tiles), c)

    def test_b_register_holds_row_pairs(self, tiles):
        b = np.zeros((32, 16), dtype=np.float32)
        b[0, 0] = 1.0
        b[1, 0] = 2.0
        b[0, 1] = 3.0
        words = encode_b(b)[0].view('<u2')
        assert list(words[:4]) == [0x3F80, 0x4000, 0x4040, 0]

    def test_small_tiles_leave_unused_bytes_zero(self):
        small = TileGeometry(4, 8, 4)
        payload = encode_c(np.ones((4, 4), dtype=np.float32))
        assert payload.shape == empty_payload().shape
        assert not payload[4:].any()
        assert not payload[:, 16:].any()
        assert np.array_equal(decode_c(payload, small), np.ones((4, 4), dtype=np.float32))


class TestRegisterFile:

    def test_empty_file_is_clean(self):
        rf = TileRegisterFile.empty()
        assert rf.dirty == (False,) * 8

    def test_write_sets_dirty_and_consume_clears(self):
        rf = apply_write(TileRegisterFile.empty(), 4, empty_payload() + 1)
        assert rf.dirty[4]
        assert rf.read(4)[0, 0] == 1
        rf = consume_weights(rf, 4)
        assert not rf.dirty[4]
        assert rf.read(4)[0, 0] == 1

    def test_values_are_immutable(self):
        rf = apply_write(TileRegisterFile.empty(), 0, empty_payload())
        with pytest.raises(ValueError):
            rf.read(0)[0, 0] = 7

    def test_bypass_needs_resident_clean_register(self):
        rf = consume_weights(apply_write(TileRegisterFile.empty(), 4, empty_payload()), 4)
        assert wl_bypass_eligible(rf, 4, 4)
        assert not wl_bypass_eligible(rf, 5, 4)
        assert not wl_bypass_eligible(rf, None, 4)
        assert not wl_bypass_eligible(apply_write(rf, 4, empty_payload()), 4, 4)

    def test_register_range(self):
        with pytest.raises(ValueError):
            TileRegisterFile.empty().read(8)

    def test_blocked_gemm_reuses_both_weight_registers(self, block_gemm):
        _, trace, _, _ = block_gemm
        assert replay_weight_reuse(trace.instructions) == [False, True, False, True]


def _automaton_reference(ops):
    """
    Straightforward replay with the register file itself
    """
    rf = TileRegisterFile.empty()
    resident = None
    skips = []
    for kind, reg in ops:
        if kind == 'TL':
            rf = apply_write(rf, reg, empty_payload())
        else:
            skips.append(wl_bypass_eligible(rf, resident, reg))
            rf = consume_weights(rf, reg)
            resident = reg
            rf = apply_write(rf, 0, empty_payload())
    return skips


def _random_sequence(rng, length):
    ops = []
    for _ in range(length):
        if rng.random() < 0.4:
            ops.append(('TL', int(rng.choice([4, 5, 6, 0]))))
        else:
            ops.append(('MM', int(rng.choice([4, 5]))))
    return ops


def _as_instructions(ops):
    return [Instruction.tl(reg, 0, 64) if kind == 'TL' else Instruction.mm(0, 6, reg) for kind, reg in ops]


def _check_automaton(sequences, seed):
    rng = np.random.default_rng(seed)
    for _ in range(sequences):
        ops = _random_sequence(rng, int(rng.integers(1, 12)))
        assert replay_weight_reuse(_as_instructions(ops)) == _automaton_reference(ops), ops


def _skip_rule(ops):
    """
    WL skipped iff the previous multiply used the same weight register and nothing wrote it since
    """
    skips = []
    last = None
    written = set()
    for kind, reg in ops:
        if kind == 'TL':
            written.add(reg)
        else:
            skips.append(last == reg and reg not in written)
            last = reg
            written = set()
    return skips


def test_dirty_automaton_matches_reference():
    _check_automaton(2000, seed=11)


def test_skip_rule_holds_on_random_interleavings():
    rng = np.random.default_rng(5)
    for _ in range(2000):
        ops = _random_sequence(rng, int(rng.integers(1, 12)))
        assert replay_weight_reuse(_as_instructions(ops)) == _skip_rule(ops), ops


@pytest.mark.slow
def test_dirty_automaton_fuzz_full():
    _check_automaton(100000, seed=12)


class TestValidate:

    def test_well_formed_instructions(self, tiles):
        assert validate(Instruction.tl(4, 0x1000, 64), tiles) == []
        assert validate(Instruction.mm(0, 6, 4), tiles) == []

    def test_aliasing(self, tiles):
        codes = [v.code for v in validate(Instruction.mm(0, 0, 4), tiles)]
        assert codes == ['aliasing']

    def test_stride_and_alignment(self, tiles):
        assert [v.code for v in validate(Instruction.tl(0, 0x1000, 0), tiles)] == ['stride']
        assert [v.code for v in validate(Instruction.tl(0, 0x1002, 64), tiles)] == ['stride']
        roles = {0: Role.ACC}
        assert [v.code for v in validate(Instruction.tl(0, 0x1000, 32), tiles, roles)] == ['stride']

    def test_register_range(self, tiles):
        assert [v.code for v in validate(Instruction.mm(9, 6, 4), tiles)] == ['register-range']

    def test_role_conflict(self):
        roles, violations = infer_register_roles([Instruction.mm(0, 6, 4, line=2), Instruction.mm(6, 0, 4, line=3)])
        assert roles[0] is Role.ACC
        assert violations and violations[0].code == 'operand-type'
        assert violations[0].line == 3

    def test_a_and_b_share_element_type(self):
        # both BF16: reusing an activation register as weights is legal
        _, violations = infer_register_roles([Instruction.mm(0, 6, 4), Instruction.mm(1, 4, 6)])
        assert violations == []


TRACE_TEXT = """\
# one fold
machine t_m=16 t_k=32 t_n=16 in=bf16 out=fp32
TL treg0, 0x3000, 64
TL treg4, 0x2000, 64   # weights
TL treg6, 0x1000, 64
MM treg0, treg6, treg4
TS 0x3000, 64, treg0
"""


GEOMETRIES = (TileGeometry(), TileGeometry(16, 16, 16), TileGeometry(8, 32, 8))


def _random_trace(rng, length):
    geometry = GEOMETRIES[int(rng.integers(len(GEOMETRIES)))]
    instructions = []
    for _ in range(length):
        kind = int(rng.integers(3))
        reg = int(rng.integers(8))
        base, stride = 4 * int(rng.integers(1 << 20)), 4 * int(rng.integers(1, 1024))
        if kind == 0:
            instructions.append(Instruction.tl(reg, base, stride))
        elif kind == 1:
            instructions.append(Instruction.ts(base, stride, reg))
        else:
            instructions.append(Instruction.mm(*(int(r) for r in rng.integers(8, size=3))))
    return Trace(geometry, tuple(instructions))


def _check_round_trip(trace):
    text = format_trace(trace)
    again = parse_trace(text)
    assert again.geometry == trace.geometry
    assert again.instructions == trace.instructions
    assert [i.line for i in again.instructions] == list(range(2, len(trace) + 2))
    assert format_trace(again) == text


class TestTrace:

    def test_parse(self):
        trace = parse_trace(TRACE_TEXT)
        assert trace.geometry == TileGeometry(16, 32, 16)
        assert trace.counts() == {'TL': 3, 'TS': 1, 'MM': 1}
        assert trace.mm_count == 1
        assert trace.instructions[0] == Instruction.tl(0, 0x3000, 64)
        assert trace.instructions[3].kind is Opcode.MM
        assert [i.line for i in trace.instructions] == [3, 4, 5, 6, 7]

    def test_format_parse(self, block_gemm):
        _, trace, _, _ = block_gemm
        again = parse_trace(format_trace(trace))
        assert again.instructions == trace.instructions
        assert again.digest() == trace.digest()

    def test_digest_tracks_content(self):
        trace = parse_trace(TRACE_TEXT)
        other = Trace(trace.geometry, trace.instructions[:-1])
        assert trace.digest() != other.digest()

    @pytest.mark.parametrize('text, line, column', [
        ("MM treg0, treg6, treg4\n", 1, 1),
        ("machine t_m=16 t_k=32 t_n=16 in=bf16 out=fp32\nXX treg0, 0, 64\n", 2, 1),
        ("machine t_m=16 t_k=32 t_n=16 in=bf16 out=fp32\nTL treg9, 0, 64\n", 2, 4),
        ("machine t_m=16 t_k=32 t_n=16 in=bf16 out=fp32\nTL treg1, zero, 64\n", 2, 11),
        ("machine t_m=16 t_k=32 t_n=16 in=bf16 out=fp16\n", 1, 38),
        ("machine t_m=16 t_k=31 t_n=16 in=bf16 out=fp32\n", 1, 1),
    ])
    def test_syntax_errors_carry_position(self, text, line, column):
        with pytest.raises(TraceSyntaxError) as info:
            parse_trace(text)
        assert (info.value.line, info.value.column) == (line, column)

    def test_operand_count(self):
        with pytest.raises(TraceSyntaxError) as info:
            parse_trace("machine t_m=16 t_k=32 t_n=16 in=bf16 out=fp32\nMM treg0, treg6\n")
        assert info.value.line == 2

    def test_checked_raises_on_violations(self, tiles):
        trace = Trace(tiles, (Instruction.mm(0, 0, 4, line=2),))
        assert validate_trace(trace)
        with pytest.raises(TraceValidationError):
            checked(trace)

    def test_random_traces_format_and_parse(self):
        rng = np.random.default_rng(23)
        for _ in range(300):
            _check_round_trip(_random_trace(rng, int(rng.integers(0, 60))))

    @pytest.mark.slow
    def test_dlrm1_trace_format_and_parse(self):
        _, trace = lower_layer(default_catalog()['DLRM-1'], TileGeometry())
        assert trace.mm_count == 65536
        _check_round_trip(trace)
