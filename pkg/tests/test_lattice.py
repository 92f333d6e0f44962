import pytest
from hypothesis import given
from hypothesis import strategies as st

from tasepmf.errors import InvalidInputError
from tasepmf.lattice import (
    EMPTY,
    BitPattern,
    IndexLayout,
    LatticeParams,
    concat,
    layout_size,
    left_crop,
    left_truncate,
    parse_hops,
    right_crop,
    right_truncate,
)

P = BitPattern.from_string


def patterns(max_len=12):
    return st.integers(0, max_len).flatmap(
        lambda k: st.builds(BitPattern, st.just(k), st.integers(0, (1 << k) - 1)))


class TestParams:
    def test_constant_c(self):
        p = LatticeParams(4, 0.5, 0.25, (1.0, 2.0, 3.0))
        assert p.c == pytest.approx(6.75)
        assert p.hop(1) == 1.0 and p.hop(3) == 3.0

    def test_uniform(self):
        p = LatticeParams.uniform(5, 1.0, 2.0)
        assert p.h == (1.0,) * 4 and p.homogeneous

    @pytest.mark.parametrize("kwargs", [
        dict(n=0, alpha=1, beta=1, h=()),
        dict(n=3, alpha=0, beta=1, h=(1, 1)),
        dict(n=3, alpha=1, beta=-1, h=(1, 1)),
        dict(n=3, alpha=1, beta=1, h=(1,)),
        dict(n=3, alpha=1, beta=1, h=(1, 0)),
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(InvalidInputError):
            LatticeParams(**kwargs)

    def test_parse_hops(self):
        assert parse_hops("uniform:2", 4) == (2.0, 2.0, 2.0)
        assert parse_hops("1,2", 3) == (1.0, 2.0)
        with pytest.raises(InvalidInputError):
            parse_hops("1,2,3", 3)


class TestPatterns:
    def test_from_string_and_str(self):
        b = P("0101")
        assert (b.length, b.bits) == (4, 5)
        assert str(b) == "0101"
        assert P("") == EMPTY and str(EMPTY) == "∅"

    def test_bits_must_fit(self):
        with pytest.raises(InvalidInputError):
            BitPattern(2, 4)

    @pytest.mark.parametrize("b, i, expected", [
        ("1101", 1, "101"), ("10", 5, ""), ("100110", 2, "0110")])
    def test_left_truncate(self, b, i, expected):
        assert left_truncate(P(b), i) == P(expected)

    @pytest.mark.parametrize("b, i, expected", [
        ("1101", 1, "110"), ("1", 1, ""), ("100110", 3, "100")])
    def test_right_truncate(self, b, i, expected):
        assert right_truncate(P(b), i) == P(expected)

    def test_crops(self):
        assert left_crop(P("1101"), 2) == P("11")
        assert right_crop(P("1101"), 0) == EMPTY
        assert right_crop(P("100110"), 4) == P("0110")
        with pytest.raises(InvalidInputError):
            left_crop(P("11"), 3)
        with pytest.raises(InvalidInputError):
            right_crop(P("11"), 3)

    def test_concat(self):
        assert concat(EMPTY, P("101")) == P("101")
        assert concat(P("10"), P("01")) == P("1001")
        assert concat(P("1"), P("00110")) == P("100110")

    @given(patterns(), st.data())
    def test_split_identities(self, b, data):
        i = data.draw(st.integers(0, b.length))
        assert concat(left_crop(b, i), right_crop(b, b.length - i)) == b
        if i >= 1:
            assert concat(right_truncate(b, i), right_crop(b, i)) == b
            assert concat(left_crop(b, i), left_truncate(b, i)) == b

    @given(patterns())
    def test_matches_string_slicing(self, b):
        s = format(b.bits, f"0{b.length}b") if b.length else ""
        for i in range(1, b.length + 2):
            assert left_truncate(b, i) == P(s[i:])
            assert right_truncate(b, i) == P(s[:max(len(s) - i, 0)])


class TestLayout:
    def test_examples(self):
        assert IndexLayout(3, 3).flat(1, 0, 0) == 0
        assert IndexLayout(3, 3).size == 22
        assert IndexLayout(10, 2).size == 56

    @pytest.mark.parametrize("n", range(1, 7))
    def test_round_trip_exhaustive(self, n):
        for m in range(1, n + 1):
            layout = IndexLayout(n, m)
            seen = []
            for order, d, bits in layout.triples():
                idx = layout.flat(order, d, bits)
                back = layout.unflatten(idx)
                assert (back[0], back[1], back[2].bits) == (order, d, bits)
                assert back[2].length == order
                seen.append(idx)
            assert seen == list(range(layout.size))

    def test_sizes_match_closed_forms(self):
        for n in range(1, 11):
            for m in range(1, n + 1):
                layout = IndexLayout(n, m)
                assert layout.size == layout_size(n, m) == layout.closed_form_size()

    def test_accepts_pattern_objects_and_strings(self):
        layout = IndexLayout(4, 3)
        assert layout.flat(2, 1, "10") == layout.flat(2, 1, P("10")) == layout.flat(2, 1, 2)

    @pytest.mark.parametrize("args", [(0, 0, 0), (4, 0, 0), (2, 3, 0), (2, 0, 4), (2, 0, P("1"))])
    def test_flat_rejects_out_of_range(self, args):
        with pytest.raises(InvalidInputError):
            IndexLayout(4, 3).flat(*args)

    def test_order_m_layout_is_prefix(self):
        lo, hi = IndexLayout(6, 2), IndexLayout(6, 4)
        for t in lo.triples():
            assert lo.flat(*t) == hi.flat(*t)
