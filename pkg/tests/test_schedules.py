import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from simkv.errors import ConfigurationError
from simkv.schedules import LambdaSchedule, constant, paper_annealing, value_at


def test_constant_schedule():
    s = constant(4.0**-4)
    assert value_at(s, 1e3) == 4.0**-4
    assert value_at(s, 0.0) == value_at(s, 1e9)


class TestPaperAnnealing:
    def test_first_value(self):
        assert value_at(paper_annealing(), 0.0) == 0.0625

    def test_boundary_belongs_to_later_segment(self):
        s = paper_annealing()
        assert value_at(s, 16.0) == 4.0**-3
        assert value_at(s, 15.999) == 4.0**-2
        assert value_at(s, 5.0) == 4.0**-2

    def test_total_duration(self):
        s = paper_annealing()
        assert s.finite_duration == (4**12 - 4**2) // 3 == 5592400
        assert math.isinf(s.total_duration)

    def test_tail(self):
        s = paper_annealing()
        assert value_at(s, 5592400 - 1e-3) == 4.0**-11
        assert value_at(s, 5592400) == 4.0**-11
        assert value_at(s, 1e12) == 4.0**-11

    def test_segments(self):
        s = paper_annealing()
        finite = [seg for seg in s.segments if math.isfinite(seg[0])]
        assert finite == [(4.0**i, 4.0**-i) for i in range(2, 12)]


class TestValidation:
    def test_increasing_rejected(self):
        with pytest.raises(ConfigurationError, match="non-increasing"):
            LambdaSchedule(((1.0, 0.1), (1.0, 0.2)))

    def test_nonpositive_rejected(self):
        with pytest.raises(ConfigurationError):
            LambdaSchedule(((1.0, 0.0),))
        with pytest.raises(ConfigurationError):
            LambdaSchedule(((0.0, 1.0),))

    def test_only_last_infinite(self):
        with pytest.raises(ConfigurationError, match="last"):
            LambdaSchedule(((math.inf, 1.0), (1.0, 0.5)))

    def test_beyond_finite_schedule(self):
        s = LambdaSchedule(((1.0, 1.0), (2.0, 0.5)))
        assert value_at(s, 2.999) == 0.5
        with pytest.raises(ConfigurationError, match="beyond"):
            value_at(s, 3.0)

    def test_negative_time(self):
        with pytest.raises(ConfigurationError):
            value_at(constant(1.0), -1.0)


def test_record_roundtrip():
    s = paper_annealing()
    recs = s.to_records()
    assert recs[-1]["duration"] == "inf"
    assert LambdaSchedule.from_records(recs) == s


segments = st.lists(
    st.tuples(st.floats(0.01, 100.0), st.floats(1e-6, 10.0)), min_size=1, max_size=8
).map(lambda segs: tuple(zip([d for d, _ in segs], sorted((v for _, v in segs), reverse=True))))


@given(segments, st.lists(st.floats(0.0, 1.0), min_size=2, max_size=20))
def test_non_increasing_in_time(segs, fracs):
    s = LambdaSchedule(segs)
    times = sorted(f * s.total_duration * 0.999 for f in fracs)
    vals = [value_at(s, t) for t in times]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


@given(segments)
def test_right_continuous_at_breakpoints(segs):
    s = LambdaSchedule(segs)
    for i, b in enumerate(s.breakpoints):
        assert value_at(s, b) == s.segments[i + 1][1]
        if b > 0:
            assert value_at(s, math.nextafter(b, 0.0)) >= value_at(s, b)


@given(st.floats(1e-6, 10.0), st.floats(0.0, 1e8))
def test_constant_is_time_independent(lam, t):
    assert value_at(constant(lam), t) == lam
