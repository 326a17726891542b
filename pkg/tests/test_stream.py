import numpy as np
import pytest

from hawkes_bvm.stream import EventStream


def test_sorting_and_marks():
    s = EventStream(np.array([0.5, 0.1, 0.3]), np.array([2, 1, 1]),
                    0.0, 1.0)
    assert np.allclose(s.times, [0.1, 0.3, 0.5])
    assert list(s.marks) == [1, 1, 2]
    assert s.K == 2
    assert np.allclose(s.mark_times(1), [0.1, 0.3])


def test_tie_breaking_jitter():
    s = EventStream(np.array([0.2, 0.2, 0.2]), np.array([1, 2, 1]),
                    0.0, 1.0)
    assert s.n_jittered == 2
    assert np.all(np.diff(s.times) > 0)
    assert abs(s.times[2] - 0.2) < 1e-9


def test_count_in_conventions():
    s = EventStream(np.array([0.1, 0.5, 0.9]), np.array([1, 1, 1]),
                    0.0, 1.0)
    assert s.count_in(0.1, 0.5, closed="left") == 1   # [0.1, 0.5[
    assert s.count_in(0.1, 0.5, closed="right") == 1  # ]0.1, 0.5]
    assert s.count_in(0.0, 1.0, closed="left") == 3
    with pytest.raises(ValueError):
        s.count_in(0.0, 1.0, closed="both")


def test_restrict():
    s = EventStream(np.array([0.1, 0.5, 0.9]), np.array([1, 2, 1]),
                    0.0, 1.0)
    r = s.restrict(0.4, 1.0)
    assert len(r) == 2
    assert r.window_start == 0.4


def test_out_of_window_rejected():
    with pytest.raises(ValueError):
        EventStream(np.array([1.5]), np.array([1]), 0.0, 1.0)
    with pytest.raises(ValueError):
        EventStream(np.array([0.5]), np.array([0]), 0.0, 1.0)


def test_csv_round_trip():
    s = EventStream(np.array([-0.25, 0.1234567890123, 0.9]),
                    np.array([1, 2, 1]), -1.0, 1.0)
    t = EventStream.from_csv(s.to_csv(), -1.0, 1.0)
    assert np.array_equal(t.times, s.times)
    assert np.array_equal(t.marks, s.marks)


def test_csv_requires_header():
    with pytest.raises(ValueError):
        EventStream.from_csv("0.1,1\n", 0.0, 1.0)


def test_empty_stream():
    s = EventStream(np.array([]), np.array([]), 0.0, 1.0)
    assert len(s) == 0
    assert s.count_in(0.0, 1.0) == 0
