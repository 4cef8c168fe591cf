import random

import pytest

from launderscan.framedepth import DepthSample, compare, depth_histogram, load_depth_csv


def _sample(depths, label="s"):
    return DepthSample(records=tuple((f"http://u{i}/", d) for i, d in enumerate(depths)), label=label)


def test_histogram_exclude_zero():
    h = depth_histogram(_sample([1, 1, 2]), include_zero=False)
    assert h == {1: pytest.approx(2 / 3), 2: pytest.approx(1 / 3)}


def test_histogram_zero_denominator_rule():
    assert depth_histogram(_sample([0, 0, 1]), include_zero=False) == {1: 1.0}
    h = depth_histogram(_sample([0, 0, 1]), include_zero=True)
    assert h == {0: pytest.approx(2 / 3), 1: pytest.approx(1 / 3)}


def test_histogram_errors():
    with pytest.raises(ValueError):
        depth_histogram(_sample([]), include_zero=True)
    with pytest.raises(ValueError):
        depth_histogram(_sample([0, 0]), include_zero=False)


def test_histogram_fractions_sum_to_one():
    rng = random.Random(9)
    for _ in range(50):
        depths = [rng.randrange(0, 12) for _ in range(rng.randrange(1, 200))]
        if not any(d >= 1 for d in depths):
            depths.append(1)
        for include_zero in (True, False):
            h = depth_histogram(_sample(depths), include_zero=include_zero)
            assert abs(sum(h.values()) - 1.0) < 1e-12


def test_compare_identical_samples_zero_dominance():
    s = _sample([1, 2, 2, 3, 5])
    result = compare(s, s)
    assert all(v == 0.0 for _, v in result.tail_dominance)


def test_compare_hand_counted():
    result = compare(_sample([2, 3, 11], "tainted"), _sample([1, 1, 2], "general"))
    assert result.max_depth_a == 11
    assert result.max_depth_b == 2
    dom = dict(result.tail_dominance)
    assert dom[3] == pytest.approx(2 / 3 - 0.0)
    # k=1: both tails start at 1 when zeros are excluded
    assert dom[1] == pytest.approx(0.0)
    assert dom[2] == pytest.approx(3 / 3 - 1 / 3)


def test_compare_negative_dominance_reported():
    result = compare(_sample([1, 1, 1, 2]), _sample([3, 4, 5]))
    dom = dict(result.tail_dominance)
    assert dom[3] < 0.0


def test_compare_requires_structure():
    with pytest.raises(ValueError):
        compare(_sample([0, 0]), _sample([1]))


def test_tail_dominance_zero_at_k1():
    rng = random.Random(14)
    for _ in range(20):
        a = [rng.randrange(1, 9) for _ in range(rng.randrange(1, 50))]
        b = [rng.randrange(1, 9) for _ in range(rng.randrange(1, 50))]
        result = compare(_sample(a), _sample(b))
        assert dict(result.tail_dominance)[1] == pytest.approx(0.0)


def test_load_depth_csv():
    lines = [
        "url,max_depth",
        "http://a.com/,3",
        "http://b.com/x?q=1,0",
        "broken",
        "http://c.com/,-2",
        "http://d.com/,notanum",
    ]
    sample, skipped = load_depth_csv(lines, label="t")
    assert [d for _, d in sample.records] == [3, 0]
    assert [s.reason for s in skipped] == ["bad row", "negative depth", "bad depth"]


def test_plot_lines_cover_range():
    result = compare(_sample([1, 4]), _sample([2]))
    lines = result.plot_lines()
    assert lines[0].startswith("#")
    assert len(lines) == 5  # header + depths 1..4
