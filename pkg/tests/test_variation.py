import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbmsync.paths import GridPath, TimeGrid, lift_geometric, sample_fbm
from fbmsync.variation import (Holder, PVar, check_control_superadditivity, check_lemma21,
                               greedy_count, greedy_times, holder_count_bound, holder_seminorm,
                               p_variation, p_variation_power, pvar_power_table)


def brute_pvar_power(x, p, i0=0, i1=None):
    """Maximum over all partitions of [i0, i1], plain enumeration."""
    i1 = len(x) - 1 if i1 is None else i1
    best = 0.0
    inner = range(i0 + 1, i1)
    for r in range(len(inner) + 1):
        for pts in itertools.combinations(inner, r):
            pts = (i0, *pts, i1)
            acc = 0.0
            for a, b in zip(pts, pts[1:]):
                acc += math.pow(math.sqrt(sum((x[b][c] - x[a][c]) ** 2
                                              for c in range(len(x[a])))), p)
            best = max(best, acc)
    return best


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10), st.integers(1, 3), st.sampled_from([1.0, 1.5, 2.0, 2.5, 3.3]),
       st.integers(0, 2 ** 32))
def test_dp_matches_enumeration(n, d, p, seed):
    vals = np.random.default_rng(seed).standard_normal((n + 1, d))
    path = GridPath(TimeGrid(0, 1, n), vals)
    expected = brute_pvar_power(vals.tolist(), p)
    assert p_variation_power(path, p) == pytest.approx(expected, rel=1e-13, abs=1e-300)


def test_p1_is_total_variation():
    vals = np.array([0.0, 1.0, -1.0, 2.0, 2.0, 0.5])
    path = GridPath(TimeGrid(0, 1, 5), vals)
    assert p_variation(path, 1.0) == pytest.approx(np.abs(np.diff(vals)).sum())


def test_monotone_path_has_pvar_of_its_range():
    path = GridPath(TimeGrid(0, 1, 40), np.linspace(0, 3, 41) ** 2)
    for p in (1.5, 2.0, 4.0):
        assert p_variation(path, p) == pytest.approx(9.0)


def test_interval_and_table_consistent():
    path = sample_fbm(0.6, TimeGrid(0, 1, 30), 2, 4)
    tab = pvar_power_table(path, 2.0)
    assert tab[3, 17] == p_variation_power(path, 2.0, (3, 17))
    assert tab[5, 5] == 0.0


def test_p_below_one_rejected():
    with pytest.raises(ValueError):
        p_variation(GridPath(TimeGrid(0, 1, 2), [0, 1, 0]), 0.5)


def test_lift_norm_adds_area_term():
    path = sample_fbm(0.4, TimeGrid(0, 1, 12), 2, 2)
    lift = lift_geometric(path)
    p = 2.5
    # area part by enumeration with the pair areas as the increments
    best = 0.0
    for r in range(12):
        for pts in itertools.combinations(range(1, 12), r):
            pts = (0, *pts, 12)
            best = max(best, sum(np.linalg.norm(lift.area(a, b)) ** (p / 2)
                                 for a, b in zip(pts, pts[1:])))
    expected = brute_pvar_power(path.values.tolist(), p) + best
    assert p_variation_power(lift, p) == pytest.approx(expected, rel=1e-12)


def test_holder_seminorm_linear_path():
    path = GridPath(TimeGrid(0, 1, 16), 3.0 * np.linspace(0, 1, 17))
    # |x_t - x_s| / |t - s|^a = 3 |t - s|^(1 - a), largest over the whole interval
    assert holder_seminorm(path, 0.5) == pytest.approx(3.0)


def test_superadditivity_of_control():
    path = sample_fbm(0.4, TimeGrid(0, 1, 40), 1, 9)
    rep = check_control_superadditivity(path, 2.5)
    assert rep.passed, rep.summary()


def test_partition_block_bounds():
    path = sample_fbm(0.7, TimeGrid(0, 1, 60), 1, 3)
    rep = check_lemma21(path, 1 / 0.55, [0, 10, 25, 40, 60])
    assert rep.lower_holds and rep.upper_holds
    with pytest.raises(ValueError):
        check_lemma21(path, 2.0, [0, 0, 60])


@pytest.mark.parametrize("gamma", [0.05, 0.25, 1.0])
def test_greedy_blocks_are_maximal(gamma):
    path = sample_fbm(0.7, TimeGrid(0, 1, 64), 1, 1)
    p = 1 / 0.55
    part = greedy_times(path, gamma, PVar(p))
    x = path.values.tolist()
    idx = part.indices.tolist()
    assert idx[0] == 0 and idx[-1] == 64
    for a, b in zip(idx, idx[1:]):
        inside = brute_pvar_power(x, p, a, b) ** (1 / p) if b - a < 12 else \
            p_variation(path, p, (a, b))
        if a not in part.flagged:
                assert inside < gamma
        else:
            assert b == a + 1 and inside >= gamma
        if b < 64:
            assert p_variation(path, p, (a, b + 1)) >= gamma
    assert part.count <= part.count_bound(p_variation(path, p))


def test_greedy_single_large_step_is_flagged():
    path = GridPath(TimeGrid(0, 1, 3), [0.0, 0.1, 5.0, 5.1])
    part = greedy_times(path, 1.0, PVar(2.0))
    assert part.indices.tolist() == [0, 1, 2, 3]
    # flagged blocks are recorded by their start index
    assert part.flagged == [1]


def test_greedy_regression_constant():
    # frozen: fBm H=0.7, N=512, seed 0, p=1/0.55, gamma=0.25
    path = sample_fbm(0.7, TimeGrid(0, 1, 512), 1, 0)
    part = greedy_times(path, 0.25, PVar(1 / 0.55))
    assert part.count == 9
    assert part.count_bound(p_variation(path, 1 / 0.55)) == pytest.approx(16.06038900236203,
                                                                         rel=1e-9)


def test_greedy_on_lift_and_bound():
    lift = lift_geometric(sample_fbm(0.4, TimeGrid(0, 1, 128), 2, 0))
    p = 1 / 0.35
    for g in (0.1, 0.5, 2.0):
        part = greedy_times(lift, g, PVar(p))
        assert part.count <= part.count_bound(p_variation(lift, p))
    assert greedy_count(lift, 0.5, p) == greedy_times(lift, 0.5, PVar(p)).count


def test_holder_flavor_and_bound():
    path = sample_fbm(0.7, TimeGrid(0, 1, 256), 1, 2)
    part = greedy_times(path, 0.5, Holder(0.55))
    assert part.count <= holder_count_bound(path, 0.5, 0.55, 0.65)
    with pytest.raises(TypeError):
        part.count_bound(1.0)
    with pytest.raises(ValueError):
        greedy_times(path, 1.5, Holder(0.55))


def test_greedy_csv(tmp_path):
    path = sample_fbm(0.7, TimeGrid(0, 1, 64), 1, 1)
    part = greedy_times(path, 0.3, PVar(2.0))
    part.to_csv(tmp_path / "g.csv")
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "index,tau,interval_seminorm"
    assert len(lines) == part.count + 2
