import pytest

from tiwifi.phy import TonePlan, ppdu_airtime
from tiwifi.scheduler import (BsrTable, ScheduleGroup, SchedulerParams, TxopPlan, group_stas,
                              plan_txop, run_ap_txop, update_bsr)

A, B, C = 1, 2, 3
SIFS, BACK, TRIGGER = 16_000, 32_000, 48_000


def members(groups):
    return [list(g.members) for g in groups]


def test_three_stas_form_pair_then_lone_full_band():
    groups = group_stas({A: 5, B: 2, C: 7})
    assert members(groups) == [[C, A], [B]]
    assert groups[0].ru.tones_per_ru == 1960 and groups[0].ru.ru_count == 2
    assert groups[1].ru.tones_per_ru == 3920


def test_six_stas_form_quad_then_pair():
    occ = {i: o for i, o in zip(range(1, 7), (9, 8, 7, 6, 5, 4))}
    groups = group_stas(occ)
    assert [list(g.occupancy) for g in groups] == [[9, 8, 7, 6], [5, 4]]
    assert groups[0].ru.tones_per_ru == 980
    assert groups[1].ru.tones_per_ru == 1960


def test_single_sta_on_full_band():
    (g,) = group_stas({A: 3})
    assert g.members == (A,) and g.ru.tones_per_ru == 3920


def test_partial_group_of_three_uses_quarter_rus():
    occ = {i: 10 - i for i in range(1, 8)}
    groups = group_stas(occ)
    assert [len(g.members) for g in groups] == [4, 3]
    assert groups[1].ru.tones_per_ru == 980 and groups[1].ru.ru_count == 3


def test_zero_occupancy_filtered_and_empty_input():
    assert group_stas({}) == []
    assert group_stas({A: 0, B: 0}) == []
    assert members(group_stas({A: 0, B: 1})) == [[B]]


def test_ties_break_by_ascending_id():
    assert members(group_stas({5: 2, 3: 2, 4: 2, 9: 2})) == [[3, 4, 5, 9]]


@pytest.mark.parametrize("seed", range(20))
def test_highest_first_and_size_limits(seed):
    import random
    rng = random.Random(seed)
    occ = {i: rng.randrange(0, 20) for i in range(1, rng.randrange(2, 15))}
    groups = group_stas(occ)
    flat = [o for g in groups for o in g.occupancy]
    assert flat == sorted(flat, reverse=True)
    assert all(1 <= len(g.members) <= 4 and g.ru.ru_count == len(g.members) for g in groups)
    assert sum(len(g.members) for g in groups) == sum(1 for o in occ.values() if o > 0)


def test_bsr_table_defaults_and_latest_wins():
    table = BsrTable([A, B], default=1)
    assert table.occupancy(A) == 1
    update_bsr(table, A, 4, at=10)
    assert table.occupancy(A) == 4
    update_bsr(table, A, 0, at=20)
    assert table.occupancy(A) == 0 and table.reports[A].reported_at == 20
    assert table.snapshot() == {A: 0, B: 1}
    assert table.any_demand()
    update_bsr(table, B, 0, at=30)
    assert not table.any_demand()
    with pytest.raises(ValueError):
        table.update_bsr(A, -1, 0)


def airtime_lookup(kind, group):
    return ppdu_airtime(3 * 2544, group.ru.tones_per_ru)


def test_two_stas_three_mpdus_each():
    plan = plan_txop({A: 3, B: 3}, {}, now=0)
    timeline = run_ap_txop(plan, 0, airtime_lookup, SIFS, BACK, TRIGGER)
    (ex,) = timeline.exchanges
    assert ex.kind == "dl" and ex.group.ru.tones_per_ru == 1960
    assert ex.ppdu_end - ex.ppdu_start == ppdu_airtime(3 * 2544, 1960)
    assert ex.end == ex.ppdu_end + SIFS + BACK


def test_ul_only_round_with_four_quarter_rus():
    plan = plan_txop({}, {1: 1, 2: 1, 3: 1, 4: 1}, now=0)
    timeline = run_ap_txop(plan, 100, airtime_lookup, SIFS, BACK, TRIGGER)
    (ex,) = timeline.exchanges
    assert ex.kind == "ul" and ex.group.ru.ru_count == 4 and ex.group.ru.tones_per_ru == 980
    assert ex.ppdu_start == 100 + TRIGGER + SIFS


def test_dl_precedes_ul_and_accounting():
    plan = plan_txop({1: 5, 2: 4, 3: 3, 4: 2, 5: 1}, {1: 2, 2: 2, 6: 1}, now=7)
    assert plan.snapshot_at == 7
    timeline = run_ap_txop(plan, 0, airtime_lookup, SIFS, BACK, TRIGGER)
    kinds = [e.kind for e in timeline.exchanges]
    assert kinds == sorted(kinds)  # "dl" < "ul"
    busy = 0
    for i, e in enumerate(timeline.exchanges):
        busy += e.end - e.start + (SIFS if i else 0)
        if i:
            assert e.start == timeline.exchanges[i - 1].end + SIFS
    assert timeline.end - timeline.start == busy


def test_empty_plan_is_never_executed():
    plan = TxopPlan([], [], 0)
    assert plan.empty
    with pytest.raises(ValueError):
        run_ap_txop(plan, 0, airtime_lookup, SIFS, BACK, TRIGGER)


def test_custom_thresholds():
    params = SchedulerParams(small_group=1, large_group=2, large_threshold=3)
    assert members(group_stas({1: 3, 2: 2}, TonePlan(), params)) == [[1], [2]]
    assert members(group_stas({1: 3, 2: 2, 3: 1}, TonePlan(), params)) == [[1, 2], [3]]
    assert isinstance(group_stas({1: 1})[0], ScheduleGroup)
