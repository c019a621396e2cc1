import numpy as np

from focaldepth.benchmark import METHODS, default_suite, run_benchmark
from focaldepth.estimate import LossConfig
from focaldepth.scenes import SceneSpec


def small_suite():
    return [SceneSpec("plane", (1.4,), height=56, width=56), SceneSpec("two_plane", (1.1, 2.0), height=56, width=56, seed=3)]


def test_zero_budget_equals_dff(lens, schedule):
    res = run_benchmark(small_suite(), lens, schedule, LossConfig(iterations=0))
    agg = res.by_method()
    assert set(agg) == set(METHODS)
    for label in ("fs_syn_aif", "fs_gt_aif"):
        assert agg[label].rmse == agg["dff"].rmse
        assert agg[label].delta1 == agg["dff"].delta1
    assert len(res.per_scene) == 6
    assert agg["dff"].pixels == 2 * 8 * 8


def test_rows_nested_and_deterministic(lens, schedule):
    cfg = LossConfig(iterations=3)
    a = run_benchmark(small_suite(), lens, schedule, cfg)
    b = run_benchmark(small_suite(), lens, schedule, cfg)
    assert a.rows() == b.rows()
    for r in a.per_scene + a.aggregate:
        assert r.delta1 <= r.delta2 <= r.delta3
    assert "Re-render, true AIF" in a.table()


def test_default_suite_is_off_schedule(schedule):
    suite = default_suite()
    depths = {d for spec in suite for d in spec.depths}
    assert not depths & set(schedule.distances)
    assert len({s.seed for s in suite}) == len(suite)
