import numpy as np
import pytest

from tcgan.schedule import (
    ScheduleError,
    build_pyramid,
    build_schedule,
    consingan_schedule,
    emit_schedule_table,
    resample_image,
    scale_factor,
    schedule_for_target,
    singan_schedule,
)

EXPECTED_25 = [25, 58, 100, 148, 198, 250]


def test_scale_factor_stage_one_is_unity():
    for r in (0.3, 0.72, 1.5):
        assert scale_factor(1, r) == 1.0


def test_scale_factor_reference_values():
    # direct evaluation of the growth formula at r = 0.72
    assert abs(scale_factor(2, 0.72) - 2.3187) < 1e-3
    assert abs(scale_factor(6, 0.72) - 10.008) < 1e-2


def test_scale_factor_domain_error():
    with pytest.raises(ScheduleError):
        scale_factor(0, 0.72)


def test_build_schedule_reference_sizes():
    sched = build_schedule((25, 25), 0.72, 6)
    assert [h for h, _ in sched.sizes] == EXPECTED_25
    assert all(h == w for h, w in sched.sizes)


def test_build_schedule_rejects_single_stage():
    with pytest.raises(ScheduleError):
        build_schedule((25, 25), 0.72, 1)


def test_build_schedule_rejects_tiny_base():
    with pytest.raises(ScheduleError):
        build_schedule((3, 25), 0.72, 6)


def test_build_schedule_nonsquare_keeps_aspect():
    sched = build_schedule((25, 20), 0.72, 6)
    for h, w in sched.sizes:
        assert abs(w - 0.8 * h) <= 1.0  # per-dimension rounding


def test_degenerate_schedule_detected():
    with pytest.raises(ScheduleError, match="degenerate"):
        build_schedule((4, 4), 0.001, 3)


def test_spacing_nondecreasing():
    sched = build_schedule((25, 25), 0.72, 6)
    diffs = [b[0] - a[0] for a, b in zip(sched.sizes, sched.sizes[1:])]
    assert diffs == [33, 42, 48, 50, 52]
    assert all(a <= b for a, b in zip(diffs, diffs[1:]))


def test_build_schedule_pure():
    a = build_schedule((25, 25), 0.72, 6)
    b = build_schedule((25, 25), 0.72, 6)
    assert a.sizes == b.sizes


def test_schedule_for_target_hits_endpoint_exactly():
    for target in (600, 800, 1024):
        sched = schedule_for_target((target, target), 0.72, 6)
        assert sched.sizes[-1] == (target, target)


def test_geometric_schedules_anchor_max():
    s = singan_schedule((250, 250), 0.72, 6)
    assert s.sizes[-1] == (250, 250)
    c = consingan_schedule((250, 250), 0.72, 6)
    assert c.sizes[-1] == (250, 250)
    assert all(a < b for (a, _), (b, _) in zip(c.sizes, c.sizes[1:]))


def test_emit_schedule_table():
    sched = build_schedule((25, 25), 0.72, 6)
    csv = emit_schedule_table([("tcgan", sched)])
    lines = csv.strip().split("\n")
    assert lines[0] == "method,stage,height,width"
    assert len(lines) == 7
    assert lines[-1] == "tcgan,6,250,250"


def test_emit_schedule_table_rejects_empty_name():
    sched = build_schedule((25, 25), 0.72, 6)
    with pytest.raises(ScheduleError):
        emit_schedule_table([("", sched)])
    with pytest.raises(ScheduleError):
        emit_schedule_table([])


# -- resampling -------------------------------------------------------------

def test_resample_identity_bit_identical():
    rng = np.random.default_rng(0)
    img = np.clip(rng.standard_normal((31, 17, 3)), -1, 1).astype(np.float32)
    out = resample_image(img, (31, 17), "down")
    assert np.array_equal(out, img)


def test_resample_constant_preserved():
    img = np.full((4, 4, 3), 0.5, dtype=np.float32)
    for mode, size in (("up", (13, 9)), ("down", (2, 3))):
        out = resample_image(img, size, mode)
        assert out.shape[:2] == size
        assert np.allclose(out, 0.5, atol=1e-6)


def test_resample_mean_preserved_on_big_downscale():
    rng = np.random.default_rng(1)
    img = np.clip(rng.standard_normal((250, 250, 3)) * 0.3 + 0.1, -1, 1).astype(np.float32)
    small = resample_image(img, (25, 25), "down")
    assert abs(small.mean() - img.mean()) < 0.02 * 2.0  # 2% of the dynamic range


def test_resample_output_clamped():
    img = np.full((8, 8, 3), 1.0, dtype=np.float32)
    img[4, 4] = -1.0
    out = resample_image(img, (32, 32), "up")
    assert out.max() <= 1.0 and out.min() >= -1.0


def test_resample_rejects_bad_mode():
    with pytest.raises(ValueError):
        resample_image(np.zeros((4, 4, 3)), (2, 2), "sideways")


def test_pyramid_levels_match_schedule_sizes():
    rng = np.random.default_rng(3)
    for _ in range(20):
        h = int(rng.integers(40, 120))
        w = int(rng.integers(40, 120))
        base_h = int(rng.integers(8, 14))
        base_w = max(4, int(round(base_h * w / h)))
        img = np.clip(rng.standard_normal((h, w, 3)), -1, 1).astype(np.float32)
        sched = build_schedule((base_h, base_w), 0.72, 3)
        levels = build_pyramid(img, sched)
        assert [lv.shape[:2] for lv in levels] == [tuple(s) for s in sched.sizes]
        assert all(lv.min() >= -1 and lv.max() <= 1 for lv in levels)
