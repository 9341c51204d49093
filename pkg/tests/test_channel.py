import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from owcnet.channel import (ApSpec, BranchSpec, ReceiverSpec, RoomConfig, WAVELENGTHS, build_channel_tensor,
                            default_aps, default_grid, discretize_room, first_order_gain, first_order_map,
                            lambertian_order, load_channel, los_gain, los_map, read_header, save_channel,
                            second_order_gain, second_order_map, unit)

DOWN, UP = (0.0, 0.0, -1.0), (0.0, 0.0, 1.0)


@pytest.mark.parametrize("angle, expected, tol", [(60, 1.0, 1e-12), (45, 2.0, 1e-12), (30, 4.8188, 1e-4)])
def test_lambertian_order(angle, expected, tol):
    assert lambertian_order(angle) == pytest.approx(expected, rel=tol)


@pytest.mark.parametrize("angle", [0, 90, -5, 120])
def test_lambertian_order_domain(angle):
    with pytest.raises(ValueError):
        lambertian_order(angle)


@pytest.mark.parametrize("size, count", [(0.20, 3400), (0.05, 54400)])
def test_discretize_counts(size, count):
    elems = discretize_room(RoomConfig(), size)
    assert len(elems) == count
    assert elems.areas.sum() == pytest.approx(2 * (8 * 4 + 8 * 3 + 4 * 3), rel=1e-9)


def test_discretize_unit_room():
    room = RoomConfig(1, 1, 1)
    elems = discretize_room(room, 1.0)
    assert len(elems) == 6
    assert np.allclose(np.linalg.norm(elems.normals, axis=1), 1.0, atol=1e-12)
    # inward normals point from the face toward the room centre
    assert np.all(np.einsum("ij,ij->i", np.array([0.5, 0.5, 0.5]) - elems.centers, elems.normals) > 0)
    floor = elems.normals[:, 2] == 1
    assert np.all(elems.reflectance[floor] == 0.3) and np.all(elems.reflectance[~floor] == 0.8)


def test_discretize_clips_edge_elements():
    elems = discretize_room(RoomConfig(1.1, 1, 1), 0.5)
    assert elems.areas.sum() == pytest.approx(2 * (1.1 + 1.1 + 1), rel=1e-9)
    assert elems.areas.min() == pytest.approx(0.05)


def test_discretize_rejects_bad_size():
    with pytest.raises(ValueError):
        discretize_room(RoomConfig(), 0.0)
    with pytest.raises(ValueError):
        discretize_room(RoomConfig(), 3.5)


def test_los_axial():
    g = los_gain((2, 2, 3), DOWN, 1.0, (2, 2, 1), UP, 20e-6, 25.0)
    assert g == pytest.approx(2 * 20e-6 / (2 * math.pi * 4), rel=1e-12)
    assert f"{g:.4e}" == "1.5915e-06"


def test_los_fov_cutoff():
    tilt = math.radians(30)
    rx_normal = (math.sin(tilt), 0.0, math.cos(tilt))
    assert los_gain((2, 2, 3), DOWN, 1.0, (2, 2, 1), rx_normal, 20e-6, 25.0) == 0.0
    assert los_gain((2, 2, 3), DOWN, 1.0, (2, 2, 1), rx_normal, 20e-6, 35.0) > 0.0


def test_los_perpendicular_boresight():
    assert los_gain((0, 0, 1), (1, 0, 0), 1.0, (0, 1, 1), (0, -1, 0), 1e-4, 90.0) == 0.0


def test_los_coincident():
    with pytest.raises(ValueError):
        los_gain((1, 1, 1), DOWN, 1.0, (1, 1, 1), UP, 1e-4, 90)


@settings(max_examples=60, deadline=None)
@given(d1=st.floats(0.1, 5.0), d2=st.floats(0.1, 5.0))
def test_los_decreases_with_distance(d1, d2):
    if abs(d1 - d2) < 1e-6:
        return
    g1 = los_gain((0, 0, d1), DOWN, 1.0, (0, 0, 0), UP, 1e-4, 25)
    g2 = los_gain((0, 0, d2), DOWN, 1.0, (0, 0, 0), UP, 1e-4, 25)
    assert (g1 > g2) == (d1 < d2)


@settings(max_examples=100, deadline=None)
@given(tx=st.tuples(*[st.floats(-3, 3)] * 3), rx=st.tuples(*[st.floats(-3, 3)] * 3),
       nt=st.tuples(*[st.floats(-1, 1)] * 3), nr=st.tuples(*[st.floats(-1, 1)] * 3),
       n=st.floats(0.5, 5), fov=st.floats(1, 90))
def test_los_nonnegative(tx, rx, nt, nr, n, fov):
    if np.linalg.norm(np.subtract(tx, rx)) < 1e-3 or np.linalg.norm(nt) < 1e-3 or np.linalg.norm(nr) < 1e-3:
        return
    assert los_gain(tx, unit(nt), n, rx, unit(nr), 1e-4, fov) >= 0.0


def test_branch_normals_unit():
    for b in ReceiverSpec().branches:
        assert np.linalg.norm(b.normal) == pytest.approx(1.0, abs=1e-12)
    n = BranchSpec(45, 70).normal
    c = math.cos(math.radians(70))
    assert np.allclose(n, [c * math.cos(math.pi / 4), c * math.sin(math.pi / 4), math.sin(math.radians(70))])


def test_default_layout():
    aps = default_aps()
    assert len(aps) == 8
    assert aps[0].position == (1.0, 1.0, 3.0)
    assert aps[4].position == (1.0, 3.0, 3.0)
    assert {ap.position[0] for ap in aps} == {1.0, 3.0, 5.0, 7.0}
    assert {ap.position[1] for ap in aps} == {1.0, 3.0}
    assert aps[0].power("red") == pytest.approx(9.6)
    grid = default_grid()
    assert grid.shape == (32, 3) and len({tuple(p) for p in grid}) == 32
    assert tuple(grid[5]) == (1.5, 1.5, 1.0)


def _small_setup():
    room = RoomConfig(2.0, 1.5, 1.5, first_order_element=0.25, second_order_element=0.25)
    aps = (ApSpec((0.6, 0.7, 1.5)), ApSpec((1.5, 0.5, 1.5)))
    rx = ReceiverSpec()
    grid = np.array([[0.5, 0.5, 0.5], [1.2, 0.9, 0.5]])
    return room, aps, rx, grid


def test_factorized_first_order_matches_direct_sum():
    room, aps, rx, grid = _small_setup()
    fast = first_order_map(room, aps, rx, grid)
    elems = discretize_room(room, room.first_order_element)
    for l, loc in enumerate(grid):
        for f, br in enumerate(rx.branches):
            for a, ap in enumerate(aps):
                slow = first_order_gain(ap, loc, br, elems)
                assert fast[l, f, a] == pytest.approx(slow, rel=1e-9, abs=1e-300)


def test_factorized_second_order_matches_double_sum():
    room, aps, rx, grid = _small_setup()
    fast = second_order_map(room, aps, rx, grid)
    elems = discretize_room(room, room.second_order_element)
    checked = 0
    for l, loc in enumerate(grid):
        for f, br in enumerate(rx.branches[:2]):
            slow = second_order_gain(aps[0], loc, br, elems)
            assert fast[l, f, 0] == pytest.approx(slow, rel=1e-9, abs=1e-300)
            checked += slow > 0
    assert checked > 0


def test_zero_reflectance_kills_reflections():
    room, aps, rx, grid = _small_setup()
    dark = RoomConfig(room.length, room.width, room.height, 0.0, 0.0,
                      first_order_element=0.25, second_order_element=0.25)
    assert not first_order_map(dark, aps, rx, grid).any()
    assert not second_order_map(dark, aps, rx, grid).any()
    assert los_map(aps, rx, grid).any()


def test_default_channel_shapes_and_signs(default_channel):
    ch = default_channel
    g = ch.gains
    assert ch.R.shape == (32, 4, 8, 4)
    for part in (g.los, g.first_order, g.second_order):
        assert part.shape == (32, 4, 8) and np.all(part >= 0)
    assert np.array_equal(g.total, (g.los + g.first_order) + g.second_order)
    assert np.all(np.isfinite(ch.R)) and np.all(ch.R >= 0)
    assert np.array_equal(ch.N, ch.R)


def test_wavelength_ordering(default_channel):
    R = default_channel.R
    pos = R[..., 0] > 0
    assert pos.any()
    for hi, lo in ((0, 1), (1, 2), (2, 3)):
        assert np.all(R[..., hi][pos] > R[..., lo][pos])
    coef = [0.4 * 9.6, 0.435 * 6.0, 0.3 * 3.6, 0.2 * 3.6]
    H = default_channel.gains.total
    assert np.allclose(R, (H[..., None] * np.array(coef)) ** 2, rtol=1e-12)


def test_second_bounce_can_beat_first_under_an_ap():
    # Down-facing ceiling APs put no first-bounce light on the ceiling, and
    # the floor lies behind the up-tilted detectors, so first-order light
    # reaches them only via walls. Directly under an AP the second bounce
    # (ceiling-assisted) then exceeds the first in total over the branches.
    room, rx = RoomConfig(), ReceiverSpec()
    aps = default_aps()[:1]
    under = np.array([[1.0, 1.0, 1.0]])
    first = first_order_map(room, aps, rx, under)[0, :, 0]
    second = second_order_map(room, aps, rx, under)[0, :, 0]
    assert second.sum() > first.sum() > 0
    assert first[0] == 0.0  # this branch sees only ceiling, which the AP does not light
    elems = discretize_room(room, room.first_order_element)
    ceiling = elems.surface == 0
    lit = [los_gain(aps[0].position, DOWN, 1.0, c, n, a, 90.0)
           for c, n, a in zip(elems.centers[ceiling][:50], elems.normals[ceiling][:50], elems.areas[ceiling][:50])]
    assert not any(lit)


def test_los_dominates_somewhere(default_channel):
    g = default_channel.gains
    assert g.los.max() > g.first_order.max() > 0
    assert g.los.max() > g.second_order.max() > 0


def test_illumination_scale_zero():
    room, aps, rx, grid = _small_setup()
    ch = build_channel_tensor(room, aps, rx, grid, illumination_scale=0.0)
    assert not ch.N.any() and ch.R.any()
    ch2 = build_channel_tensor(room, aps, rx, grid, illumination_scale=0.5)
    assert np.allclose(ch2.N, 0.25 * ch2.R, rtol=1e-15)


def test_determinism_and_workers():
    room, aps, rx, grid = _small_setup()
    a = build_channel_tensor(room, aps, rx, grid, workers=1)
    b = build_channel_tensor(room, aps, rx, grid, workers=2)
    assert a.R.tobytes() == b.R.tobytes()
    assert a.fingerprint == b.fingerprint


def test_fingerprint_changes_with_reflectance():
    room, aps, rx, grid = _small_setup()
    a = build_channel_tensor(room, aps, rx, grid)
    other = RoomConfig(room.length, room.width, room.height, 0.7, 0.3,
                       first_order_element=0.25, second_order_element=0.25)
    b = build_channel_tensor(other, aps, rx, grid)
    assert a.fingerprint != b.fingerprint


def test_artifact_roundtrip(tmp_path):
    room, aps, rx, grid = _small_setup()
    ch = build_channel_tensor(room, aps, rx, grid)
    path = save_channel(ch, tmp_path / "c.bin")
    raw = path.read_bytes()
    assert raw[:8] == b"OWCCHAN\n"
    hdr = read_header(path)
    assert hdr["dims"] == [2, 4, 2, 4] and hdr["wavelengths"] == list(WAVELENGTHS)
    back = load_channel(path)
    assert back.R.tobytes() == ch.R.tobytes()
    assert back.gains.second_order.tobytes() == ch.gains.second_order.tobytes()
    assert back.fingerprint == ch.fingerprint


def test_artifact_rejects_garbage(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"nonsense" * 4)
    with pytest.raises(ValueError):
        load_channel(p)


def test_invalid_configs():
    with pytest.raises(ValueError):
        RoomConfig(length=-1)
    with pytest.raises(ValueError):
        RoomConfig(floor_reflectance=1.5)
    with pytest.raises(ValueError):
        ReceiverSpec(branches=ReceiverSpec().branches[:3])
    with pytest.raises(ValueError):
        BranchSpec(0, 70, fov=0)
