import numpy as np
import pytest

from bvplab.grid import build_domain, build_exhaustion, extract_strip


def test_interval_counts():
    dom = build_domain("interval", 16)
    assert dom.n_interior == 15
    assert dom.n_boundary == 2
    assert dom.h == pytest.approx(1.0 / 16)


def test_square_counts():
    dom = build_domain("square", 32)
    assert dom.n_interior == 31 * 31
    assert dom.n_boundary == 4 * 32  # lattice boundary including corners
    assert dom.surface_weights.sum() == pytest.approx(4.0)


def test_disk_delta_is_exact_radial_distance():
    dom = build_domain("disk", 32)
    exact = 1.0 - np.sqrt(np.sum(dom.interior_xy**2, axis=1))
    assert np.max(np.abs(dom.delta - exact)) < dom.h  # exact by construction
    assert np.max(np.abs(dom.delta - exact)) == 0.0


def test_disk_surface_weights_sum_to_circumference():
    dom = build_domain("disk", 32)
    assert dom.surface_weights.sum() == pytest.approx(2.0 * np.pi)


def test_rejects_coarse_grids():
    with pytest.raises(ValueError):
        build_domain("interval", 7)
    with pytest.raises(ValueError):
        build_domain("torus", 16)


def test_delta_positive_and_reference_node_deep():
    for shape, n in (("interval", 16), ("square", 16), ("disk", 16)):
        dom = build_domain(shape, n)
        assert np.all(dom.delta > 0)
        assert dom.delta[dom.reference_node] >= 0.5 * dom.inradius


def test_delta_vs_nearest_boundary_node():
    # per-node: distance to the nearest boundary node is within [delta, delta+h]
    for shape in ("interval", "square", "disk"):
        dom = build_domain(shape, 24)
        diffs = dom.interior_xy[:, None, :] - dom.boundary_xy[None, :, :]
        nearest = np.min(np.sqrt(np.sum(diffs**2, axis=2)), axis=1)
        assert np.all(nearest >= dom.delta - 1e-12)
        assert np.all(nearest <= dom.delta + dom.h * (1 + 1e-9))


def test_interval_strip_is_two_unit_weight_nodes():
    dom = build_domain("interval", 16)
    strip = extract_strip(dom, 0.25)
    assert len(strip.node_indices) == 2
    assert np.allclose(strip.weights, 1.0)
    assert np.allclose(np.abs(dom.delta[strip.node_indices] - 0.25), 0.0, atol=dom.h)


def test_disk_strip_weight_matches_level_set_length():
    dom = build_domain("disk", 64)
    strip = extract_strip(dom, 0.25)
    target = 2.0 * np.pi * 0.75
    assert abs(strip.total_weight - target) / target < 0.10


def test_strip_out_of_range_is_error():
    dom = build_domain("disk", 64)
    with pytest.raises(ValueError):
        extract_strip(dom, 0.9 * dom.inradius)
    with pytest.raises(ValueError):
        extract_strip(dom, 0.5 * dom.h)


def test_strips_at_separated_levels_are_disjoint():
    dom = build_domain("square", 48)
    s1 = extract_strip(dom, 0.10)
    s2 = extract_strip(dom, 0.10 + 3 * dom.h)
    assert not set(s1.node_indices) & set(s2.node_indices)


def test_exhaustion_interval_nesting():
    dom = build_domain("interval", 64)
    ex = build_exhaustion(dom, 3)
    sizes = [len(lv.nodes) for lv in ex.levels]
    assert len(ex.levels) == 3
    assert sizes == sorted(sizes)
    for a, b in zip(ex.levels[:-1], ex.levels[1:]):
        assert set(a.nodes) < set(b.nodes)


def test_exhaustion_exhausts_and_boundaries_interior():
    dom = build_domain("disk", 64)
    ex = build_exhaustion(dom, 4)
    sizes = [len(lv.nodes) for lv in ex.levels]
    assert all(a < b for a, b in zip(sizes, sizes[1:]))
    assert len(ex.levels[-1].nodes) == dom.n_interior
    assert ex.levels[-1].uses_true_boundary
    for lv in ex.levels[:-1]:
        assert not lv.uses_true_boundary
        assert np.all(dom.delta[lv.dirichlet_nodes] > 0)
        assert lv.dirichlet_nodes.size > 0
        assert not set(lv.dirichlet_nodes) & set(lv.nodes)
    assert dom.reference_node in ex.levels[0].nodes


def test_exhaustion_needs_two_levels():
    dom = build_domain("interval", 64)
    with pytest.raises(ValueError):
        build_exhaustion(dom, 1)
