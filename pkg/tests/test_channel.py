import json

import numpy as np
import pytest

from musrldpc.channel import (NoiseSpec, Topology, TopologyError, cellfree_transmit,
                              channel_uses_for, ebn0_to_sigma2, gmac_transmit, load_topology,
                              save_topology, sum_capacity_bound, sum_rate)


def test_ebn0_conversion():
    assert ebn0_to_sigma2(0.0, 16, 8) == pytest.approx(1.0)
    # L / (2 * 5888 * 10**0.225)
    assert ebn0_to_sigma2(2.25, 766, 5888) == pytest.approx(0.038746, abs=5e-7)
    vals = [ebn0_to_sigma2(db, 64, 224) for db in np.linspace(-2, 8, 11)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_ebn0_rejects_zero_bits():
    with pytest.raises(ValueError):
        ebn0_to_sigma2(1.0, 16, 0)


def test_sum_capacity_bound():
    assert sum_capacity_bound(766, 7350, ebn0_to_sigma2(2.25, 766, 5888)) == pytest.approx(0.941760, abs=1e-5)
    assert sum_capacity_bound(10, 10, 1.0) == 0.5
    assert sum_capacity_bound(766, 7350, 1e12) == pytest.approx(0.0, abs=1e-9)


def test_sum_rate_bookkeeping():
    assert sum_rate(1, 5888, 7350) == pytest.approx(0.8011, abs=1e-4)
    assert sum_rate(2, 5888, 14720) == 0.8
    assert channel_uses_for(8, 5888, 0.82) == 57444
    assert channel_uses_for(2, 5888, 0.8) == 14720
    assert channel_uses_for(1, 224, 0.8) == 280


def test_gmac_noiseless_and_superposition():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(50)
    assert (gmac_transmit([x], 0.0, rng) == x).all()
    assert (gmac_transmit([x, -x], 0.0, rng) == 0).all()


def test_gmac_noise_variance():
    y = gmac_transmit([np.zeros(200_000), np.zeros(200_000)], 0.3, np.random.default_rng(1))
    assert y.var() == pytest.approx(0.3, rel=0.02)


def test_gmac_linear_for_fixed_noise():
    rng = np.random.default_rng(2)
    x0, x1 = rng.standard_normal((2, 30))
    y = gmac_transmit([x0, x1], 0.5, np.random.default_rng(9))
    y2 = gmac_transmit([2 * x0, x1], 0.5, np.random.default_rng(9))
    np.testing.assert_allclose(y2 - y, x0, atol=1e-12)


def test_gmac_length_mismatch():
    with pytest.raises(ValueError):
        gmac_transmit([np.zeros(3), np.zeros(4)], 1.0, np.random.default_rng(0))


def test_single_ap_cellfree_equals_gmac():
    rng = np.random.default_rng(3)
    xs = list(rng.standard_normal((3, 40)))
    topo = Topology.single_cell(3)
    a = cellfree_transmit(topo, xs, 0.7, np.random.default_rng(5))
    b = gmac_transmit(xs, 0.7, np.random.default_rng(5))
    assert len(a) == 1 and (a[0] == b).all()


def test_fig4_topology_observations():
    topo = Topology.from_edges(2, 3, [[0, 0], [0, 1], [1, 1], [1, 2]])
    assert topo.ap_users == ((0, 1), (1, 2))
    assert topo.user_aps == ((0,), (0, 1), (1,))
    xs = [np.full(5, 1.0), np.full(5, 10.0), np.full(5, 100.0)]
    y0, y1 = cellfree_transmit(topo, xs, 0.0, np.random.default_rng(0))
    assert (y0 == 11).all() and (y1 == 110).all()


def test_cellfree_independent_noise_per_ap():
    topo = Topology.from_edges(2, 1, [[0, 0], [1, 0]])
    y0, y1 = cellfree_transmit(topo, [np.zeros(50_000)], NoiseSpec(1.0, (1.0, 4.0)),
                               np.random.default_rng(1))
    assert abs(np.corrcoef(y0, y1)[0, 1]) < 0.02
    assert y1.var() == pytest.approx(4.0, rel=0.03)


def test_topology_invariants():
    with pytest.raises(TopologyError, match="no AP"):
        Topology.from_edges(1, 3, [[0, 0], [0, 1]])
    with pytest.raises(TopologyError, match="serves no users"):
        Topology.from_edges(2, 1, [[0, 0]])
    with pytest.raises(TopologyError):
        Topology.from_edges(1, 2, [[0, 0], [0, 5]])
    with pytest.raises(ValueError):
        cellfree_transmit(Topology.single_cell(2), [np.zeros(3)], 1.0, np.random.default_rng(0))


def test_topology_json_roundtrip(tmp_path):
    topo = Topology.from_edges(2, 3, [[0, 0], [0, 1], [1, 1], [1, 2]])
    path = tmp_path / "topo.json"
    save_topology(topo, path)
    assert json.loads(path.read_text()) == {"aps": 2, "users": 3,
                                            "edges": [[0, 0], [0, 1], [1, 1], [1, 2]]}
    assert load_topology(path) == topo
    path.write_text('{"aps": 2, "users": 3}')
    with pytest.raises(TopologyError):
        load_topology(path)


def test_noise_reproducible_from_seed():
    xs = [np.zeros(20)]
    a = gmac_transmit(xs, 1.0, np.random.default_rng([7, 2, 13]))
    b = gmac_transmit(xs, 1.0, np.random.default_rng([7, 2, 13]))
    assert (a == b).all()
