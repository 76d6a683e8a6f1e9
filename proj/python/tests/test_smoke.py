import random

import pytest

import smoothkv


def value(k, length=8):
    return (b"v%d" % k).ljust(length, b"\0")


def test_capacity_matches_cli_defaults():
    r = smoothkv.capacity(512, 1.0, 512.0)
    assert r["capacity"] > 0
    assert r["failure_prob"] <= r["delta"]
    assert r["capacity"] <= r["theoretical"]


def test_three_key_allocation():
    s = smoothkv.init_smoothing([0.5543, 0.3800, 0.0657], 2.0)
    assert s["slots"] == 6
    assert s["replicas"] == [2, 2, 1]
    assert sum(s["fake_dist"]) == pytest.approx(1.0)


def test_range_store_against_dict():
    rng = random.Random(4)
    truth = {k: value(k) for k in range(1, 801)}
    store = smoothkv.RangeStore(list(truth.items()), bucket_size=32, value_len=8, k=3, seed=5)
    for step in range(300):
        k = rng.randint(1, 800)
        if rng.random() < 0.3:
            truth[k] = value(10000 + step)
            store.insert(k, truth[k])
        elif rng.random() < 0.1:
            truth.pop(k, None)
            store.erase(k)
        else:
            l = rng.randint(1, 800)
            r = min(800, l + rng.randint(0, 20))
            want = [(x, truth[x]) for x in range(l, r + 1) if x in truth]
            assert store.query(l, r) == want
    assert store.stats()["rebuilds"] > 0


def test_reads_are_recorded_and_config_exposed():
    store = smoothkv.RangeStore([(k, value(k)) for k in range(1, 101)], bucket_size=16, value_len=8)
    store.clear_trace()
    assert store.get(50) == value(50)
    assert store.get(100) == value(100)
    assert len(store.read_labels()) > 0
    assert store.config["bucket-size"] == "16"


def test_invalid_settings_raise():
    with pytest.raises(ValueError):
        smoothkv.RangeStore([(1, value(1))], bucket_size=0)
    with pytest.raises(ValueError):
        smoothkv.RangeStore([(1, b"short")], value_len=8)
    with pytest.raises(ValueError):
        smoothkv.run_kv(workload="nope", queries=10)


def test_markov_workload_is_smoothed():
    smoothed = smoothkv.run_kv("markov", queries=20000, theta=4, seed=1)
    fifo = smoothkv.run_kv("markov", queries=20000, theta=4, release="fifo", seed=1)
    assert smoothed["slots"] == 6
    assert smoothed["transition_rsd"] < fifo["transition_rsd"]
    assert smoothed["uniformity_max_deviation"] < 0.05


def test_statistics_helpers():
    assert smoothkv.rsd([1.0, 1.0, 1.0]) == 0.0
    assert smoothkv.goodness_of_fit([250, 250, 250, 250], [0.25] * 4) > 0.99
    assert smoothkv.two_sample_chi_square([100, 900], [900, 100]) < 1e-6
