import math

import numpy as np
import pytest

from ng911sim import charlotte, run_batch, run_replication
from ng911sim.metrics import HANDLED, SERVED, records_to_tsv
from ng911sim.simulator import check_conservation


def test_zero_arrival_rate_is_quiet():
    res = run_replication(charlotte(**{"arrivals.rate_per_h": 0}), 0)
    assert res.records == []
    assert set(res.event_counts) <= {"horizon", "threat-start", "threat-end"}


def test_same_seed_same_records(charlotte_sc):
    a = run_replication(charlotte_sc, 3)
    b = run_replication(charlotte_sc, 3)
    assert records_to_tsv(a.records) == records_to_tsv(b.records)


def test_different_reps_differ(charlotte_sc):
    a = run_replication(charlotte_sc, 0)
    b = run_replication(charlotte_sc, 1)
    assert records_to_tsv(a.records) != records_to_tsv(b.records)


def test_parallel_matches_serial(charlotte_sc):
    s = run_batch(charlotte_sc, 4)
    p = run_batch(charlotte_sc, 4, workers=2)
    assert [records_to_tsv(r.records) for r in s.results] == \
           [records_to_tsv(r.records) for r in p.results]


def test_arrival_count_is_poisson(charlotte_sc):
    counts = [len(run_replication(charlotte_sc, r).records) for r in range(40)]
    mean = 36 * 8
    assert abs(np.mean(counts) - mean) < 4 * math.sqrt(mean / 40)


def test_conservation_and_outcomes(charlotte_sc):
    for rep in range(5):
        res = run_replication(charlotte_sc, rep)
        check_conservation(res)
        for r in res.records:
            if r.outcome == SERVED:
                assert r.scene_arrival is not None and r.taker_end <= r.scene_arrival
            if r.outcome == HANDLED:
                assert r.scene_arrival is None


def test_home_psap_matches_subregion(charlotte_sc):
    res = run_replication(charlotte_sc, 0)
    for r in res.records:
        assert charlotte_sc.region.home_psap(r.x, r.y) == r.home_psap


def test_warmup_filters_records():
    sc = charlotte(**{"replication.warmup_s": 3600})
    batch = run_batch(sc, 2)
    for full, kept in zip(batch.results, batch.replications):
        assert all(r.arrival >= 3600 for r in kept)
        assert len(kept) == sum(r.arrival >= 3600 for r in full.records)


def test_dispatch_fraction_near_p_d(charlotte_sc):
    recs = [r for rep in range(10) for r in run_replication(charlotte_sc, rep).records]
    done = [r for r in recs if r.taker_end is not None]
    frac = sum(r.dispatch_created is not None for r in done) / len(done)
    assert abs(frac - 0.9) < 4 * math.sqrt(0.09 / len(done))


def test_modalities_follow_mix(charlotte_sc):
    recs = [r for rep in range(20) for r in run_replication(charlotte_sc, rep).records]
    n = len(recs)
    for m, p in {"voice": 0.75, "text": 0.10, "voip": 0.10, "image_video": 0.05}.items():
        k = sum(r.modality == m for r in recs)
        assert abs(k / n - p) < 4 * math.sqrt(p * (1 - p) / n)
