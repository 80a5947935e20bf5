import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elasticsched.gpu import GpuSpec, get_preset
from elasticsched.planner import (CriticalProfile, ElasticCandidate, OverheadParams, enumerate_candidates,
                                  feasible, format_plan, keep_count, oscore, parse_plan, rank_key, score_all,
                                  shrink_design_space, slicing_plan, wiscore)
from elasticsched.workload import KernelSpec
from oracles import feasible_ref, oscore_ref, slicing_plan_ref, wiscore_ref

G8 = GpuSpec("g8", n_sm=8, l_threads=1024)
OV = dict(launch_overhead_per_shard=15e-6, baseline_launch=15e-6, max_blk_overhead=350e-6,
          max_pt_overhead=350e-6)


def cand(g, b, M=64):
    return ElasticCandidate.for_kernel(M, g, b)


def test_slicing_plan_examples():
    assert slicing_plan(12) == (3, 6, 12)
    assert slicing_plan(1) == (1,)
    assert slicing_plan(16) == (1, 2, 4, 8, 16)
    with pytest.raises(ValueError):
        slicing_plan(0)


@given(st.integers(1, 1 << 20))
def test_slicing_plan_matches_oracle_and_doubles(M):
    plan = slicing_plan(M)
    assert plan == slicing_plan_ref(M)
    assert plan[-1] == M
    assert all(M % s == 0 for s in plan)
    assert all(b == 2 * a for a, b in zip(plan, plan[1:]))


def test_feasible_examples():
    crit = CriticalProfile(10, 256)
    assert feasible(cand(6, 32), crit, G8)
    assert not feasible(cand(7, 32), crit, G8)
    saturated = CriticalProfile(1, 1024)
    assert not any(feasible(cand(g, b), saturated, G8) for g in (1, 2, 4) for b in (32, 64))
    full = CriticalProfile(16, 32)
    assert feasible(cand(8, 32), full, G8) and not feasible(cand(9, 32, M=72), full, G8)


def test_wiscore_examples():
    assert wiscore(cand(2, 256), CriticalProfile(10, 256), G8) == pytest.approx(0.25)
    assert wiscore(cand(6, 768), CriticalProfile(2, 256), G8) == 1.0
    with pytest.raises(ValueError):
        wiscore(cand(7, 32), CriticalProfile(10, 256), G8)
    with pytest.raises(ValueError):
        ElasticCandidate(0, 32, 1)


def test_oscore_examples():
    assert oscore(cand(64, 32, M=64), **OV) == 1
    assert oscore(cand(1, 32, M=64), **OV) == 0  # 64 shards, 945 us extra
    assert oscore(cand(16, 32, M=64), **OV) == 1  # 4 shards, 45 us extra
    with pytest.raises(ValueError):
        oscore(cand(1, 32), -1.0, 0.0, 1.0, 1.0)


def test_oscore_persistent_thread_channel():
    c = cand(16, 32, M=64)
    assert oscore(c, **OV, pt_overhead_per_shard=100e-6) == 0
    assert oscore(c, **OV, pt_overhead_per_shard=50e-6) == 1


def test_shrink_m16_b256():
    k = KernelSpec("k", 16, 256, 1.0)
    gpu = get_preset("rtx2060-like")
    crit = [CriticalProfile(4, 256)]
    assert len(enumerate_candidates(k, gpu)) == 40
    kept = shrink_design_space(k, crit, gpu)
    assert len(kept) == 8
    assert kept == sorted(kept, key=rank_key)
    assert kept == shrink_design_space(k, crit, gpu)


def test_shrink_single_feasible_candidate():
    k = KernelSpec("k", 1, 32, 1.0)
    kept = shrink_design_space(k, [CriticalProfile(1, 512)], G8)
    assert len(kept) == 1 and kept[0].candidate == ElasticCandidate(1, 32, 1)


def test_shrink_fallback_when_saturated():
    k = KernelSpec("k", 16, 256, 1.0)
    kept = shrink_design_space(k, [CriticalProfile(1, 1024)], G8)
    assert len(kept) == 1 and kept[0].fallback and not kept[0].feasible
    assert kept[0].candidate == ElasticCandidate(16, 256, 1)


def test_worst_case_feasibility_mean_scoring():
    k = KernelSpec("k", 8, 64, 1.0)
    profiles = [CriticalProfile(2, 256), CriticalProfile(5, 512)]
    for sc in score_all(k, profiles, G8):
        c = sc.candidate
        assert sc.feasible == feasible(c, CriticalProfile(5, 512), G8)
        ws = [wiscore(c, p, G8) if feasible(c, p, G8) else 0.0 for p in profiles]
        assert sc.wiscore == pytest.approx(sum(ws) / 2)


def test_keep_count():
    assert keep_count(40) == 8
    assert keep_count(1) == 1
    assert keep_count(6) == 2


def test_plan_text_round_trip():
    k = KernelSpec("k", 16, 128, 1.0)
    kept = shrink_design_space(k, [CriticalProfile(3, 128)], G8)
    text = format_plan(kept)
    back = parse_plan(text, 16)
    assert [b.candidate for b in back] == [s.candidate for s in kept]
    assert [b.oscore for b in back] == [s.oscore for s in kept]


profiles = st.builds(CriticalProfile, st.integers(1, 100), st.integers(1, 1024))


@settings(max_examples=300)
@given(st.integers(1, 64), st.integers(1, 1024), profiles, st.integers(1, 64))
def test_feasible_and_wiscore_match_oracle(g, b, p, n_shards):
    c = ElasticCandidate(g, b, n_shards)
    f = feasible(c, p, G8)
    assert f == feasible_ref(g, b, p.n_blk_rt, p.s_blk_rt, G8.n_sm, G8.l_threads)
    if f:
        w = wiscore(c, p, G8)
        assert 0.0 <= w <= 1.0
        assert w == pytest.approx(wiscore_ref(g, b, p.n_blk_rt, p.s_blk_rt, G8.n_sm, G8.l_threads), rel=1e-12)


@settings(max_examples=200)
@given(st.integers(1, 8), st.integers(1, 1024), profiles, st.integers(0, 7), st.integers(0, 1023))
def test_feasibility_monotone(g, b, p, dg, db):
    c = ElasticCandidate(g, b, 1)
    if feasible(c, p, G8):
        smaller = ElasticCandidate(max(1, g - dg), max(1, b - db), 1)
        assert feasible(smaller, p, G8)


@settings(max_examples=200)
@given(st.integers(1, 200), st.floats(0, 50e-6), st.floats(0, 50e-6), st.floats(0, 1e-3))
def test_oscore_matches_oracle(n, per, base, budget):
    c = ElasticCandidate(1, 32, n)
    assert oscore(c, per, base, budget, budget) == oscore_ref(n, per, base, budget)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 64), st.sampled_from([32, 64, 96, 128, 256]), st.lists(profiles, min_size=1, max_size=3))
def test_shrink_properties(M, B, ps):
    k = KernelSpec("k", M, B, 1.0)
    kept = shrink_design_space(k, ps, G8)
    kept2 = shrink_design_space(k, ps, G8)
    assert kept == kept2
    n_raw = len(enumerate_candidates(k, G8))
    if kept[0].fallback:
        return
    assert 1 <= len(kept) <= keep_count(n_raw)
    assert all(s.feasible for s in kept)
    assert all(0.0 <= s.combined <= 1.0 for s in kept)
    assert all(s.combined == 0.0 for s in kept if s.oscore == 0)
    keys = [rank_key(s) for s in kept]
    assert keys == sorted(keys)
    assert all(s.candidate.shard_grid_size in slicing_plan(M) for s in kept)
