import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coordsim import run_random_events
from elasticsched.coordinator import (ACTUAL, DISPATCHED, RETIRED, VIRTUAL, Coordinator, Event, build_tree)
from elasticsched.gpu import GpuSpec
from elasticsched.planner import CriticalProfile, ElasticCandidate, ScoredCandidate
from elasticsched.workload import KernelSpec

GPU = GpuSpec("g8", n_sm=8, l_threads=1024)


def cands(M, pairs):
    """ScoredCandidates in the given order (first is best)."""
    n = len(pairs)
    return [ScoredCandidate(ElasticCandidate.for_kernel(M, g, b), (n - i) / n, 1, (n - i) / n)
            for i, (g, b) in enumerate(pairs)]


def kernel(M, B=256, name="k"):
    return KernelSpec(name, M, B, 1.0)


def test_build_tree_depth_and_leaf():
    t = build_tree(kernel(16), cands(16, [(4, 256), (8, 256), (16, 256)]))
    assert t.leaf_size == 4 and t.depth == 3
    assert t.admissible == [4, 8, 16]
    assert t.root.status == VIRTUAL


def test_build_tree_single_block():
    t = build_tree(kernel(1), cands(1, [(1, 64)]))
    assert list(t.leaves()) == [t.root] and t.depth == 1


def test_root_only_tree_never_splits():
    t = build_tree(kernel(16), cands(16, [(16, 128)]))
    assert t.depth == 1
    with pytest.raises(ValueError):
        t.take(8, 128)
    node = t.take(16, 128)
    assert node is t.root


def test_build_tree_rejects_empty_candidates():
    with pytest.raises(ValueError):
        build_tree(kernel(4), [])


def arrive(c, key, k, cs, t=0.0):
    return c.on_event(Event("normal_arrival", t, job=(key, k, cs)))


def test_no_critical_dispatches_whole_root():
    c = Coordinator(GPU)
    k = kernel(16)
    d = arrive(c, "a", k, cands(16, [(4, 128), (8, 128)]))
    assert [(s.start, s.count, s.block_size) for s in d.dispatch] == [(0, 16, 256)]


def test_leftover_one_sm_selects_one_leaf():
    c = Coordinator(GPU)
    c.on_event(Event("critical_arrival", 0.0, profile=CriticalProfile(7, 512)))
    k = kernel(16)
    d = arrive(c, "a", k, cands(16, [(8, 1024), (4, 512), (1, 512), (1, 256), (2, 256)]))
    assert len(d.dispatch) == 1
    sd = d.dispatch[0]
    assert (sd.start, sd.count) == (0, 1) and sd.block_size <= 512
    c.check()


def test_rexpansion_after_critical_retires():
    c = Coordinator(GPU)
    k = kernel(16)
    cs = cands(16, [(4, 256), (8, 256), (16, 256)])
    c.on_event(Event("critical_arrival", 0.0, profile=CriticalProfile(4, 256)))
    d = arrive(c, "a", k, cs)
    # leftover 4 SMs: one 4-block shard
    assert [(s.start, s.count) for s in d.dispatch] == [(0, 4)]
    c.launched(d.dispatch[0])
    d = c.on_event(Event("shard_retire", 1.0, shard=d.dispatch[0]))
    assert [(s.start, s.count) for s in d.dispatch] == [(4, 4)]
    c.launched(d.dispatch[0])
    d = c.on_event(Event("shard_retire", 2.0, shard=d.dispatch[0]))
    pending = d.dispatch[0]
    # critical leaves: the pending shard stays pending, the untouched half re-merges and goes at once
    d = c.on_event(Event("critical_retire", 3.0, profile=None))
    assert [(s.start, s.count, s.block_size) for s in d.dispatch] == [(12, 4, 256)]
    c.launched(pending)
    c.launched(d.dispatch[0])
    c.check()
    tree = c.queue[0].tree
    assert not tree.frontier()
    assert tree.check()[RETIRED] == 8


def test_critical_arrival_shrinks_pending_shard():
    c = Coordinator(GPU)
    k = kernel(16)
    cs = cands(16, [(16, 256), (8, 256), (4, 256), (2, 256)])
    d = arrive(c, "a", k, cs)
    big = d.dispatch[0]
    assert big.count == 16
    d = c.on_event(Event("critical_arrival", 0.1, profile=CriticalProfile(6, 512)))
    assert d.cancel == [big]
    assert [s.count for s in d.dispatch] == [2]  # leftover 2 SMs
    tree = c.queue[0].tree
    counts = tree.check()
    assert counts[ACTUAL] == 2 and counts[VIRTUAL] == 14
    c.check()


def test_dispatched_shards_are_not_cancelled():
    c = Coordinator(GPU)
    d = arrive(c, "a", kernel(16), cands(16, [(16, 256), (4, 256)]))
    c.launched(d.dispatch[0])
    d = c.on_event(Event("critical_arrival", 0.1, profile=CriticalProfile(1, 64)))
    assert d.cancel == [] and d.dispatch == []
    assert c.queue[0].tree.check()[DISPATCHED] == 16


def test_shard_retire_with_nothing_queued():
    c = Coordinator(GPU)
    d = arrive(c, "a", kernel(2), cands(2, [(2, 256)]))
    c.launched(d.dispatch[0])
    d = c.on_event(Event("shard_retire", 1.0, shard=d.dispatch[0]))
    assert d.completed == ["a"] and d.dispatch == []
    d = c.on_event(Event("critical_retire", 2.0, profile=None))
    assert d.dispatch == [] and d.cancel == [] and d.completed == []


def test_normal_kernels_served_fifo():
    c = Coordinator(GPU)
    c.on_event(Event("critical_arrival", 0.0, profile=CriticalProfile(7, 256)))
    d1 = arrive(c, "a", kernel(2, name="a"), cands(2, [(1, 256), (2, 256)]))
    d2 = arrive(c, "b", kernel(2, name="b"), cands(2, [(1, 256), (2, 256)]))
    assert [s.job.key for s in d1.dispatch] == ["a"]
    assert d2.dispatch == []
    order = []
    todo = list(d1.dispatch)
    while todo:
        sd = todo.pop(0)
        c.launched(sd)
        order.append(sd.job.key)
        todo.extend(c.on_event(Event("shard_retire", 1.0, shard=sd)).dispatch)
    assert order == ["a", "a", "b", "b"]


def test_unknown_event_rejected():
    with pytest.raises(ValueError):
        Coordinator(GPU).on_event(Event("preempt"))


def test_decision_log_format():
    c = Coordinator(GPU, log=True)
    arrive(c, "a", kernel(4), cands(4, [(4, 256)]), t=0.5)
    assert c.log == ["t=0.500000000 event=normal_arrival dispatched=[(0,4,256)]"]


def test_bounds_take_tightest_profile():
    c = Coordinator(GPU)
    assert c.bounds(None) is None
    assert c.bounds(CriticalProfile(3, 256)) == (5, 768)
    assert c.bounds((CriticalProfile(3, 256), CriticalProfile(6, 128))) == (2, 768)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_random_event_sequences(seed):
    run_random_events(400, seed)
