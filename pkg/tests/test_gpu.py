import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elasticsched.gpu import (GpuSpec, NoCapacity, SmState, can_accommodate, get_preset, select_sm,
                              with_overrides)

GPU = GpuSpec("t", n_sm=4, l_threads=1024, warp_size=32, max_warps_per_sm=32, shared_mem_per_sm=1000)


def sm_with(threads=0, shmem=0):
    sm = SmState.empty(GPU)
    if threads:
        sm.add("k", 0, threads, shmem)
    return sm


def test_presets():
    rtx = get_preset("rtx2060-like")
    xav = get_preset("xavier-like")
    assert rtx.n_sm == 34
    assert xav.n_sm == 8 and xav.l_threads == 2048 and xav.max_warps_per_sm == 64
    with pytest.raises(ValueError):
        get_preset("nope")


@pytest.mark.parametrize("field", ["n_sm", "l_threads", "warp_size", "max_warps_per_sm",
                                   "shared_mem_per_sm", "mem_bandwidth"])
def test_spec_fields_positive(field):
    with pytest.raises(ValueError):
        with_overrides(GPU, **{field: 0})


def test_l_threads_multiple_of_warp():
    with pytest.raises(ValueError):
        GpuSpec("bad", n_sm=1, l_threads=1000, warp_size=32)


def test_with_overrides_skips_none():
    g = with_overrides(GPU, n_sm=8, l_threads=None)
    assert g.n_sm == 8 and g.l_threads == GPU.l_threads


def test_can_accommodate_examples():
    assert can_accommodate(sm_with(), 64, 0, GPU)
    assert not can_accommodate(sm_with(1024), 1, 0, GPU)
    sm = sm_with(960)
    assert can_accommodate(sm, 64, 0, GPU)
    assert not can_accommodate(sm, 65, 0, GPU)


def test_can_accommodate_shared_memory():
    sm = sm_with(32, 900)
    assert can_accommodate(sm, 32, 100, GPU)
    assert not can_accommodate(sm, 32, 101, GPU)


def test_can_accommodate_rejects_empty_block():
    with pytest.raises(ValueError):
        can_accommodate(sm_with(), 0, 0, GPU)


def test_warp_slots_are_an_independent_cap():
    g = GpuSpec("w", n_sm=1, l_threads=1024, warp_size=32, max_warps_per_sm=2)
    sm = SmState.empty(g)
    sm.add("k", 0, 33)  # two warps for 33 threads
    assert sm.free_threads == 991
    assert not can_accommodate(sm, 1, 0, g)


def test_select_sm_examples():
    assert select_sm([sm_with(), sm_with()], 64, 0, GPU) == 0
    assert select_sm([sm_with(1024 - 128), sm_with(512)], 100, 0, GPU) == 1
    with pytest.raises(NoCapacity):
        select_sm([sm_with(1024), sm_with(1024)], 1, 0, GPU)


def test_remove_restores_capacity():
    sm = sm_with()
    sm.add("k", 1, 256, 10)
    sm.add("k", 2, 128)
    sm.remove("k", 1)
    sm.check()
    assert sm.free_threads == 1024 - 128 and sm.free_shared_mem == 1000
    with pytest.raises(KeyError):
        sm.remove("k", 1)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(1, 512), st.integers(0, 300)), max_size=60))
def test_residency_conservation(ops):
    sms = [SmState.empty(GPU) for _ in range(GPU.n_sm)]
    live = []
    for i, (add, threads, shmem) in enumerate(ops):
        if add or not live:
            try:
                idx = select_sm(sms, threads, shmem, GPU)
            except NoCapacity:
                assert not any(can_accommodate(s, threads, shmem, GPU) for s in sms)
                continue
            sms[idx].add("k", i, threads, shmem)
            live.append((idx, i))
        else:
            idx, bid = live.pop(0)
            sms[idx].remove("k", bid)
        for s in sms:
            s.check()
            assert s.resident_threads <= GPU.l_threads


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 1024), min_size=4, max_size=4), st.integers(1, 1024))
def test_select_sm_is_max_free_lowest_index(resident, threads):
    sms = [sm_with(r) for r in resident]
    fits = [i for i, s in enumerate(sms) if s.free_threads >= threads]
    if not fits:
        with pytest.raises(NoCapacity):
            select_sm(sms, threads, 0, GPU)
        return
    best = max(sms[i].free_threads for i in fits)
    expect = min(i for i in fits if sms[i].free_threads == best)
    assert select_sm(sms, threads, 0, GPU) == expect
    assert select_sm(sms, threads, 0, GPU) == expect
