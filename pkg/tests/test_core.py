import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holdersgd.core import (
    AggregateTrace,
    Checkpoint,
    Dataset,
    DimensionMismatchError,
    InvalidDimensionError,
    PLSpec,
    Sample,
    SmoothnessSpec,
    Trace,
    geometric_checkpoints,
    index_stream,
    read_dataset_csv,
    read_trace_csv,
    resolve_checkpoints,
    write_dataset_csv,
    zero_param,
)

# Pure-python Philox4x64-10 (Salmon et al. constants) used as an independent oracle.
_M0, _M1 = 0xD2E7470EE14C6C93, 0xCA5A826395121157
_W0, _W1 = 0x9E3779B97F4A7C15, 0xBB67AE8584CAA73B
_MASK = (1 << 64) - 1


def philox4x64_10(ctr, key):
    c, k = list(ctr), list(key)
    for r in range(10):
        if r:
            k = [(k[0] + _W0) & _MASK, (k[1] + _W1) & _MASK]
        p0, p1 = _M0 * c[0], _M1 * c[2]
        c = [(p1 >> 64) ^ c[1] ^ k[0], p1 & _MASK, (p0 >> 64) ^ c[3] ^ k[1], p0 & _MASK]
    return c


def reference_indices(seed, n, T):
    words = []
    block = 1
    while len(words) < T:
        words.extend(philox4x64_10([block, 0, 0, 0], [seed, 0]))
        block += 1
    return [(w * n) >> 64 for w in words[:T]]


def test_philox_known_answer_vectors():
    # published known-answer vectors for Philox4x64-10
    assert philox4x64_10([0, 0, 0, 0], [0, 0]) == [
        0x16554D9ECA36314C, 0xDB20FE9D672D0FDC, 0xD7E772CEE186176B, 0x7E68B68AEC7BA23B]
    assert philox4x64_10([_MASK] * 4, [_MASK] * 2) == [
        0x87B092C3013FE90B, 0x438C3C67BE8D0224, 0x9CC7D7C69CD777B6, 0xA09CAEBF594F0BA0]


def test_index_stream_frozen_words():
    raw = np.random.Philox(key=0).random_raw(4)
    assert [int(v) for v in raw] == [0x02F4BA6408E4D89B, 0x3DD62B0B9CA8C5B2, 0x1C8667A55D902E79, 0x907D7A052FD5B4DC]


@pytest.mark.parametrize("seed,n", [(0, 7), (1, 100), (12345, 3), (2**40 + 3, 1000), (5, 1)])
def test_index_stream_matches_reference(seed, n):
    assert index_stream(seed, n, 37).tolist() == reference_indices(seed, n, 37)


def test_index_stream_large_n_exact():
    n = 2**32 - 5
    assert index_stream(9, n, 16).tolist() == reference_indices(9, n, 16)


def test_index_stream_reproducible_and_in_range():
    a = index_stream(3, 50, 1000)
    assert np.array_equal(a, index_stream(3, 50, 1000))
    assert a.min() >= 0 and a.max() < 50
    assert not np.array_equal(a, index_stream(4, 50, 1000))
    # prefix property: longer streams extend shorter ones
    assert np.array_equal(index_stream(3, 50, 10), a[:10])


def test_index_stream_roughly_uniform():
    counts = np.bincount(index_stream(0, 10, 100_000), minlength=10)
    assert np.all(np.abs(counts - 10_000) < 500)


def test_zero_param():
    assert zero_param(3).tolist() == [0.0, 0.0, 0.0]
    assert zero_param(1).tolist() == [0.0]
    with pytest.raises(InvalidDimensionError):
        zero_param(0)


def test_sample_and_dataset_validation():
    with pytest.raises(ValueError):
        Sample(np.array([1.0, np.nan]), 0.0)
    with pytest.raises(ValueError):
        Sample(np.array([1.0]), np.inf)
    with pytest.raises((DimensionMismatchError, ValueError)):
        Dataset.from_samples([Sample(np.ones(2), 0.0), Sample(np.ones(3), 0.0)])
    ds = Dataset.from_samples([Sample(np.array([1.0, 2.0]), 3.0), Sample(np.array([0.0, 1.0]), -1.0)])
    assert (ds.n, ds.d) == (2, 2)
    with pytest.raises(ValueError):
        ds.X[0, 0] = 5.0


def test_dataset_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.standard_normal((6, 3)), rng.standard_normal(6))
    write_dataset_csv(ds, tmp_path / "d.csv")
    assert read_dataset_csv(tmp_path / "d.csv") == ds


def test_dataset_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x_1,x_2,y\n1,2,3\n1,2\n")
    with pytest.raises(ValueError, match=":3:"):
        read_dataset_csv(p)
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        read_dataset_csv(p)


def test_certificate_validation():
    with pytest.raises(ValueError):
        SmoothnessSpec(0.0, 1.0)
    with pytest.raises(ValueError):
        SmoothnessSpec(1.5, 1.0)
    with pytest.raises(ValueError):
        SmoothnessSpec(1.0, 0.0)
    with pytest.raises(ValueError):
        PLSpec(0.0, 0.0)
    assert SmoothnessSpec(1.0, 2.0).to_dict()["provenance"] == "analytic"


def test_geometric_checkpoints():
    assert geometric_checkpoints(1) == [1]
    assert geometric_checkpoints(10) == [1, 2, 4, 8, 10]
    assert geometric_checkpoints(16) == [1, 2, 4, 8, 16]
    assert resolve_checkpoints(5, "all") == [1, 2, 3, 4, 5]
    assert resolve_checkpoints(10, [3, 7, 20]) == [1, 3, 7]
    assert resolve_checkpoints(10, "geometric2", (9,)) == [1, 2, 4, 8, 9, 10]


@given(st.integers(1, 10**7))
def test_geometric_checkpoints_property(T):
    cps = geometric_checkpoints(T)
    assert cps[0] == 1 and cps[-1] == T
    assert all(b > a for a, b in zip(cps, cps[1:]))
    assert len(cps) <= T.bit_length() + 1


def _trace(seed=0):
    return Trace(seed, (Checkpoint(1, 2.0, 3.0, 0.5), Checkpoint(2, 1.0, 0.1 + 0.2, 0.25)), False, np.zeros(2))


def test_trace_invariants():
    with pytest.raises(ValueError):
        Trace(0, (Checkpoint(2, 1.0, 1.0, 1.0),), False, np.zeros(1))
    with pytest.raises(ValueError):
        Trace(0, (Checkpoint(1, 1.0, 1.0, 1.0), Checkpoint(1, 1.0, 1.0, 1.0)), False, np.zeros(1))
    with pytest.raises(ValueError):
        Trace(0, (Checkpoint(1, np.nan, 1.0, 1.0),), False, np.zeros(1))
    Trace(0, (Checkpoint(1, np.inf, 1.0, 1.0),), True, np.zeros(1))


def test_trace_csv_roundtrip_exact(tmp_path):
    tr = _trace()
    text = tr.to_csv()
    assert text.splitlines()[0] == "t,risk,grad_norm_sq,eta"
    tr.write_csv(tmp_path / "t.csv")
    back = read_trace_csv(tmp_path / "t.csv")
    assert np.array_equal(back.grad_norm_sq, tr.grad_norm_sq)
    assert back.grad_norm_sq[1] == 0.1 + 0.2


def test_aggregate_json_roundtrip(tmp_path):
    agg = AggregateTrace(np.array([1, 2, 4]), np.array([3.0, 2.0, 1.0]), np.array([1.0, 2.0, 0.5]),
                         np.array([1.0, 1.0, 0.5]), 3, (7,), eta=np.array([1.0, 0.5, 0.25]),
                         eta_sum=np.array([1.0, 1.5, 2.08]), optimum_value=0.5)
    agg.write_json(tmp_path / "a.json")
    back = AggregateTrace.read_json(tmp_path / "a.json")
    assert back.to_dict() == agg.to_dict()
    assert np.allclose(back.mean_suboptimality, [2.5, 1.5, 0.5])
    raw = json.loads((tmp_path / "a.json").read_text())
    assert raw["diverged_seeds"] == [7]


def test_aggregate_rejects_increasing_min_prefix():
    with pytest.raises(ValueError):
        AggregateTrace(np.array([1, 2]), np.ones(2), np.ones(2), np.array([1.0, 2.0]), 1, ())


@settings(max_examples=50)
@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=20))
def test_min_prefix_running_min(values):
    g = np.array(values)
    t = np.arange(1, len(values) + 1)
    agg = AggregateTrace(t, g, g, np.minimum.accumulate(g), 1, ())
    assert np.all(np.diff(agg.min_prefix) <= 0)
