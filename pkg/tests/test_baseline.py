import itertools

import pytest

from treewatt.baseline import (
    BaselineConfig,
    TraceSample,
    load_trace,
    save_trace,
    utilization_energy,
)


def _sample(**over):
    base = dict(process="py", p_dram=0.0, p_cpu=0.0, p_gpu=0.0,
                e_dram=0.0, e_cpu=0.0, e_gpu=0.0)
    base.update(over)
    return TraceSample(**base)


def test_gpu_only_sample():
    trace = [_sample(p_gpu=1.0, e_gpu=10.0)]
    assert utilization_energy(trace, BaselineConfig()) == 10.0


def test_linear_in_pue():
    trace = [_sample(p_gpu=1.0, e_gpu=10.0)]
    assert utilization_energy(trace, BaselineConfig(pue=2.0)) == 20.0


def test_mixed_resources():
    trace = [_sample(p_cpu=0.5, e_cpu=4.0, p_dram=0.5, e_dram=2.0)]
    assert utilization_energy(trace) == pytest.approx(3.0, rel=1e-12)


def test_zero_trace_and_order_invariance():
    assert utilization_energy([]) == 0.0
    samples = [_sample(process=f"p{i}", p_cpu=0.1 * i, e_cpu=float(i)) for i in range(5)]
    base = utilization_energy(samples)
    for perm in itertools.permutations(samples):
        assert utilization_energy(list(perm)) == pytest.approx(base, rel=1e-12)


def test_fraction_and_energy_validation():
    with pytest.raises(ValueError, match="p_gpu"):
        utilization_energy([_sample(p_gpu=1.5)])
    with pytest.raises(ValueError, match="e_cpu"):
        utilization_energy([_sample(e_cpu=-1.0)])
    with pytest.raises(ValueError, match="PUE"):
        BaselineConfig(pue=0.9)


def test_csv_round_trip(tmp_path):
    samples = [_sample(process="a", p_gpu=0.25, e_gpu=8.0),
               _sample(process="b", p_cpu=0.5, e_cpu=2.0, p_dram=0.1, e_dram=1.0)]
    path = tmp_path / "trace.csv"
    save_trace(samples, path)
    loaded = load_trace(path)
    assert loaded == samples
    assert utilization_energy(loaded) == pytest.approx(2.0 + 1.0 + 0.1, rel=1e-12)


def test_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("process,p_dram\npy,0.5\n")
    with pytest.raises(ValueError, match="missing columns"):
        load_trace(path)
