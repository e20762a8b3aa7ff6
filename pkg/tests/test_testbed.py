import pytest
from hypothesis import given
from hypothesis import strategies as st

from semloc.model import RangingEstimate, ValidationError
from semloc.ranging import NoiseModel, TraceEntry, load_scenario, run_rail_scenario
from semloc.spd import AlignmentConfig
from semloc.study import data_path
from semloc.testbed import ABOVE, NEAR, SMALL, alignment_report, bucket_for

RAIL = load_scenario(data_path("scenario_rail.json"))


def test_buckets_partition_angles():
    assert bucket_for(10, 30, 30) == ABOVE
    assert bucket_for(28, 5, 30) == NEAR
    assert bucket_for(26.99, 5, 30) == SMALL
    assert bucket_for(27.0, 5, 30) == NEAR


def _entry(d_b, d_c, true_b, true_c, samples=None):
    est = {"B": RangingEstimate("M", "B", d_b), "C": RangingEstimate("M", "C", d_c)}
    return TraceEntry(0, (0, 0, 0), {"B": true_b, "C": true_c}, est, {"B": 0, "C": 0}, samples)


def test_hand_built_report():
    trace = [
        _entry(1.9, 1.9, 2.0, 2.0),  # truth collinear, short sum
        _entry(2.0, 3.0, 2.0, 3.0),  # truth wide angles
        _entry(1.0, 1.0, 2.0, 2.0, samples={"B": [1.9, 2000.0, 0.0], "C": [1.9, 1.9, 1.9]}),
    ]
    report = alignment_report(trace, 4.0)
    assert report.total == 5 and report.removed == 2
    assert report.buckets[SMALL].samples == 2 and report.buckets[ABOVE].samples == 1
    assert report.rate(SMALL, "original", "undecidable") == 1.0
    assert report.rate(SMALL, "revised", "aligned") == 1.0
    assert report.rate(ABOVE, "original") == 1.0 and report.rate(ABOVE, "revised") == 1.0
    with pytest.raises(ValidationError):
        report.rate(NEAR, "revised")
    assert report.to_dict()["buckets"][NEAR]["original"]["success_rate"] is None


def test_missing_ground_truth():
    entry = TraceEntry(0, (0, 0, 0), {}, {}, {})
    with pytest.raises(ValidationError):
        alignment_report([entry], 4.0)


@given(st.integers(min_value=0, max_value=10_000), st.floats(min_value=5, max_value=60))
def test_bucket_counts_sum_to_kept_samples(seed, threshold):
    sc = RAIL.replace(samples_per_position=3, step_count=8)
    trace = run_rail_scenario(sc, NoiseModel(outlier_probability=0.05), seed, keep_samples=True)
    report = alignment_report(trace, sc.node_distance("B", "C"), AlignmentConfig(threshold))
    assert sum(b.samples for b in report.buckets.values()) == report.total - report.removed
    for b in report.buckets.values():
        for t in b.variants.values():
            assert t.correct + t.undecidable <= b.samples


def test_per_estimate_mode_without_samples():
    sc = RAIL.replace(samples_per_position=20)
    trace = run_rail_scenario(sc, NoiseModel.ideal(), 0)
    report = alignment_report(trace, sc.node_distance("B", "C"))
    assert report.total == len(trace)
