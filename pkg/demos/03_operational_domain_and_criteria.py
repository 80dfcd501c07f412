"""Write down where a model must work and what "good uncertainty" means there.

An operational domain bounds the semantic parameters (here: how far the
inputs are shifted and how noisy the data is) and lists example scenarios
inside, outside and at the edge. Acceptance criteria then pair a data
selection with a measure and a threshold.
"""

from uqtest import OddSpec, Region, check_consistency, contains, parse_criteria

odd = OddSpec.from_dict({
    "dimensions": [{"name": "shift", "low": -0.5, "high": 0.5},
                   {"name": "noise_scale", "low": 0.5, "high": 1.5},
                   {"name": "sensor", "values": ["lidar", "camera"]}],
    "epsilon": 0.05,
    "performance": {"shift": [-0.25, 0.25], "sensor": ["camera"]},
    "in_domain": [{"shift": 0.0, "noise_scale": 1.0, "sensor": "camera"}],
    "out_of_domain": [{"shift": 3.0, "noise_scale": 1.0, "sensor": "camera"},
                      {"shift": 0.0, "noise_scale": 1.0, "sensor": "radar"}],
    "borderline": [{"shift": 0.48, "noise_scale": 1.0, "sensor": "lidar"}],
})

for point in ({"shift": 0.1, "noise_scale": 1.0, "sensor": "lidar"},
              {"shift": 0.49, "noise_scale": 1.0, "sensor": "lidar"},
              {"shift": 0.1, "noise_scale": 2.0, "sensor": "lidar"}):
    print(f"{point} -> {contains(odd, point).value}")

print("\nconsistency violations:", check_consistency(odd) or "none")

broken = OddSpec.from_dict({**odd.to_dict(),
                            "out_of_domain": [{"shift": 0.1, "noise_scale": 1.0, "sensor": "camera"}],
                            "performance": {"shift": [-1.0, 0.25]}})
print("after planting two mistakes:")
for v in check_consistency(broken):
    print(f"  [{v.kind}] {v.subject}: {v.detail}")

criteria = parse_criteria({
    "criteria": [
        {"id": "calibration", "category": "calibration", "data": "test", "measure": "ece_regression",
         "threshold": 0.05, "test_depth": ["global", "subset_pointwise"]},
        {"id": "tail", "category": "application_specific", "data": "test",
         "measure": {"name": "etl", "params": {"alpha": 0.95, "score": "abs_normalized_residual"}},
         "threshold": 3.0},
        {"id": "explainable", "category": "argumentatively_substantiated", "measure": "manual",
         "asserted": True, "note": "design review sign-off"},
    ],
    "data": {"test": {"kind": "full_odd", "generator": "canonical", "n": 1000}},
})
print()
for c in criteria:
    rule = "asserted by review" if c.manual else f"{c.measure.name} {c.comparator} {c.threshold}"
    print(f"{c.id:12s} [{c.category.value}] {rule}; levels {[lv.value for lv in c.test_depth]}")

assert contains(odd, {"shift": 0.0, "noise_scale": 1.0, "sensor": "camera"}) is Region.IN
