"""Combine individual test verdicts into a criterion verdict.

Trees use three-valued logic. A test that errored or was skipped counts as
"inconclusive": it can block a pass but never produce one.
"""

from uqtest import evaluate_tree, overall, parse_tree

tree = parse_tree({"and": [
    "calibration/global",
    {"k_of_n": {"k": 2, "children": ["tail/curated", "tail/search", "tail/quantile"]}},
    {"weighted": {"weights": [2, 1], "threshold": 0.6, "children": ["fair/day_night", "fair/sensor"]}},
]})

scenarios = {
    "all green": dict.fromkeys(["calibration/global", "tail/curated", "tail/search", "tail/quantile",
                                "fair/day_night", "fair/sensor"], "pass"),
    "one tail test fails": {"calibration/global": "pass", "tail/curated": "pass", "tail/search": "fail",
                            "tail/quantile": "pass", "fair/day_night": "pass", "fair/sensor": "fail"},
    "search crashed": {"calibration/global": "pass", "tail/curated": "pass", "tail/search": "error",
                       "tail/quantile": "fail", "fair/day_night": "pass", "fair/sensor": "pass"},
}
for name, results in scenarios.items():
    verdict, notes = evaluate_tree(tree, results)
    print(f"{name}: {verdict.value}")
    for n in notes:
        if not n["node"].startswith("leaf:"):
            print(f"    node {n['path']:6s} {n['node']:10s} {n['verdict']}")

print("\nstrict policy over criteria:", overall({"calibration": "pass", "tail": "inconclusive"}).value)
print("custom policy (either tail or calibration):",
      overall({"calibration": "pass", "tail": "fail"}, {"or": ["calibration", "tail"]}).value)
