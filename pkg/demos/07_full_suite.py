"""Run the shipped demo suite end to end and render its report.

This is what ``uqtest run --config configs/demo.json`` does: technical
checks first, then global, subset and complementary tests, then verdicts
aggregated per criterion and overall.
"""

from pathlib import Path

from uqtest import run_suite
from uqtest.report import build_report, render_markdown
from uqtest.suite import load_suite_file

config = Path(__file__).resolve().parent.parent / "configs" / "demo.json"
run = run_suite(load_suite_file(config), jobs=4)
report = build_report(run)

for r in report["results"]:
    value = r["measured"].get("value", "")
    value = f"{value:.4g}" if isinstance(value, float) else value
    print(f"{r['verdict']:8s} {r['level']:17s} {r['test_id']:32s} {value}")
print()
for c in report["criteria"]:
    print(f"criterion {c['id']:18s} {c['verdict']}")
print(f"technical gate: {report['technical_gate']['verdict']}")
print(f"overall: {report['overall']}")

markdown, warnings = render_markdown(report)
print(f"\nmarkdown report: {len(markdown.splitlines())} lines, {len(warnings)} integrity warnings")
