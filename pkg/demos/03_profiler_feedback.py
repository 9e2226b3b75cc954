"""From raw profiler output to optimizer-ready feedback.

Two profiler families are supported: report-style output with OPT
advisory blocks, and counter-style JSON metric dumps screened against a
threshold rule table.
"""
import textwrap

from kernelport.profiling import (
    DiagnosticsSource,
    evaluate_thresholds,
    load_threshold_rules,
    parse_opt_points,
    synthesize_summary,
)

REPORT = textwrap.dedent("""\
    Section: Memory Workload Analysis
    ---------------- ----------- ------------
    Memory Throughput       Gbyte/s       512.31

    OPT   This kernel grid is too small to fill the available resources
          on this device. Estimated speedup: 25% if occupancy improves.

    Section: Scheduler Statistics
    OPT   The memory access pattern for loads in kernel 'main_loop'
          is not coalesced.
""")

points = parse_opt_points(REPORT)
print(f"parsed {len(points)} advisory blocks:")
for p in points:
    print(f"  loop={p.kernel_loop or '?'} speedup={p.estimated_speedup} "
          f"text={p.advisory_text[:50]}...")

summary = synthesize_summary(points, DiagnosticsSource.OPT_REPORT)
print("\noptimizer feedback from the report:")
print(summary.summary_text)

print("\ncounter-style metrics against the shipped threshold rules:")
rules = load_threshold_rules()
metrics = {"l2_cache_hit_rate": 0.31, "occupancy": 0.95}
for finding in evaluate_thresholds(metrics, rules):
    print(f"  {finding}")

print("\nan empty report degrades to a neutral prompt:")
print(f"  {synthesize_summary([], DiagnosticsSource.NONE).summary_text!r}")
