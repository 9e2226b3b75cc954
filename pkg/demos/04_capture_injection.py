"""Capture injection and output comparison for functionality testing.

The equivalence check needs the translated program to dump its result
array. A capture snippet is injected right after the single
synchronization anchor, wrapped in marker comments so it can be removed
again byte-for-byte, and the dumped CSVs are compared elementwise.
"""
import textwrap

from kernelport.functest import (
    CompareRule,
    InjectionSpec,
    compare_outputs,
    inject_capture,
    strip_injection,
)

SOURCE = textwrap.dedent("""\
    int main(int argc, char** argv) {
        run_kernel(n, reps);
        Kokkos::fence();
        printf("%.6f\\n", elapsed);
    }
""")

spec = InjectionSpec(
    kernel_id="CG",
    anchor="Kokkos::fence();",
    capture_snippet='dump_csv("capture.csv", x, n);',
    comment_prefix="//",
)

instrumented = inject_capture(SOURCE, spec)
print("instrumented source:")
print(instrumented)

assert strip_injection(instrumented) == SOURCE
print("strip(inject(source)) == source: byte-identical round trip\n")

ok, diff = compare_outputs("1.0\n2.0\n3.0", "1.0\n2.0000004\n3.0", 1e-6)
print(f"within tolerance:  pass={ok} max_abs_diff={diff:.1e}")
ok, diff = compare_outputs("1.0\n2.0\n3.0", "1.0\n2.01\n3.0", 1e-6)
print(f"outside tolerance: pass={ok} max_abs_diff={diff:.1e}")

ok, mx = compare_outputs("0.0\n0.7\n0.0", "", 1e-6, CompareRule.NONZERO)
print(f"pseudo-random kernels use the non-zero rule instead: pass={ok} max={mx}")
