"""Closed-form kernel work models, iteration scaling, and the roofline.

Walks the analytical side of the toolkit: exact flop counts per kernel,
how program iterations shrink as problem size grows, GFLOPS from a
measured runtime, and roofline classification of measured points.
"""
from kernelport.perfmodel import (
    DEFAULT_ITERATION_POLICIES,
    flops,
    gflops,
    roofline_point,
    scaled_iterations,
)

print("exact flop counts (no floating-point rounding):")
for kernel, n, r in [("CG", 1000, 10), ("DGEMM", 1024, 2),
                     ("MG", 32, 10), ("FT", 32, 10)]:
    # FT carries an exact rational log2 factor; these points are integral
    print(f"  {kernel:6s} n={n:<6d} r={r:<3d} -> {int(flops(kernel, n, r)):,}")

print("\niteration scaling over the DGEMM sweep (fixed at the smallest size,")
print("then clamped to the floor so large sizes stay affordable):")
policy = DEFAULT_ITERATION_POLICIES["DGEMM"]
for n in (1024, 2048, 4096, 8192):
    print(f"  n={n:<5d} -> {scaled_iterations(policy, n, 1024, 8192)} program iterations")

print("\nGFLOPS from a measured runtime:")
rate = gflops("DGEMM", 1024, 1, 2, 2.0)
print(f"  DGEMM n=1024, 2 repetitions in 2.0 s -> {rate:.4f} GFLOPS")

print("\nroofline classification (peak 7.5e12 FLOP/s, ridge 4.8 FLOP/byte):")
measured = [
    ("CG", 1.36e11, 0.12),
    ("EP", 3.93e12, 35301.0),
    ("MG", 6.99e11, 0.58),
    ("FT", 1.48e11, 1.52),
    ("DGEMM", 1.88e12, 15.17),
]
for kernel, achieved, ai in measured:
    p = roofline_point(achieved, ai, 7.5e12, 4.8)
    print(f"  {kernel:6s} ai={ai:<8g} {p.percent_of_peak:5.1f}% of peak  {p.bound_class.value}")
