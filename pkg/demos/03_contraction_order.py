"""Choosing how to contract the frequency-domain SSM product.

Either project the input onto the states first (cost ~ BNF(I+J)) or build the
J x I kernel bank first (cost ~ JIF(B+N)). The planner picks by comparing
1/B + 1/N against 1/I + 1/J; both orders give the same numbers.

The last case is an exact tie of the leading-order costs. Ties go to
input-project-first (it never materializes the kernel bank) even though the
lower-order terms make kernel-first marginally cheaper there.
"""

import numpy as np

from ssmdenoise import ContractionDims, Order, fft_convolve, plan_contraction
from ssmdenoise.planner import contraction_costs
from ssmdenoise.ssm import discretize_zoh, init_ssm

for B, N, I, J, F in [(1, 256, 16, 16, 1024), (1024, 1024, 1, 1, 64), (8, 8, 8, 8, 64)]:
    d = ContractionDims(B=B, I=I, J=J, N=N, F=F)
    c1, c2 = contraction_costs(d)
    print(f"B={B:<5} N={N:<5} I={I:<3} J={J:<3} F={F:<5} -> {plan_contraction(d).variant.value:<20}"
          f" (input-first {c1:,}, kernel-first {c2:,})")

layer = discretize_zoh(init_ssm(4, 3, 32, seed=1))
u = np.random.default_rng(1).normal(size=(2, 4, 1000))
a = fft_convolve(u, layer, order=Order.INPUT_PROJECT_FIRST)
b = fft_convolve(u, layer, order=Order.KERNEL_FIRST)
print(f"\nmax difference between orders: {np.abs(a - b).max():.2e}")
