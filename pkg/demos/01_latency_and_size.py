"""How big and how slow is the default denoiser?

Prints the parameter count, the multiply-accumulate rate and the algorithmic
latency for three PreConv placements, then breaks the latency down per
PreConv block.
"""

from ssmdenoise import build_network, compute_latency, count_macs, count_params, default_config, latency_samples
from ssmdenoise.config import preconv_latencies

for placement in ("all", "encoder", "none"):
    cfg = default_config(preconv=placement)
    print(f"PreConv on {placement:>7}: {float(compute_latency(cfg)):6.2f} ms ({latency_samples(cfg)} samples)")

cfg = default_config()
print(f"\nparameters: {count_params(build_network(cfg)):,}")
print(f"MACs/s:     {count_macs(cfg) / 1e9:.4f} G at {cfg.sample_rate} Hz")

# each PreConv waits for one frame at the rate it runs at
print("\nlatency added by each PreConv:")
for name, ms in preconv_latencies(cfg).items():
    print(f"  {name}: {float(ms):5.2f} ms")
