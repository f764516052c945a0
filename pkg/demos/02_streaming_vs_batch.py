"""The same network, run two ways.

Batch mode convolves every SSM layer with its full impulse response via FFT.
Streaming mode feeds 256-sample chunks through the per-sample recurrence and
emits output delayed by the network latency. After shifting by that delay the
two agree to rounding error.
"""

import numpy as np

from ssmdenoise import build_network, default_config, forward_batch, latency_samples, reset_stream, run_streaming

net = build_network(default_config(), seed=0)
delay = latency_samples(net.config)
x = np.random.default_rng(0).uniform(-1, 1, 8192)

batch = forward_batch(net, x)

state = reset_stream(net)
stream = np.concatenate([run_streaming(net, state, x[i : i + 256]) for i in range(0, x.size, 256)])

print(f"latency: {delay} samples; first {delay} streamed outputs are zero: {not stream[:delay].any()}")
gap = np.linalg.norm(stream[delay:] - batch[: x.size - delay]) / np.linalg.norm(batch[: x.size - delay])
print(f"relative l2 gap after alignment: {gap:.2e}")
