"""``ssmdenoise`` command line.

Exit status: 0 on success, 1 when ``verify`` finds a deviation at or above
the tolerance, 2 for usage, configuration and I/O errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import audio
from .config import compute_latency, default_config, latency_samples, load_config
from .errors import AlignmentError, AudioFormatError, SSMDenoiseError
from .network import build_network, count_macs, count_params, forward_batch
from .planner import ContractionDims, contraction_costs, plan_contraction
from .streaming import reset_stream, run_streaming, stream_signal
from .training import train_toy
from .weights import load_weights, save_weights

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
DEFAULT_CHUNK = 256


class UsageError(Exception):
    pass


def _emit(args, report, lines):
    if args.json:
        print(json.dumps(report))
    else:
        for line in lines:
            print(line)


def _config(args):
    cfg = load_config(args.config) if args.config else default_config()
    preconv = "none" if getattr(args, "no_preconv", False) else getattr(args, "preconv", None)
    return cfg.with_preconv(preconv) if preconv else cfg


# -- describe -------------------------------------------------------------------


def cmd_describe(args):
    cfg = _config(args)
    params = count_params(build_network(cfg, seed=0))
    macs = count_macs(cfg)
    latency = compute_latency(cfg)
    report = {
        "parameters": params,
        "macs_per_second": macs,
        "latency_ms": float(latency),
        "latency_samples": latency_samples(cfg),
        "sample_rate": cfg.sample_rate,
    }
    _emit(args, report, [
        f"parameters: {params} ({params / 1e6:.2f}M)",
        f"MACs/sec: {macs / 1e9:.4f}G at {cfg.sample_rate} Hz",
        f"latency: {float(latency):.2f} ms ({latency_samples(cfg)} samples)",
    ])
    return EXIT_OK


# -- process --------------------------------------------------------------------


def process_stream(net, x, chunk):
    """Latency-compensated streaming: the result lines up with ``x``."""
    delay = latency_samples(net.config)
    total = -(-(x.size + delay) // chunk) * chunk
    padded = np.zeros(total)
    padded[: x.size] = x
    state = reset_stream(net)
    out = np.concatenate([run_streaming(net, state, padded[i : i + chunk]) for i in range(0, total, chunk)])
    return out[delay : delay + x.size]


def process_batch(net, x):
    factor = net.config.total_factor
    padded = np.zeros(-(-x.size // factor) * factor)
    padded[: x.size] = x
    return forward_batch(net, padded)[: x.size]


def cmd_process(args):
    cfg = load_config(args.config) if args.config else None
    net = load_weights(args.weights, config=cfg)
    factor = net.config.total_factor
    if args.chunk <= 0 or args.chunk % factor:
        raise AlignmentError(f"--chunk {args.chunk} is not a positive multiple of {factor}")
    buf = audio.read_wav(args.input)
    if buf.sample_rate != net.config.sample_rate:
        raise AudioFormatError(f"{args.input}: {buf.sample_rate} Hz, network expects {net.config.sample_rate} Hz")
    if args.mode == "stream":
        y = process_stream(net, buf.samples, args.chunk)
    else:
        y = process_batch(net, buf.samples)
    audio.write_wav(audio.AudioBuffer(y, buf.sample_rate), args.output)
    report = {"mode": args.mode, "samples": int(y.size), "output": args.output}
    _emit(args, report, [f"wrote {y.size} samples to {args.output} ({args.mode} mode)"])
    return EXIT_OK


# -- verify ---------------------------------------------------------------------


def mode_deviation(seed, length, chunk=DEFAULT_CHUNK, dtype=np.float32):
    """Relative l2 gap between streaming and batch outputs of a random default network."""
    net = build_network(default_config(), seed=seed)
    x = np.random.default_rng(seed).uniform(-1.0, 1.0, length).astype(dtype)
    delay = latency_samples(net.config)
    batch = forward_batch(net, x).astype(float)
    stream = stream_signal(net, x, chunk=chunk, dtype=dtype).astype(float)[delay:]
    ref = batch[: length - delay]
    return float(np.linalg.norm(stream - ref) / np.linalg.norm(ref))


def cmd_verify(args):
    dtype = np.float32 if args.precision == "single" else np.float64
    if args.len <= 0 or args.len % args.chunk:
        raise UsageError(f"--len {args.len} must be a positive multiple of --chunk {args.chunk}")
    dev = mode_deviation(args.seed, args.len, args.chunk, dtype)
    ok = dev < args.tol
    report = {"seed": args.seed, "length": args.len, "precision": args.precision,
              "relative_deviation": dev, "tolerance": args.tol, "pass": ok}
    _emit(args, report, [f"stream vs batch relative deviation {dev:.3e} (tol {args.tol:g}): {'PASS' if ok else 'FAIL'}"])
    return EXIT_OK if ok else EXIT_FAILED


# -- plan -----------------------------------------------------------------------


def parse_dims(text):
    parts = text.split(",")
    if len(parts) != 5:
        raise argparse.ArgumentTypeError(f"expected five comma-separated integers B,N,I,J,F, got {text!r}")
    try:
        B, N, I, J, F = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-integer in {text!r}") from None
    if min(B, N, I, J, F) < 1:
        raise argparse.ArgumentTypeError("dims must be positive")
    return ContractionDims(B=B, I=I, J=J, N=N, F=F)


def cmd_plan(args):
    d = args.dims
    cost1, cost2 = contraction_costs(d)
    choice = plan_contraction(d).variant.value
    report = {"dims": {"B": d.B, "N": d.N, "I": d.I, "J": d.J, "F": d.F},
              "cost_input_project_first": cost1, "cost_kernel_first": cost2, "order": choice}
    _emit(args, report, [
        f"input-project-first cost: {cost1}",
        f"kernel-first cost:        {cost2}",
        f"chosen order: {choice}",
    ])
    return EXIT_OK


# -- degrade --------------------------------------------------------------------


def cmd_degrade(args):
    spec = audio.DegradeSpec(target_rate=args.rate, bits=args.bits)
    buf = audio.read_wav(args.input)
    out = audio.degrade(buf, spec, antialias=not args.no_antialias)
    audio.write_wav(out, args.output)
    report = {"rate": args.rate, "bits": args.bits, "samples": len(out), "output": args.output}
    _emit(args, report, [f"degraded to {args.rate} Hz / {args.bits} bit: {args.output}"])
    return EXIT_OK


# -- train-toy ------------------------------------------------------------------


def cmd_train_toy(args):
    sink = None
    if args.metrics == "-":
        sink = sys.stdout
    elif args.metrics:
        sink = open(args.metrics, "w", encoding="utf-8")
    try:
        net, metrics = train_toy(args.steps, seed=args.seed, metrics_sink=sink)
    finally:
        if sink not in (None, sys.stdout):
            sink.close()
    if args.output:
        save_weights(net, args.output)
    gain = metrics["output_snr_db"] - metrics["input_snr_db"]
    report = {"steps": args.steps, "seed": args.seed, "final_loss": metrics["loss"][-1],
              "input_snr_db": metrics["input_snr_db"], "output_snr_db": metrics["output_snr_db"],
              "snr_gain_db": gain, "max_abar": max(metrics["max_abar"]), "weights": args.output}
    _emit(args, report, [
        f"final loss {metrics['loss'][-1]:.4g}",
        f"held-out SNR {metrics['input_snr_db']:.2f} dB -> {metrics['output_snr_db']:.2f} dB ({gain:+.2f} dB)",
    ])
    return EXIT_OK


# -- entry point ------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")

    p = argparse.ArgumentParser(prog="ssmdenoise", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("describe", parents=[common], help="parameter count, MACs/sec and latency")
    d.add_argument("--config", help="JSON network config (default: built-in)")
    g = d.add_mutually_exclusive_group()
    g.add_argument("--no-preconv", action="store_true", help="drop every PreConv")
    g.add_argument("--preconv", choices=("all", "encoder", "none"), help="PreConv placement override")
    d.set_defaults(func=cmd_describe)

    pr = sub.add_parser("process", parents=[common], help="denoise a WAV file")
    pr.add_argument("--weights", required=True)
    pr.add_argument("--input", required=True)
    pr.add_argument("--output", required=True)
    pr.add_argument("--mode", choices=("stream", "batch"), default="stream")
    pr.add_argument("--chunk", type=int, default=DEFAULT_CHUNK, help="stream chunk length in samples")
    pr.add_argument("--config", help="override the config stored in the weight file")
    pr.set_defaults(func=cmd_process)

    v = sub.add_parser("verify", parents=[common], help="check streaming against batch execution")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--len", type=int, default=16384)
    v.add_argument("--tol", type=float, default=1e-4)
    v.add_argument("--chunk", type=int, default=DEFAULT_CHUNK)
    v.add_argument("--precision", choices=("single", "double"), default="single")
    v.set_defaults(func=cmd_verify)

    pl = sub.add_parser("plan", parents=[common], help="choose the SSM contraction order")
    pl.add_argument("--dims", type=parse_dims, required=True, metavar="B,N,I,J,F")
    pl.set_defaults(func=cmd_plan)

    dg = sub.add_parser("degrade", parents=[common], help="downsample-and-repeat then mu-law quantize")
    dg.add_argument("--bits", type=int, default=16)
    dg.add_argument("--rate", type=int, default=16000)
    dg.add_argument("--no-antialias", action="store_true", help="skip the FIR low-pass before decimation")
    dg.add_argument("input")
    dg.add_argument("output")
    dg.set_defaults(func=cmd_degrade)

    t = sub.add_parser("train-toy", parents=[common], help="train the reduced network on tones in noise")
    t.add_argument("--steps", type=int, default=2000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--output", help="weight file to write")
    t.add_argument("--metrics", help="line-delimited JSON metrics file ('-' for stdout)")
    t.set_defaults(func=cmd_train_toy)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SSMDenoiseError, UsageError, OSError, ValueError) as exc:
        print(f"ssmdenoise {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
