"""``trunet`` command line: enhance, bench, init-weights, quantize, inspect, gradcheck.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 check failure.
Results go to stdout as ``key=value`` lines after any human-readable lines.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from trunet.engine import Enhancer, benchmark_rtf, remix
from trunet.errors import TrunetError
from trunet.graph import TrunetConfig, load_network, random_init
from trunet.losses import energy_ratio_db, gradcheck_trial
from trunet.quant import quantize_model
from trunet.wavio import wav_read, wav_write
from trunet.weights import parameter_count, read_weights_file, write_weights_file

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3
EMIT_CHOICES = {"d": "direct", "r": "reverb", "n": "noise", "mix": "mix"}
GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _emit_list(text: str) -> list[str]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    bad = [t for t in items if t not in EMIT_CHOICES]
    if bad or not items:
        raise argparse.ArgumentTypeError(
            f"--emit takes a comma list of {','.join(EMIT_CHOICES)}, got {text!r}")
    return items


def _load_network(path, int8: bool, calibration):
    store = read_weights_file(path)
    if int8 and not store.is_quantized:
        store = quantize_model(store, calibration())
    return load_network(store)


def cmd_enhance(args) -> int:
    x = wav_read(args.input)
    if len(x) == 0:
        raise TrunetError(f"{args.input}: no samples")
    net = _load_network(args.weights, args.int8, lambda: [x])
    enh = Enhancer(net, sign_mode=args.sign_mode, tau=args.tau, seed=args.seed)
    out = enh.enhance(x)
    sources = {"direct": out.direct, "reverb": out.reverb, "noise": out.noise}
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for key in args.emit:
        name = EMIT_CHOICES[key]
        sig = remix(out.direct, out.reverb, args.remix_db) if name == "mix" else sources[name]
        path = out_dir / f"{name}.wav"
        wav_write(path, sig)
        written[name] = path
    print(f"enhanced {len(x)} samples ({len(x) / 16000:.3f} s), "
          f"{'int8' if net.quantized else 'f32'}, latency {enh.latency} samples")
    for name, path in written.items():
        print(f"{name}={path}")
    if out.reverb.any() and out.direct.any():
        mix_ratio = energy_ratio_db(out.direct, remix(out.direct, out.reverb, args.remix_db) - out.direct)
        print(f"remix_drr_db={mix_ratio:.6f}")
    if args.plot:
        from trunet.plotting import plot_sources

        print(f"plot={plot_sources(args.plot, x, sources)}")
    return EXIT_OK


def _noise_calibration(n_clips: int = 3, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [0.1 * rng.standard_normal(16000) for _ in range(n_clips)]


def cmd_bench(args) -> int:
    net = _load_network(args.weights, args.int8, _noise_calibration)
    report = benchmark_rtf(Enhancer(net), n_frames=args.frames)
    for line in report.lines():
        print(line)
    if args.plot:
        from trunet.plotting import plot_frame_times

        print(f"plot={plot_frame_times(args.plot, report)}")
    return EXIT_OK


def cmd_init(args) -> int:
    store = random_init(args.seed, TrunetConfig(use_fgru=not args.no_fgru))
    size = write_weights_file(args.out, store)
    print(f"out={args.out}")
    print(f"parameters={parameter_count(store)}")
    print(f"bytes={size}")
    return EXIT_OK


def cmd_quantize(args) -> int:
    store = read_weights_file(args.weights)
    clips = [wav_read(p) for p in args.calib]
    q = quantize_model(store, clips)
    size = write_weights_file(args.out, q)
    print(f"out={args.out}")
    print(f"calibration_clips={len(clips)}")
    print(f"bytes={size}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    store = read_weights_file(args.weights)
    width = max(len(n) for n in store)
    for name, entry in store.items():
        scale = f"  scale={entry.scale:.6g}" if entry.scale is not None else ""
        print(f"{name:<{width}}  {entry.dtype:<3}  {list(entry.shape)}{scale}")
    size = Path(args.weights).stat().st_size
    print(f"tensors={len(store)}")
    print(f"parameters={parameter_count(store)}")
    print(f"quantized={str(store.is_quantized).lower()}")
    print(f"bytes={size}")
    print(f"mib={size / 2**20:.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    errors = np.array([gradcheck_trial(rng) for _ in range(args.trials)])
    worst = float(errors.max())
    ok = worst < args.tol
    print(f"gradcheck {'passed' if ok else 'FAILED'}: {args.trials} trials, "
          f"worst relative error {worst:.3e} (tolerance {args.tol:g})")
    print(f"trials={args.trials}")
    print(f"max_rel_err={worst:.6e}")
    print(f"passed={str(ok).lower()}")
    return EXIT_OK if ok else EXIT_CHECK


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trunet", description="Streaming TRU-Net speech enhancement")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("enhance", help="separate a WAV into direct, reverb and noise")
    e.add_argument("--input", required=True)
    e.add_argument("--weights", required=True)
    e.add_argument("--out-dir", required=True)
    e.add_argument("--int8", action="store_true",
                   help="run INT8; an f32 store is quantized on the fly, calibrated on the input")
    e.add_argument("--remix-db", type=float, default=15.0)
    e.add_argument("--emit", type=_emit_list, default=["d", "r", "n", "mix"])
    e.add_argument("--sign-mode", choices=("hard", "gumbel"), default="hard")
    e.add_argument("--tau", type=float, default=1.0)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--plot", metavar="PNG", help="write a spectrogram figure")
    e.set_defaults(func=cmd_enhance)

    b = sub.add_parser("bench", help="time process_frame and report the real-time factor")
    b.add_argument("--weights", required=True)
    b.add_argument("--int8", action="store_true")
    b.add_argument("--frames", type=int, default=1000)
    b.add_argument("--plot", metavar="PNG", help="write a frame-time histogram")
    b.set_defaults(func=cmd_bench)

    i = sub.add_parser("init-weights", help="write a randomly initialised f32 store")
    i.add_argument("--seed", type=int, required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--no-fgru", action="store_true", help="ablation without the FGRU block")
    i.set_defaults(func=cmd_init)

    q = sub.add_parser("quantize", help="convert an f32 store to INT8")
    q.add_argument("--weights", required=True)
    q.add_argument("--calib", nargs="+", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_quantize)

    n = sub.add_parser("inspect", help="list tensors and count parameters")
    n.add_argument("weights")
    n.set_defaults(func=cmd_inspect)

    g = sub.add_parser("gradcheck", help="finite-difference check of the waveform loss gradient")
    g.add_argument("--trials", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tol", type=float, default=GRADCHECK_TOL)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if getattr(args, "frames", 1) <= 0 or getattr(args, "trials", 1) <= 0:
        print("trunet: error: counts must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (TrunetError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"trunet: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
