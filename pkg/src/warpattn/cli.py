"""Command-line entry point: ``warpattn <subcommand> ...``.

Exit codes: 0 success, 1 validation or check failure, 2 I/O or format error.
Reports go to stdout as tab-separated lines.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import tnsr
from .imageio import PpmFormatError, read_ppm, write_ppm
from .tensor import NonFiniteError, ValidationError

EXIT_OK, EXIT_FAIL, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; here 2 is reserved for I/O
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError(f"size must be positive, got {text!r}")
    return h, w


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _emit(lines, output: Path | None) -> None:
    text = "".join(line + "\n" for line in lines)
    if output is None:
        sys.stdout.write(text)
    else:
        output.write_text(text)


def cmd_bench_attn(args) -> int:
    from .bench import bench_attention

    if args.k < 1:
        raise ValidationError(f"--k must be >= 1, got {args.k}")
    if args.heads < 1:
        raise ValidationError(f"--heads must be >= 1, got {args.heads}")
    if not args.n_list or min(args.n_list) < 1:
        raise ValidationError(f"--n-list needs positive sizes, got {args.n_list}")
    if args.dim % args.heads:
        raise ValidationError(f"--dim {args.dim} is not divisible by --heads {args.heads}")
    limit = args.memory_limit_mb * 1024 ** 2
    records = bench_attention(sorted(args.n_list), args.k, args.heads, args.dtype, args.dim, args.seed,
                              args.repeats, limit)
    header = "# variant\tn\tk\th\twall_ns\tpeak_bytes"
    _emit([header] + [r.line() for r in records], args.output)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .audits import REGISTRY, TOLERANCE
    from .gradcheck import GradcheckError

    audits = [a for a in REGISTRY if args.module == "all" or a.module == args.module]

    def run(a):
        try:
            return a, a.run(args.seed), None
        except GradcheckError as err:
            return a, None, f"non-finite value in op {err.op}"

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(run, audits))
    failed = False
    for a, report, problem in results:
        if problem is None and report.max_rel_error <= TOLERANCE:
            print(f"{a.module}\t{a.name}\t{report.max_rel_error:.3e}\tok")
            continue
        failed = True
        if problem is None:
            problem = (f"input {report.input_index} coordinate {report.coordinate}: "
                       f"analytic {report.analytic:.6e} numeric {report.numeric:.6e}")
            print(f"{a.module}\t{a.name}\t{report.max_rel_error:.3e}\tFAIL {problem}")
        else:
            print(f"{a.module}\t{a.name}\tnan\tFAIL {problem}")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_overfit(args) -> int:
    from .pipeline import PipelineConfig, ablation_run, write_overfit_artifacts

    h, w = args.size
    if h % 32 or w % 32:
        raise ValidationError(f"--size must be a multiple of 32 in both dimensions, got {h}x{w}")
    if args.steps < 0:
        raise ValidationError(f"--steps must be non-negative, got {args.steps}")
    overrides = {}
    if args.config is not None:
        overrides = PipelineConfig.parse_overrides(args.config.read_text())
        for key in ("height", "width", "seed"):
            if overrides.pop(key, None) is not None:
                raise ValidationError(f"--config may not set {key}; use the command-line flag")
    record = ablation_run(args.mode, args.steps, args.seed, h, w, **overrides)
    print(f"mode\t{record.mode}")
    print(f"initial\t{record.initial_loss:.9g}")
    if record.steps:
        print(f"final\t{record.final_loss:.9g}")
        print(f"ratio\t{record.ratio:.6f}")
    print(f"ssim\t{record.ssim_tryon:.6f}")
    print(f"psnr\t{record.psnr_tryon:.4f}")
    print(f"ssim_warp\t{record.ssim_warp:.6f}")
    if args.dump_dir is not None:
        write_overfit_artifacts(record, args.dump_dir)
    return EXIT_OK


def cmd_metrics(args) -> int:
    from .metrics import psnr, ssim

    a, b = read_ppm(args.a), read_ppm(args.b)
    if a.shape != b.shape:
        raise PpmFormatError(f"image sizes differ: {a.shape[1]}x{a.shape[2]} vs {b.shape[1]}x{b.shape[2]}")
    print(f"ssim\t{ssim(a, b)!r}")
    print(f"psnr\t{psnr(a, b)!r}")
    return EXIT_OK


SYNTH_FILES = ("garment.ppm", "person.ppm", "agnostic.ppm", "warped_garment.ppm", "pose.tnsr",
               "garment_mask.tnsr")


def cmd_synth(args) -> int:
    from .synth import synth_sample

    h, w = args.size
    if args.count < 1:
        raise ValidationError(f"--count must be >= 1, got {args.count}")
    if h < 16 or w < 16:
        raise ValidationError(f"--size must be at least 16x16, got {h}x{w}")
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = ["sample\tseed\theight\twidth\tmask_coverage"]
    for i in range(args.count):
        seed = args.seed + i
        s = synth_sample(seed, h, w)
        d = out / f"sample_{i:04d}"
        d.mkdir(exist_ok=True)
        for name, image in (("garment", s.garment), ("person", s.person), ("agnostic", s.agnostic),
                            ("warped_garment", s.warped_garment)):
            write_ppm(d / f"{name}.ppm", image)
        tnsr.save(d / "pose.tnsr", s.pose)
        tnsr.save(d / "garment_mask.tnsr", s.garment_mask)
        rows.append(f"{d.name}\t{seed}\t{h}\t{w}\t{s.mask_coverage():.6f}")
    (out / "manifest.tsv").write_text("\n".join(rows) + "\n")
    print(f"wrote {args.count} samples to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    from .audits import MODULES
    from .pipeline import MODES

    parser = _Parser(prog="warpattn", description="Garment warping with attention flows: checks and experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bench-attn", help="time and memory of linear vs dense attention")
    p.add_argument("--n-list", type=_int_list, default=[256, 512, 1024, 2048, 4096])
    p.add_argument("--k", type=int, default=64)
    p.add_argument("--heads", type=int, default=1)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--memory-limit-mb", type=int, default=2048)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--output", type=Path)
    p.set_defaults(run=cmd_bench_attn)

    p = sub.add_parser("gradcheck", help="finite-difference audit of every backward rule")
    p.add_argument("--module", choices=MODULES + ("all",), default="all")
    p.add_argument("--dtype", choices=("f64",), default="f64")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(run=cmd_gradcheck)

    p = sub.add_parser("overfit", help="overfit one synthetic sample and report try-on metrics")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--size", type=_size, default=(64, 64))
    p.add_argument("--mode", choices=MODES, default="+warp_loss")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--config", type=Path, help="key=value pipeline settings overriding the mode defaults")
    p.add_argument("--dump-dir", type=Path)
    p.set_defaults(run=cmd_overfit)

    p = sub.add_parser("metrics", help="SSIM and PSNR between two PPM images")
    p.add_argument("--a", type=Path, required=True)
    p.add_argument("--b", type=Path, required=True)
    p.set_defaults(run=cmd_metrics)

    p = sub.add_parser("synth", help="write seeded synthetic try-on samples")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--size", type=_size, default=(64, 64))
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(run=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.run(args)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_FAIL
    except (ValidationError, NonFiniteError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAIL
    except (OSError, PpmFormatError, tnsr.TnsrFormatError) as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
