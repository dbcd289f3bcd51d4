"""Command-line surface: okp <subcommand>.

Subcommands: skeleton dump, synth, solve, decode, perturb, eval, sweep.
Data goes to --output (default stdout); diagnostics go to stderr.
Exit codes: 0 success, 1 usage error, 2 data error.

Skeleton selection: --skeleton takes a built-in name or a config path;
when omitted, the OKP_SKELETON_PATH environment variable is consulted,
then the dataset's declared skeleton (for file-reading commands),
then the default "h36m17".
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
from pathlib import Path

import numpy as np

from .codec import DEFAULT_EXTEND, decode_keypoints, read_heatmap_fixture
from .errors import ConfigError, OkpError
from .harness import (
    EvalOptions,
    FrameRecord,
    evaluate,
    generate_synthetic_sequence,
    inject_error_scale,
    inject_gaussian_noise,
    read_dataset,
    sensitivity_sweep,
    solve_frames,
    write_dataset,
)
from .skeleton import (
    BUILTIN_SKELETONS,
    Skeleton,
    builtin_skeleton,
    default_bone_lengths,
    load_skeleton,
    skeleton_to_toml,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _resolve_skeleton(value: str) -> Skeleton:
    if value in BUILTIN_SKELETONS:
        return builtin_skeleton(value)
    path = Path(value)
    if path.exists():
        return load_skeleton(path)
    raise ConfigError(
        f"skeleton {value!r} is neither a built-in ({', '.join(BUILTIN_SKELETONS)}) "
        "nor an existing config file"
    )


def _default_skeleton(args) -> Skeleton:
    value = args.skeleton or os.environ.get("OKP_SKELETON_PATH") or "h36m17"
    return _resolve_skeleton(value)


def _read_input_dataset(args):
    value = args.skeleton or os.environ.get("OKP_SKELETON_PATH")
    skel = _resolve_skeleton(value) if value else None
    return read_dataset(args.input, skel)


def _lengths(skel: Skeleton, args) -> np.ndarray:
    scale = getattr(args, "length_scale", 1.0)
    if scale <= 0.0:
        raise _UsageError("--length-scale must be positive")
    return default_bone_lengths(skel) * scale


@contextlib.contextmanager
def _output(args):
    if args.output is None:
        yield sys.stdout
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            yield fh


def _cmd_skeleton_dump(args) -> int:
    skel = _default_skeleton(args)
    with _output(args) as fh:
        fh.write(skeleton_to_toml(skel))
    return 0


def _cmd_synth(args) -> int:
    skel = _default_skeleton(args)
    frames = generate_synthetic_sequence(
        seed=args.seed,
        n_frames=args.frames,
        skel=skel,
        lengths=_lengths(skel, args),
        angle_limit=args.angle_limit,
        group=args.group,
    )
    with _output(args) as fh:
        write_dataset(fh, skel, frames)
    print(f"synthesized {len(frames)} frames ({skel.describe()})", file=sys.stderr)
    return 0


def _cmd_solve(args) -> int:
    skel, frames = _read_input_dataset(args)
    solved = solve_frames(frames, skel, _lengths(skel, args), flip=args.flip)
    with _output(args) as fh:
        write_dataset(fh, skel, solved)
    print(f"solved {len(solved)} frames", file=sys.stderr)
    return 0


def _cmd_decode(args) -> int:
    skel = _default_skeleton(args)
    frames = []
    for path in args.inputs:
        for triples in read_heatmap_fixture(path):
            kps = decode_keypoints(triples, args.extend, expected_count=skel.n_keypoints)
            frames.append(
                FrameRecord(
                    frame_id=f"decoded{len(frames):06d}",
                    group=args.group,
                    gt_keypoints=kps,
                )
            )
    with _output(args) as fh:
        write_dataset(fh, skel, frames)
    print(f"decoded {len(frames)} frames", file=sys.stderr)
    return 0


def _cmd_perturb(args) -> int:
    skel, frames = _read_input_dataset(args)
    out = []
    for index, fr in enumerate(frames):
        pred = fr.pred_keypoints if fr.pred_keypoints is not None else fr.gt_keypoints
        if args.noise_sigma is not None:
            pred = inject_gaussian_noise(pred, args.noise_sigma, [args.seed, index])
        if args.error_scale is not None:
            pred = inject_error_scale(pred, fr.gt_keypoints, args.error_scale)
        fr.pred_keypoints = pred
        out.append(fr)
    with _output(args) as fh:
        write_dataset(fh, skel, out)
    print(f"perturbed {len(out)} frames", file=sys.stderr)
    return 0


def _eval_options(args) -> EvalOptions:
    return EvalOptions(
        flip=args.flip,
        pck_threshold=args.pck_threshold,
        procrustes_scale=not args.no_scale,
        root_relative=not args.no_root_relative,
        noise_sigma=args.noise_sigma,
        noise_seed=args.seed,
        error_scale=args.error_scale,
    )


def _cmd_eval(args) -> int:
    skel, frames = _read_input_dataset(args)
    report = evaluate(frames, skel, _lengths(skel, args), _eval_options(args))
    rendered = {
        "text": report.to_text,
        "csv": report.to_csv,
        "json": report.to_json,
    }[args.format]()
    with _output(args) as fh:
        fh.write(rendered)
    return 0


def _cmd_sweep(args) -> int:
    try:
        scales = [float(v) for v in args.scales.split(",") if v != ""]
    except ValueError as exc:
        raise _UsageError(f"--scales: {exc}") from exc
    skel, frames = _read_input_dataset(args)
    curve = sensitivity_sweep(frames, scales, skel, _lengths(skel, args), _eval_options(args))
    with _output(args) as fh:
        fh.write(curve.to_csv())
    return 0


def _add_common(parser, output=True, skeleton=True):
    if skeleton:
        parser.add_argument(
            "--skeleton",
            help="built-in skeleton name or path to a skeleton config (TOML)",
        )
    if output:
        parser.add_argument("-o", "--output", help="output file (default: stdout)")


def _add_eval_flags(parser):
    parser.add_argument("--flip", action="store_true", help="flip-averaged inference")
    parser.add_argument("--pck-threshold", type=float, default=150.0)
    parser.add_argument(
        "--no-scale", action="store_true", help="rigid (not similarity) Procrustes"
    )
    parser.add_argument(
        "--no-root-relative",
        action="store_true",
        help="report raw (not root-relative) Protocol-1 MPJPE",
    )
    parser.add_argument("--noise-sigma", type=float, default=None)
    parser.add_argument("--error-scale", type=float, default=None)
    parser.add_argument("--seed", type=int, default=0, help="noise seed")
    parser.add_argument("--length-scale", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="okp", description="Orientation-keypoint 6D pose toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_skel = sub.add_parser("skeleton", help="skeleton utilities")
    skel_sub = p_skel.add_subparsers(dest="skeleton_command", required=True)
    p_dump = skel_sub.add_parser("dump", help="emit a skeleton config as TOML")
    _add_common(p_dump)
    p_dump.set_defaults(func=_cmd_skeleton_dump)

    p_synth = sub.add_parser("synth", help="generate a synthetic ground-truth dataset")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--frames", type=int, default=100)
    p_synth.add_argument("--angle-limit", type=float, default=float(np.pi))
    p_synth.add_argument("--group", default="synthetic")
    p_synth.add_argument("--length-scale", type=float, default=1.0)
    _add_common(p_synth)
    p_synth.set_defaults(func=_cmd_synth)

    p_solve = sub.add_parser("solve", help="solve keypoints into rotations + positions")
    p_solve.add_argument("-i", "--input", required=True)
    p_solve.add_argument("--flip", action="store_true")
    p_solve.add_argument("--length-scale", type=float, default=1.0)
    _add_common(p_solve)
    p_solve.set_defaults(func=_cmd_solve)

    p_decode = sub.add_parser("decode", help="decode heatmap fixtures into keypoints")
    p_decode.add_argument("-i", "--inputs", nargs="+", required=True)
    p_decode.add_argument("--extend", type=float, default=DEFAULT_EXTEND)
    p_decode.add_argument("--group", default="decoded")
    _add_common(p_decode)
    p_decode.set_defaults(func=_cmd_decode)

    p_perturb = sub.add_parser("perturb", help="inject noise / scaled errors as predictions")
    p_perturb.add_argument("-i", "--input", required=True)
    p_perturb.add_argument("--noise-sigma", type=float, default=None)
    p_perturb.add_argument("--error-scale", type=float, default=None)
    p_perturb.add_argument("--seed", type=int, default=0)
    _add_common(p_perturb)
    p_perturb.set_defaults(func=_cmd_perturb)

    p_eval = sub.add_parser("eval", help="evaluate a dataset, print a metrics report")
    p_eval.add_argument("-i", "--input", required=True)
    p_eval.add_argument("--format", choices=("text", "csv", "json"), default="text")
    _add_eval_flags(p_eval)
    _add_common(p_eval)
    p_eval.set_defaults(func=_cmd_eval)

    p_sweep = sub.add_parser("sweep", help="error-scale sensitivity sweep (CSV)")
    p_sweep.add_argument("-i", "--input", required=True)
    p_sweep.add_argument("--scales", default="0,0.5,1,1.5,2")
    _add_eval_flags(p_sweep)
    _add_common(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse --help exits 0; anything else is a usage problem.
        return 0 if exc.code in (0, None) else 1
    except (OkpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
