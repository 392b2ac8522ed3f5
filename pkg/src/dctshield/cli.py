"""Command-line entry point exposing every pipeline stage for batch use.

Exit codes: 0 success, 1 usage, 2 I/O or image format, 3 validation or
invariant failure, 4 external evaluator failure. Human-readable messages
go to stderr; pass --json for machine output on stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import augment as augment_mod
from . import codec as codec_mod
from . import design as design_mod
from . import perturb as perturb_mod
from . import stats as stats_mod
from . import vote as vote_mod
from .errors import (
    DctShieldError,
    EvaluatorError,
    ImageFormatError,
    UsageError,
    ValidationError,
)
from .image import RGB, YCBCR420, ImageBuffer, read_image, write_image
from .quant import QuantTable, load_table, save_table
from .transform import RASTER_TO_ZIGZAG
from .util import DEFAULT_SEED

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_EVALUATOR = 4

IMAGE_SUFFIXES = (".png", ".ppm", ".pnm")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _image_paths(directory: Path) -> list[Path]:
    paths = sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        raise ImageFormatError(f"{directory}: no PNG/PPM images found")
    return paths


def _load_dir(directory) -> list[tuple[str, ImageBuffer]]:
    return [(p.name, read_image(p)) for p in _image_paths(Path(directory))]


def _parse_table(spec: str) -> QuantTable | str:
    if spec == codec_mod.STANDARD_JPEG:
        return codec_mod.STANDARD_JPEG
    return load_table(spec)


def _codec_config(args) -> codec_mod.CodecConfig:
    return codec_mod.CodecConfig(
        color_path=args.color_path,
        table=_parse_table(args.table),
        quality=args.quality,
        level_shift=not args.no_level_shift,
    )


def _add_codec_flags(p, default_quality=50):
    p.add_argument("--table", required=True,
                   help="table JSON path or the token standard-jpeg")
    p.add_argument("--color-path", choices=[RGB, YCBCR420], default=RGB)
    p.add_argument("--quality", type=int, default=default_quality)
    p.add_argument("--no-level-shift", action="store_true")


def _emit(args, doc: dict, human: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(doc))
    else:
        print(human)


def _map_jobs(fn, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def build_parser() -> _Parser:
    ap = _Parser(prog="dctshield", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="per-band deviation statistics of a corpus")
    p.add_argument("--images", help="directory of benign images")
    p.add_argument("--residuals", help="directory of .npy residual maps")
    p.add_argument("--channels", default="r,g,b",
                   help="comma list from r,g,b,y,cb,cr or 'all'")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--csv", action="store_true",
                   help="also write per-band CSV next to each stats JSON")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("ratio", help="deviation ratios and band ordering")
    p.add_argument("--adv", required=True, help="stats dir or single stats JSON")
    p.add_argument("--benign", required=True)
    p.add_argument("--channels", default="r,g,b",
                   help="one channel, or r,g,b for the merged RGB ordering")
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("perturb", help="generate bounded noise images + residual maps")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=list(perturb_mod.KINDS), default=perturb_mod.SIGN)
    p.add_argument("--eps", type=float, default=0.004)
    p.add_argument("--sigma", type=float, default=perturb_mod.DEFAULT_SIGMA)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("design", help="optimize the quantization table on a corpus")
    p.add_argument("--benign-dir", required=True)
    p.add_argument("--adv-dir", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--evaluator", help="external evaluator command")
    p.add_argument("--order", help="ratio.json with a precomputed band order")
    p.add_argument("--color-path", choices=[RGB, YCBCR420], default=RGB)
    p.add_argument("--out", required=True, help="design.json destination")
    p.add_argument("--table-out", help="also write the winning table JSON")
    p.add_argument("--csv", action="store_true",
                   help="also write the evaluated grid as CSV next to --out")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("defend", help="run the full filtering codec")
    p.add_argument("--in", dest="input", required=True, help="image file or directory")
    p.add_argument("--out", required=True)
    _add_codec_flags(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("encode", help="compress to a coefficient archive")
    p.add_argument("--in", dest="input", required=True,
                   help="image file, or directory for one .dsh per image")
    p.add_argument("--out", required=True)
    _add_codec_flags(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("decode", help="decompress a coefficient archive")
    p.add_argument("--in", dest="input", required=True,
                   help="archive file, or directory of .dsh archives")
    p.add_argument("--out", required=True)
    _add_codec_flags(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("scale-table", help="scale a table by a quality factor")
    p.add_argument("--table", required=True)
    p.add_argument("--quality", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("export-augment", help="noisy-training dataset export")
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    _add_codec_flags(p)
    p.add_argument("--qualities", default="90,80,70,60,50,40,30")
    p.add_argument("--sigma", type=float, default=perturb_mod.DEFAULT_SIGMA)
    p.add_argument("--xi", type=float, default=augment_mod.DEFAULT_XI)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--epochs", type=int, default=augment_mod.DEFAULT_EPOCHS)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("vote", help="aggregate per-model score files")
    p.add_argument("--scores", nargs="+", required=True, help="JSONL files, one per model")
    p.add_argument("--rule", choices=["average", "majority"], default="average")
    p.add_argument("--out", help="decisions JSONL (stdout when omitted)")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("ablate", help="compare the four codec configurations")
    p.add_argument("--benign-dir", required=True)
    p.add_argument("--adv-dir", required=True)
    p.add_argument("--table", required=True, help="optimized table JSON")
    p.add_argument("--std-quality", type=int, default=75)
    p.add_argument("--opt-quality", type=int, default=50)
    p.add_argument("--out", help="report JSON destination")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--json", action="store_true")

    return ap


def _cmd_analyze(args) -> int:
    if not args.images and not args.residuals:
        raise UsageError("analyze needs --images and/or --residuals")
    channels = (
        list(stats_mod.CHANNELS)
        if args.channels == "all"
        else [c.strip() for c in args.channels.split(",") if c.strip()]
    )
    corpus = []
    if args.images:
        corpus.extend(img for _, img in _load_dir(args.images))
    if args.residuals:
        res_paths = sorted(Path(args.residuals).glob("*.npy"))
        if not res_paths:
            raise ImageFormatError(f"{args.residuals}: no .npy residual maps found")
        corpus.extend(
            perturb_mod.load_residual(p).astype(np.float64) for p in res_paths
        )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for ch in channels:
        st = stats_mod.estimate_band_stats(corpus, ch)
        dest = out_dir / f"stats_{ch}.json"
        stats_mod.save_stats(st, dest)
        written.append(str(dest))
        if args.csv:
            lines = ["band,zigzag_pos,delta"]
            lines += [f"{b},{RASTER_TO_ZIGZAG[b]},{st.delta[b]:.9g}" for b in range(64)]
            (out_dir / f"stats_{ch}.csv").write_text("\n".join(lines) + "\n")
    _emit(args, {"format": 1, "written": written},
          "wrote " + ", ".join(written))
    return EXIT_OK


def _cmd_ratio(args) -> int:
    channels = [c.strip() for c in args.channels.split(",") if c.strip()]

    def load_side(base: str, ch: str) -> stats_mod.BandStats:
        p = Path(base)
        return stats_mod.load_stats(p / f"stats_{ch}.json" if p.is_dir() else p)

    if len(channels) == 1:
        ratio = stats_mod.band_ratio(
            load_side(args.adv, channels[0]), load_side(args.benign, channels[0])
        )
    elif sorted(channels) == ["b", "g", "r"]:
        pairs = [(load_side(args.adv, ch), load_side(args.benign, ch))
                 for ch in channels]
        ratio = stats_mod.merge_rgb_ratio(pairs)
    else:
        raise UsageError("--channels must be a single channel or r,g,b")
    stats_mod.save_ratio(ratio, args.out)
    _emit(args, {"format": 1, "out": str(args.out)}, f"wrote {args.out}")
    return EXIT_OK


def _cmd_perturb(args) -> int:
    spec = perturb_mod.PerturbSpec(
        kind=args.kind, eps=args.eps, sigma=args.sigma, seed=args.seed
    )
    corpus = _load_dir(args.input)
    out_dir = Path(args.out)
    res_dir = out_dir / "residuals"
    res_dir.mkdir(parents=True, exist_ok=True)

    def run(item):
        idx, (name, img) = item
        result = perturb_mod.apply(img, spec, image_index=idx)
        write_image(result.image, out_dir / name)
        perturb_mod.save_residual(result.residual, res_dir / (Path(name).stem + ".npy"))
        return name

    names = _map_jobs(run, list(enumerate(corpus)), args.jobs)
    _emit(args, {"format": 1, "count": len(names), "out": str(out_dir)},
          f"perturbed {len(names)} image(s) into {out_dir}")
    return EXIT_OK


def _cmd_design(args) -> int:
    benign = [img for _, img in _load_dir(args.benign_dir)]
    adv = [img for _, img in _load_dir(args.adv_dir)]
    order = stats_mod.load_ratio(args.order) if args.order else None
    if args.evaluator:
        evaluator = design_mod.make_external_evaluator(
            args.evaluator, args.benign_dir, args.adv_dir
        )
    else:
        evaluator = design_mod.builtin_signal_evaluator
    result = design_mod.optimize(
        benign, adv, args.eps, evaluator,
        order=order, color_path=args.color_path, jobs=args.jobs,
    )
    design_mod.save_design(result, args.out)
    if args.table_out:
        save_table(result.table, args.table_out)
    if args.csv:
        lines = ["k,qs_af,acc_dec,def_eff"]
        lines += [f"{g.k},{g.qs_af},{g.acc_dec:.9g},{g.def_eff:.9g}"
                  for g in result.grid]
        Path(args.out).with_suffix(".csv").write_text("\n".join(lines) + "\n")
    doc = {
        "format": 1,
        "k": result.design.k,
        "qs_of": result.design.qs_of,
        "qs_af": result.design.qs_af,
        "acc_dec": result.report.acc_dec,
        "def_eff": result.report.def_eff,
        "infeasible": result.report.infeasible,
    }
    _emit(args, doc,
          f"k={result.design.k} qs_of={result.design.qs_of} "
          f"qs_af={result.design.qs_af} def_eff={result.report.def_eff:.4f} "
          f"acc_dec={result.report.acc_dec:.4f}"
          + (" (infeasible)" if result.report.infeasible else ""))
    return EXIT_OK


def _cmd_defend(args) -> int:
    cfg = _codec_config(args)
    src = Path(args.input)
    if src.is_dir():
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)

        def run(item):
            name, img = item
            write_image(codec_mod.defend(img, cfg), out_dir / name)
            return name

        names = _map_jobs(run, _load_dir(src), args.jobs)
        _emit(args, {"format": 1, "count": len(names), "out": str(out_dir)},
              f"defended {len(names)} image(s) into {out_dir}")
    else:
        write_image(codec_mod.defend(read_image(src), cfg), args.out)
        _emit(args, {"format": 1, "out": str(args.out)}, f"wrote {args.out}")
    return EXIT_OK


def _cmd_encode(args) -> int:
    cfg = _codec_config(args)
    src = Path(args.input)
    if src.is_dir():
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)

        def run(item):
            name, img = item
            codec_mod.save_archive(codec_mod.encode(img, cfg),
                                   out_dir / (Path(name).stem + ".dsh"))
            return name

        names = _map_jobs(run, _load_dir(src), args.jobs)
        _emit(args, {"format": 1, "count": len(names), "out": str(out_dir)},
              f"encoded {len(names)} image(s) into {out_dir}")
    else:
        codec_mod.save_archive(codec_mod.encode(read_image(src), cfg), args.out)
        _emit(args, {"format": 1, "out": str(args.out)}, f"wrote {args.out}")
    return EXIT_OK


def _cmd_decode(args) -> int:
    cfg = _codec_config(args)
    src = Path(args.input)
    if src.is_dir():
        paths = sorted(src.glob("*.dsh"))
        if not paths:
            raise ImageFormatError(f"{src}: no .dsh archives found")
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)

        def run(path):
            archive = codec_mod.load_archive(path, cfg)
            write_image(codec_mod.decode(archive), out_dir / (path.stem + ".png"))
            return path.name

        names = _map_jobs(run, paths, args.jobs)
        _emit(args, {"format": 1, "count": len(names), "out": str(out_dir)},
              f"decoded {len(names)} archive(s) into {out_dir}")
    else:
        archive = codec_mod.load_archive(src, cfg)
        write_image(codec_mod.decode(archive), args.out)
        _emit(args, {"format": 1, "out": str(args.out)}, f"wrote {args.out}")
    return EXIT_OK


def _cmd_scale_table(args) -> int:
    scaled = codec_mod.scale_table(load_table(args.table), args.quality)
    save_table(scaled, args.out)
    _emit(args, {"format": 1, "out": str(args.out)}, f"wrote {args.out}")
    return EXIT_OK


def _cmd_export_augment(args) -> int:
    cfg = _codec_config(args)
    qualities = [int(q) for q in args.qualities.split(",") if q.strip()]
    manifest = augment_mod.export(
        _load_dir(args.images), cfg, args.out,
        qualities=qualities, sigma=args.sigma, xi=args.xi,
        seed=args.seed, epochs=args.epochs,
    )
    _emit(args, {"format": 1, "out": str(args.out),
                 "qualities": list(manifest.qualities)},
          f"exported {len(manifest.files)} file(s) into {args.out}")
    return EXIT_OK


def _cmd_vote(args) -> int:
    rule = vote_mod.AVERAGE if args.rule == "average" else vote_mod.MAJORITY
    decisions = vote_mod.vote_files(args.scores, rule=rule)
    lines = "\n".join(json.dumps(d) for d in decisions)
    if args.out:
        Path(args.out).write_text(lines + "\n")
        _emit(args, {"format": 1, "count": len(decisions), "out": str(args.out)},
              f"wrote {len(decisions)} decision(s) to {args.out}")
    else:
        print(lines)
    return EXIT_OK


def _cmd_ablate(args) -> int:
    benign = [img for _, img in _load_dir(args.benign_dir)]
    adv = [img for _, img in _load_dir(args.adv_dir)]
    table = load_table(args.table)
    rows = codec_mod.ablate(
        benign, adv, table,
        std_quality=args.std_quality, opt_quality=args.opt_quality,
    )
    doc = {
        "format": 1,
        "rows": [
            {
                "label": r.label,
                "color_path": r.color_path,
                "standard_table": r.standard_table,
                "quality": r.quality,
                "mean_benign_psnr": r.mean_benign_psnr,
                "mean_suppression": r.mean_suppression,
            }
            for r in rows
        ],
    }
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    if args.csv:
        print("label,color_path,standard_table,quality,mean_benign_psnr,mean_suppression")
        for r in rows:
            print(f"{r.label},{r.color_path},{r.standard_table},{r.quality},"
                  f"{r.mean_benign_psnr:.4f},{r.mean_suppression:.6f}")
    elif args.json:
        print(json.dumps(doc))
    else:
        for r in rows:
            print(f"{r.label:22s} psnr={r.mean_benign_psnr:7.2f} dB "
                  f"suppression={r.mean_suppression:.4f}")
    return EXIT_OK


_COMMANDS = {
    "analyze": _cmd_analyze,
    "ratio": _cmd_ratio,
    "perturb": _cmd_perturb,
    "design": _cmd_design,
    "defend": _cmd_defend,
    "encode": _cmd_encode,
    "decode": _cmd_decode,
    "scale-table": _cmd_scale_table,
    "export-augment": _cmd_export_augment,
    "vote": _cmd_vote,
    "ablate": _cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EvaluatorError as exc:
        print(f"evaluator error: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR
    except ImageFormatError as exc:
        print(f"image error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FileNotFoundError, IsADirectoryError, PermissionError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, DctShieldError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
