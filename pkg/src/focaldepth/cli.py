"""Command-line entry point.

    focaldepth [options] {synth,aif,dff,estimate,eval,gradcheck,pipeline}

Every configuration key is also a flag (``--lr 0.01`` or ``--lr=0.01``) and
overrides the value from ``--config``. Exit codes: 0 success, 1 operational
error, 2 usage/configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io as fio
from .config import ConfigError, PipelineConfig, parse_config

log = logging.getLogger("focaldepth")

SUBCOMMANDS = ("synth", "aif", "dff", "estimate", "eval", "gradcheck", "pipeline")


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        self.stage = stage
        super().__init__(f"{stage}: {exc}")


class _Stage:
    """Context manager tagging any failure with the pipeline stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, typ, exc, tb):
        if exc is not None and not isinstance(exc, (StageError, ConfigError, KeyboardInterrupt)):
            raise StageError(self.name, exc) from exc
        return False


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--threads", type=int, default=1, help="kernel threads (never changes results)")
    common.add_argument("-v", "--verbose", action="store_true")
    for f in fields(PipelineConfig):
        flags = [f"--{f.name}"]
        if "_" in f.name:
            flags.append(f"--{f.name.replace('_', '-')}")
        common.add_argument(*flags, dest=f"cfg_{f.name}", metavar="VALUE", default=None)

    parser = argparse.ArgumentParser(prog="focaldepth", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="render a focal stack from RGB-D or a synthetic scene")
    p = sub.add_parser("aif", parents=[common], help="composite an all-in-focus image from a stack")
    p.add_argument("--dump-fv", action="store_true", help="also write the focus volume as PFM slices")
    sub.add_parser("dff", parents=[common], help="argmax depth-from-focus baseline")
    sub.add_parser("estimate", parents=[common], help="fit depth by re-rendering the stack")
    p = sub.add_parser("eval", parents=[common], help="score a depth map, or run the benchmark suite")
    p.add_argument("--benchmark", action="store_true", help="run the synthetic benchmark suite")
    p.add_argument("--suite-size", type=int, default=64, help="benchmark scene side length in pixels")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference checks of the adjoint")
    sub.add_parser("pipeline", parents=[common], help="synth -> aif -> estimate -> eval")
    return parser


def _overrides(args) -> dict:
    return {
        k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None
    }


def _out_dir(cfg) -> Path:
    return fio.ensure_dir(cfg.out_dir)


def _write_effective_config(cfg, out: Path):
    (out / "effective-config.txt").write_text(cfg.to_text())


# -- stages ------------------------------------------------------------------


def _load_rgbd(cfg):
    if cfg.rgb_path:
        if not cfg.depth_path:
            raise ValueError("rgb_path given without depth_path")
        aif = fio.load_image(cfg.rgb_path)
        depth, rep = fio.load_depth(cfg.depth_path, depth_range=cfg.depth_range())
        if rep.n_invalid or rep.n_clamped:
            log.warning("depth repaired: %d invalid, %d clamped pixels", rep.n_invalid, rep.n_clamped)
        return aif, depth
    from .scenes import make_scene

    return make_scene(cfg.scene_spec(), cfg.depth_range())


def stage_synth(cfg, out: Path):
    from .plotting import plot_stack, save_depth_preview
    from .render import render_stack

    with _Stage("synth"):
        aif, depth = _load_rgbd(cfg)
        stack = render_stack(aif, depth, cfg.focus_schedule(), cfg.lens())
        stack_dir = Path(cfg.stack_dir) if cfg.stack_dir else out / "stack"
        fio.save_stack(stack_dir, stack)
        fio.save_image(out / "aif_gt.png", aif)
        fio.save_image(out / "aif_gt.pfm", aif)
        fio.save_depth(out / "gt_depth.pfm", depth, "pfm_m")
        save_depth_preview(out / "gt_depth.png", depth, cfg.d_min, cfg.d_max)
        plot_stack(out / "stack_montage.png", stack)
    return aif, depth, stack, stack_dir


def _load_stack(cfg, out):
    stack_dir = Path(cfg.stack_dir) if cfg.stack_dir else out / "stack"
    return fio.load_stack(stack_dir)


def stage_aif(cfg, out: Path, stack, dump_fv=False):
    from .aif import composite_aif, focus_measure

    with _Stage("aif"):
        fv = focus_measure(stack, cfg.fv_sigma)
        aif = composite_aif(stack, fv, cfg.aif_mode, cfg.aif_tau())
        fio.save_image(out / "aif.png", aif)
        fio.save_image(out / "aif.pfm", aif)
        if dump_fv:
            for s in range(fv.shape[2]):
                fio.write_pfm(out / f"fv_{s:02d}.pfm", fv[:, :, s])
    return aif, fv


def stage_dff(cfg, out: Path, stack, fv=None):
    from .aif import dff_argmax_depth, focus_measure
    from .plotting import save_depth_preview

    with _Stage("dff"):
        if fv is None:
            fv = focus_measure(stack, cfg.fv_sigma)
        depth = dff_argmax_depth(fv, stack.schedule)
        fio.save_depth(out / "dff_depth.pfm", depth, "pfm_m")
        save_depth_preview(out / "dff_depth.png", depth, cfg.d_min, cfg.d_max)
    return depth


def stage_estimate(cfg, out: Path, stack, aif, gt=None):
    from .estimate import estimate_depth
    from .metrics import interior_mask
    from .plotting import plot_depth_comparison, plot_loss_trace, save_depth_preview

    with _Stage("estimate"):
        lens = cfg.lens()
        mask = interior_mask(gt.shape, lens.max_kernel_radius) if gt is not None else None
        if mask is not None and not mask.any():
            mask = None
        result = estimate_depth(
            stack, aif, lens, cfg.loss_config(), init=cfg.init_spec(),
            depth_range=cfg.depth_range(), gt=gt, mask=mask, fv_sigma=cfg.fv_sigma,
        )
        fio.save_depth(out / "depth.pfm", result.depth, "pfm_m")
        save_depth_preview(out / "depth.png", result.depth, cfg.d_min, cfg.d_max)
        fio.write_rows(out / "trace.csv", ("iteration", "loss", "rmse_if_gt_available"), result.trace_rows())
        plot_loss_trace(out / "trace.png", result.losses, result.rmses)
        plot_depth_comparison(out / "depth_comparison.png", aif, result.depth, gt, cfg.d_min, cfg.d_max)
    return result


def stage_eval(cfg, out: Path, preds: dict, gt, scene="scene"):
    from .metrics import REPORT_HEADER, evaluate, interior_mask

    with _Stage("eval"):
        mask = interior_mask(gt.shape, cfg.max_kernel_radius)
        if not mask.any():
            log.warning("image smaller than twice the border margin; scoring all pixels")
            mask = None
        reports = [evaluate(p, gt, mask, label, scene) for label, p in preds.items()]
        fio.write_rows(out / "metrics.csv", REPORT_HEADER, [r.row() for r in reports])
        for r in reports:
            print(f"{r.label:<12} rmse={r.rmse:.4f} m  d1={r.delta1:.3f} d2={r.delta2:.3f} d3={r.delta3:.3f}")
    return reports


def stage_benchmark(cfg, out: Path, size: int):
    from .benchmark import default_suite, run_benchmark
    from .plotting import plot_benchmark

    with _Stage("eval"):
        suite = default_suite(size, cfg.seed)
        result = run_benchmark(
            suite, cfg.lens(), cfg.focus_schedule(), cfg.loss_config(), init=cfg.init_spec(),
            depth_range=cfg.depth_range(), fv_sigma=cfg.fv_sigma, aif_mode=cfg.aif_mode, tau=cfg.aif_tau(),
        )
        from .metrics import REPORT_HEADER

        fio.write_rows(out / "report.csv", REPORT_HEADER, result.rows())
        table = result.table()
        (out / "report.txt").write_text(table + "\n")
        plot_benchmark(out / "benchmark.png", result)
        print(table)
    return result


def stage_tiling(cfg, out: Path):
    from .optics import check_schedule_tiling
    from .plotting import plot_tiling

    rep = check_schedule_tiling(cfg.focus_schedule(), cfg.lens(), cfg.coc_threshold, cfg.depth_range())
    fio.write_rows(out / "tiling.csv", ("pair_index", "gap_diopters"), [(i, repr(g)) for i, g in rep.rows()])
    plot_tiling(out / "tiling.png", cfg.focus_schedule(), cfg.lens(), cfg.coc_threshold, cfg.depth_range())
    return rep


# -- subcommands -------------------------------------------------------------


def run_subcommand(name: str, cfg: PipelineConfig, args) -> int:
    out = _out_dir(cfg)
    _write_effective_config(cfg, out)
    if name == "synth":
        _, _, stack, stack_dir = stage_synth(cfg, out)
        print(f"wrote {len(stack)} slices to {stack_dir}")
    elif name == "aif":
        stack = _load_stack(cfg, out)
        stage_aif(cfg, out, stack, getattr(args, "dump_fv", False))
    elif name == "dff":
        stage_dff(cfg, out, _load_stack(cfg, out))
    elif name == "estimate":
        with _Stage("estimate"):
            stack = _load_stack(cfg, out)
            gt = fio.load_depth(cfg.gt_path, depth_range=cfg.depth_range())[0] if cfg.gt_path else None
            aif = fio.load_image(cfg.aif_path) if cfg.aif_path else None
        if aif is None:
            aif, _ = stage_aif(cfg, out, stack)
        result = stage_estimate(cfg, out, stack, aif, gt)
        print(f"{result.iterations} iterations, final loss {result.losses[-1] if result.losses else float('nan'):.6g}")
    elif name == "eval":
        if args.benchmark:
            stage_benchmark(cfg, out, args.suite_size)
        else:
            with _Stage("eval"):
                if not cfg.pred_path or not cfg.gt_path:
                    raise ValueError("eval needs pred_path and gt_path (or --benchmark)")
                pred = fio.load_depth(cfg.pred_path, depth_range=cfg.depth_range())[0]
                gt = fio.load_depth(cfg.gt_path, depth_range=cfg.depth_range())[0]
            stage_eval(cfg, out, {"pred": pred}, gt, Path(cfg.pred_path).stem)
    elif name == "gradcheck":
        from .gradcheck import run_suite

        with _Stage("gradcheck"):
            results = run_suite(cfg.seed, cfg.lens(), cfg.focus_schedule())
        fio.write_rows(
            out / "gradcheck.csv", ("check", "seed", "pixels", "max_rel_error", "tolerance", "passed"),
            [(r.name, r.seed, r.n_checked, repr(r.max_rel_error), r.tolerance, int(r.passed)) for r in results],
        )
        for r in results:
            print(r.line())
        return 0 if all(r.passed for r in results) else 1
    elif name == "pipeline":
        aif_gt, gt, stack, _ = stage_synth(cfg, out)
        aif, fv = stage_aif(cfg, out, stack)
        dff = stage_dff(cfg, out, stack, fv)
        result = stage_estimate(cfg, out, stack, aif, gt)
        stage_eval(cfg, out, {"dff": dff, "estimate": result.depth}, gt, cfg.scene_spec().name)
        with _Stage("tiling"):
            stage_tiling(cfg, out)
    else:
        raise ValueError(f"unknown subcommand {name}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = parse_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"focaldepth: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"focaldepth: cannot read config: {exc}", file=sys.stderr)
        return 2
    from .render import set_threads

    used = set_threads(args.threads)
    if used != args.threads:
        log.info("using %d thread(s) (requested %d)", used, args.threads)
    try:
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            return run_subcommand(args.command, cfg, args)
    except StageError as exc:
        print(f"focaldepth: error in stage {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"focaldepth: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
