"""
Tensor-train completion of images, videos and general tensors.

Subcommands: complete, cv, mask, metrics, synth.
Exit codes: 0 success, 2 configuration/input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

import numpy as np

from src.als_solver import (
    NumericalFailure,
    SolverOptions,
    build_grouped_problem,
    build_problem,
    complete,
    complete_grouped,
    ungroup_dense,
)
from src.discord_notify import notify_run
from src.generator.synthetic import image_instance, low_rank_instance, video_instance
from src.image_io import ImageFormatError, load_image, load_video, read_maxval, save_image, save_video
from src.masks import load_mask, make_mask, observe, save_mask
from src.metrics import psnr, rse
from src.rank_planner import (
    crop_dense,
    cross_validate,
    factorize_dims,
    flatten_factors,
    group_factorization,
    pad_dims,
    parameter_count,
    problem_sizes,
    rank_schedule,
)
from src.run_artifacts import (
    RUN_MANIFEST_NAME,
    build_run_manifest,
    validate_run_manifest,
    write_cv_reports,
    write_diagnostics_csv,
    write_json,
)
from src.sampling import ObservationSet
from src.settings import (
    DEFAULT_SETTINGS_PATH,
    CompletionSettings,
    ConfigError,
    apply_overrides,
    load_settings,
    resolve_discord_webhook_url,
    resolve_settings,
)
from src.tensor_core import DenseTensor, reshape
from src.tt_format import contract_full, save_tt

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
IMAGE_SUFFIXES = (".ppm", ".pgm", ".pnm")


@contextmanager
def input_validation(stage: str) -> Iterator[None]:
    """Report malformed inputs raised inside the block as `ConfigError`."""
    try:
        yield
    except (ConfigError, ImageFormatError):
        raise
    except (ValueError, RuntimeError) as exc:
        raise ConfigError(f"{stage}: {exc}") from exc


def load_tensor(path: str) -> tuple[DenseTensor, str]:
    """Load an image, a frame directory or a `.npy` array; returns (tensor, kind)."""
    source = Path(path)
    if source.is_dir():
        return load_video(source), "video"
    if not source.exists():
        raise FileNotFoundError(f"input not found: {source}")
    if source.suffix.lower() in IMAGE_SUFFIXES:
        return load_image(source), "image"
    if source.suffix.lower() == ".npy":
        try:
            return DenseTensor.from_array(np.load(source, allow_pickle=False)), "array"
        except (OSError, ValueError) as exc:
            raise RuntimeError(f"Failed to read tensor array: {source}") from exc
    raise ConfigError(f"unsupported input type: {source}")


def _pad(t: DenseTensor, dims: list[int]) -> DenseTensor:
    widths = [(0, target - dim) for dim, target in zip(t.dims, dims)]
    return DenseTensor.from_array(np.pad(t.to_array(), widths))


def _plan(settings: CompletionSettings, dims: tuple[int, ...]) -> dict:
    """Factorization and ranks for `dims`, honouring the grouped layout."""
    grouped = settings.grouped_modes
    spatial_dims = dims[: len(dims) - grouped] if grouped else dims
    if settings.factorization:
        groups = group_factorization(spatial_dims, settings.factorization, settings.max_factor)
    else:
        groups = factorize_dims(spatial_dims, settings.max_factor, settings.problem_cap)
    chain = flatten_factors(groups)
    if grouped:
        group_size = int(np.prod(dims[len(dims) - grouped :]))
        chain = [chain[0] * group_size, *chain[1:]]

    if settings.ranks is not None:
        ranks = list(settings.ranks)
        if len(ranks) != len(chain) - 1:
            raise ConfigError(
                f"settings: ranks needs {len(chain) - 1} entries for chain {chain}, got {ranks}"
            )
    else:
        schedule = settings.rank_schedule
        ranks = rank_schedule(
            chain, schedule.r2, schedule.r_mid, schedule.r_dm1, schedule.r_d, settings.problem_cap
        )
    if not grouped:
        out_of_range = [mode for mode in settings.tv_modes if not 1 <= mode <= len(groups)]
        if out_of_range:
            raise ConfigError(f"settings: tv.modes {out_of_range} out of range 1..{len(groups)}")
    return {"mode_factors": groups, "chain": chain, "ranks": ranks}


def _observations(settings: CompletionSettings, tensor: DenseTensor, kind: str) -> ObservationSet:
    if settings.mask_path:
        return load_mask(settings.mask_path, tensor)
    skeleton = make_mask(
        tensor.dims,
        settings.mask_fraction,
        mode=settings.mask_mode,
        seed=settings.mask_seed,
        channel_modes=1 if kind in ("image", "video") else 0,
    )
    return observe(tensor, skeleton)


def print_plan(plan: dict, dims: tuple[int, ...]) -> None:
    print("Completion plan")
    print(f"- dims: {list(dims)}")
    print(f"- factorization: {plan['mode_factors']}")
    print(f"- chain_dims: {plan['chain']}")
    print(f"- ranks: {plan['ranks']}")
    print(f"- problem_sizes: {problem_sizes(plan['chain'], plan['ranks'])}")
    print(f"- parameter_count: {parameter_count(plan['chain'], plan['ranks'])}")


def print_run_summary(summary: dict) -> None:
    print("Completion report")
    for key, value in summary.items():
        print(f"- {key}: {value}")


def _save_completed(output_dir: Path, completed: DenseTensor, kind: str, maxval: int = 255) -> list[str]:
    written = []
    if kind == "image" and completed.ndim == 3:
        path = output_dir / "completed.ppm"
        save_image(path, completed, maxval=maxval)
        written.append(str(path))
    else:
        path = output_dir / "completed.npy"
        np.save(path, completed.to_array())
        written.append(str(path))
        if kind == "video":
            save_video(output_dir / "completed_frames", completed)
    return written


# pylint: disable=too-many-locals
def run_complete(settings: CompletionSettings, dry_run: bool = False) -> dict:
    """Load inputs, plan, solve and write every artifact; returns the run summary."""
    if not settings.input:
        raise ConfigError("settings: input is required for complete")
    with input_validation("complete"):
        tensor, kind = load_tensor(settings.input)
        maxval = read_maxval(settings.input) if kind == "image" else 255
        if settings.dims:
            tensor = reshape(tensor, settings.dims)
        original_dims = tensor.dims
        truth = load_tensor(settings.truth)[0] if settings.truth else tensor
        if truth.dims != original_dims:
            raise ConfigError(f"truth dims {list(truth.dims)} differ from input dims {list(original_dims)}")
        observations = _observations(settings, tensor, kind)

        if settings.pad_to:
            padded = pad_dims(original_dims, settings.pad_to)
            tensor = _pad(tensor, padded)
            observations = ObservationSet(
                dims=tuple(padded), indices=observations.indices, values=observations.values
            )

        plan = _plan(settings, tensor.dims)
    print_plan(plan, tensor.dims)
    if dry_run:
        return {"status": "dry-run", "ranks": plan["ranks"], "chain_dims": plan["chain"]}

    options = SolverOptions(
        max_sweeps=settings.sweeps,
        residual_tolerance=settings.tolerance,
        residual_threshold=settings.residual_threshold,
        adapt_lambda=settings.tv_adapt,
    )
    if settings.grouped_modes:
        if settings.tv_modes:
            LOGGER.warning("TV terms are ignored in the grouped formulation")
        problem = build_grouped_problem(
            observations,
            plan["mode_factors"],
            settings.grouped_modes,
            plan["ranks"],
            gamma=settings.gamma,
            options=options,
            init=settings.init,
            box_factor=settings.box_factor,
            resized_modes=settings.resized_modes,
        )
        tt, diagnostics = complete_grouped(problem)
        completed = ungroup_dense(contract_full(tt), tensor.dims, problem.group_size)
    else:
        problem = build_problem(
            observations,
            plan["mode_factors"],
            plan["ranks"],
            tv_modes=settings.tv_modes,
            tv_weight=settings.tv_lambda,
            gamma=settings.gamma,
            options=options,
            init=settings.init,
            box_factor=settings.box_factor,
            resized_modes=settings.resized_modes,
        )
        tt, diagnostics = complete(problem)
        completed = reshape(contract_full(tt), tensor.dims)
    if settings.pad_to:
        completed = crop_dense(completed, original_dims)

    max_value = 1.0 if kind in ("image", "video") else float(np.max(np.abs(truth.data)) or 1.0)
    metrics = {
        "rse": rse(truth, completed),
        "psnr": psnr(truth, completed, max_value),
        "max_value": max_value,
        "observed_entries": observations.count,
        "train_residual": diagnostics.final_residual,
        "sweeps": diagnostics.sweeps_run,
        "stop_reason": diagnostics.stop_reason,
        "skipped_updates": diagnostics.skipped_updates,
        "lstsq_fallbacks": diagnostics.lstsq_fallbacks,
        "underdetermined": diagnostics.underdetermined,
        "ranks": list(problem.ranks),
        "chain_dims": list(problem.dims),
    }

    output_dir = Path(settings.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    artifacts = _save_completed(output_dir, completed, kind, maxval)
    tt_path = output_dir / "completed.tt.npz"
    save_tt(tt_path, tt)
    metrics_path = output_dir / "metrics.json"
    write_json(str(metrics_path), metrics)
    diagnostics_path = output_dir / "diagnostics.csv"
    write_diagnostics_csv(str(diagnostics_path), diagnostics)
    artifacts += [str(tt_path), str(metrics_path), str(diagnostics_path)]

    manifest_path = output_dir / RUN_MANIFEST_NAME
    manifest = build_run_manifest(
        artifacts,
        {"input": settings.input, "seed": settings.seed, "init": settings.init, "ranks": list(problem.ranks)},
    )
    write_json(str(manifest_path), manifest)
    validate_run_manifest(str(manifest_path))

    return {
        "status": "finished",
        "input": settings.input,
        "rse": f"{metrics['rse']:.6e}",
        "psnr": f"{metrics['psnr']:.3f}",
        "sweeps": diagnostics.sweeps_run,
        "stop_reason": diagnostics.stop_reason,
        "output_dir": str(output_dir),
    }


def run_cv(settings: CompletionSettings) -> dict:
    if not settings.cv_candidates:
        raise ConfigError("settings: cv.candidates must list at least one rank schedule")
    if not settings.input:
        raise ConfigError("settings: input is required for cv")
    with input_validation("cv"):
        tensor, kind = load_tensor(settings.input)
        if settings.dims:
            tensor = reshape(tensor, settings.dims)
        observations = _observations(settings, tensor, kind)
        plan = _plan(settings, tensor.dims)

    result = cross_validate(
        observations,
        plan["mode_factors"],
        settings.cv_candidates,
        trials=settings.cv_trials,
        holdout=settings.cv_holdout,
        seed=settings.seed,
        options=SolverOptions(
            max_sweeps=settings.sweeps,
            residual_tolerance=settings.tolerance,
            residual_threshold=settings.residual_threshold,
            adapt_lambda=settings.tv_adapt,
        ),
        init=settings.init,
        tv_modes=settings.tv_modes,
        tv_weight=settings.tv_lambda,
        gamma=settings.gamma,
        box_factor=settings.box_factor,
        resized_modes=settings.resized_modes,
    )
    output_dir = Path(settings.output_dir)
    write_cv_reports(
        str(output_dir / "cv_scores.csv"), str(output_dir / "cv_selected.json"), result
    )
    return {
        "status": "finished",
        "selected": result.selected.candidate.label(),
        "ranks": list(result.selected.ranks),
        "mean_rse": f"{result.selected.mean_rse:.6e}",
        "candidates": len(result.scores),
    }


def run_mask(args: argparse.Namespace) -> dict:
    if args.input:
        tensor, kind = load_tensor(args.input)
        dims = tensor.dims
        channel_modes = args.channel_modes if args.channel_modes is not None else int(kind != "array")
    elif args.dims:
        dims = tuple(int(item) for item in args.dims.replace("x", ",").split(","))
        channel_modes = args.channel_modes or 0
    else:
        raise ConfigError("mask needs --input or --dims")
    skeleton = make_mask(dims, args.fraction, mode=args.mode, seed=args.seed, channel_modes=channel_modes)
    save_mask(args.output, skeleton)
    return {"status": "finished", "dims": list(dims), "observed_entries": skeleton.count, "output": args.output}


def run_metrics(args: argparse.Namespace) -> dict:
    truth, _ = load_tensor(args.truth)
    estimate, _ = load_tensor(args.estimate)
    return {
        "status": "finished",
        "rse": f"{rse(truth, estimate):.6e}",
        "psnr": f"{psnr(truth, estimate, args.max_value):.3f}",
    }


def run_synth(args: argparse.Namespace) -> dict:
    output_dir = Path(args.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    if args.kind == "tt":
        dims = [int(item) for item in args.dims.split(",")]
        ranks = [int(item) for item in args.ranks.split(",")]
        instance = low_rank_instance(dims, ranks, args.fraction, args.seed)
        truth_path = output_dir / "truth.npy"
        np.save(truth_path, instance.truth.to_array())
    elif args.kind == "image":
        instance = image_instance(args.height, args.width, args.fraction, args.seed)
        truth_path = output_dir / "truth.ppm"
        save_image(truth_path, instance.truth)
    else:
        instance = video_instance(args.height, args.width, args.frames, 3, args.fraction, args.seed)
        truth_path = output_dir / "truth_frames"
        save_video(truth_path, instance.truth)
    mask_path = output_dir / "mask.npy"
    save_mask(mask_path, instance.observations)
    return {
        "status": "finished",
        "kind": args.kind,
        "truth": str(truth_path),
        "mask": str(mask_path),
        "observed_entries": instance.observations.count,
    }


def _settings_from_args(args: argparse.Namespace) -> CompletionSettings:
    # A missing default settings.yaml means "flags only"; an explicit --config must exist.
    if Path(args.config).exists() or args.config != DEFAULT_SETTINGS_PATH:
        raw = load_settings(args.config)
    else:
        raw = {}
    overrides = {
        "input": args.input,
        "mask.path": args.mask,
        "mask.fraction": args.fraction,
        "mask.mode": args.mask_mode,
        "truth": getattr(args, "truth", None),
        "output_dir": args.output_dir,
        "factorization": args.factorization,
        "ranks": args.ranks,
        "tv.modes": args.tv_modes,
        "tv.lambda": args.tv_lambda,
        "tv.adapt": False if args.no_adapt else None,
        "gamma": args.gamma,
        "init": args.init,
        "box_factor": args.box_factor,
        "sweeps": args.sweeps,
        "tolerance": args.tolerance,
        "grouped_modes": args.grouped_modes,
        "seed": args.seed,
        "pad_to": args.pad_to,
    }
    if args.tv_modes == "none":
        overrides["tv.modes"] = []
    return resolve_settings(apply_overrides(raw, overrides))


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=DEFAULT_SETTINGS_PATH, help="Path to settings YAML")
    parser.add_argument("--input", default=None, help="Image (.ppm/.pgm), frame directory or .npy tensor")
    parser.add_argument("--mask", default=None, help="Mask file (.csv records, .npy, .pgm/.ppm)")
    parser.add_argument("--fraction", type=float, default=None, help="Observed fraction for generated masks")
    parser.add_argument("--mask-mode", choices=["iid", "sensor"], default=None)
    parser.add_argument("--output-dir", default=None)
    parser.add_argument("--factorization", default=None, help="Flat factor list, e.g. 6,4,4,6,4,4,3")
    parser.add_argument("--ranks", default=None, help="Explicit ranks R_2..R_d, e.g. 4,8,8,3")
    parser.add_argument("--tv-modes", default=None, help="Comma separated TV modes, or 'none'")
    parser.add_argument("--tv-lambda", type=float, default=None)
    parser.add_argument("--no-adapt", action="store_true", help="Keep TV weights fixed")
    parser.add_argument("--gamma", type=float, default=None, help="Tikhonov weight")
    parser.add_argument("--init", choices=["interp", "zero"], default=None)
    parser.add_argument("--box-factor", type=int, default=None, help="Downscale factor h")
    parser.add_argument("--sweeps", type=int, default=None)
    parser.add_argument("--tolerance", type=float, default=None)
    parser.add_argument("--grouped-modes", type=int, default=None, help="Trailing modes folded into core 1")
    parser.add_argument("--pad-to", default=None, help="Zero-pad dims, e.g. 128,128,3")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--no-discord", action="store_true", help="Skip Discord notification")
    parser.add_argument("--verbose", action="store_true")


def _build_cli_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Tensor-train completion of images, videos and tensors.")
    commands = parser.add_subparsers(dest="command", required=True)

    complete_parser = commands.add_parser("complete", help="Complete a tensor from its observed entries")
    _add_run_arguments(complete_parser)
    complete_parser.add_argument("--truth", default=None, help="Ground truth for metrics")
    complete_parser.add_argument("--dry-run", action="store_true", help="Print the plan without solving")

    cv_parser = commands.add_parser("cv", help="Cross-validate rank schedules")
    _add_run_arguments(cv_parser)

    mask_parser = commands.add_parser("mask", help="Generate a seeded observation mask")
    mask_parser.add_argument("--input", default=None)
    mask_parser.add_argument("--dims", default=None, help="Tensor dims, e.g. 32,32,3")
    mask_parser.add_argument("--fraction", type=float, required=True)
    mask_parser.add_argument("--mode", choices=["iid", "sensor"], default="iid")
    mask_parser.add_argument("--channel-modes", type=int, default=None)
    mask_parser.add_argument("--seed", type=int, default=0)
    mask_parser.add_argument("--output", required=True, help="Output mask (.csv or .npy)")
    mask_parser.add_argument("--verbose", action="store_true")

    metrics_parser = commands.add_parser("metrics", help="Compare two tensors")
    metrics_parser.add_argument("truth")
    metrics_parser.add_argument("estimate")
    metrics_parser.add_argument("--max-value", type=float, default=1.0)
    metrics_parser.add_argument("--verbose", action="store_true")

    synth_parser = commands.add_parser("synth", help="Write a seeded synthetic instance and mask")
    synth_parser.add_argument("--kind", choices=["tt", "image", "video"], default="image")
    synth_parser.add_argument("--dims", default="5,6,6,5")
    synth_parser.add_argument("--ranks", default="2,3,2")
    synth_parser.add_argument("--height", type=int, default=32)
    synth_parser.add_argument("--width", type=int, default=32)
    synth_parser.add_argument("--frames", type=int, default=4)
    synth_parser.add_argument("--fraction", type=float, default=0.1)
    synth_parser.add_argument("--seed", type=int, default=0)
    synth_parser.add_argument("--output-dir", required=True)
    synth_parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    """CLI entry point."""
    parser = _build_cli_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    settings: CompletionSettings | None = None
    try:
        if args.command in ("complete", "cv"):
            with input_validation("settings"):
                settings = _settings_from_args(args)
            if args.command == "complete":
                summary = run_complete(settings, dry_run=args.dry_run)
            else:
                summary = run_cv(settings)
        else:
            runner = {"mask": run_mask, "metrics": run_metrics, "synth": run_synth}[args.command]
            with input_validation(args.command):
                summary = runner(args)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        _notify_failure(args, settings, traceback.format_exc())
        return EXIT_NUMERICAL
    except (ConfigError, ImageFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _notify_failure(args, settings, traceback.format_exc())
        return EXIT_CONFIG
    except Exception:
        err = traceback.format_exc()
        print(err, file=sys.stderr)
        _notify_failure(args, settings, err)
        raise

    print_run_summary(summary)
    if args.command in ("complete", "cv") and not args.no_discord and summary["status"] == "finished":
        notify_run(resolve_discord_webhook_url(settings), {"command": args.command, **summary})
    return EXIT_OK


def _notify_failure(args: argparse.Namespace, settings: CompletionSettings | None, err: str) -> None:
    if args.command not in ("complete", "cv") or args.no_discord:
        return
    notify_run(
        resolve_discord_webhook_url(settings),
        {"status": "failed", "command": args.command, "error": err[-1500:]},
    )


if __name__ == "__main__":
    raise SystemExit(main())
