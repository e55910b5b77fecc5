# core/experiments.py
"""
Canned experiments behind the CLI. Each kind writes CSV tables (first column is
``t`` or the swept variable), optional SVG views of them and a run manifest from
which the run can be repeated bit for bit.
"""

import json
import logging
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

import matplotlib
import numpy as np
import psutil
import scipy
from tqdm import tqdm

from core import __version__
from core.artifacts import bar_plot, line_plot, write_csv
from core.config_manager import ConfigManager
from core.default_config import CONSTANTS
from core.denoiser import DenoiserModel, build_model, data_mode, sample_data
from core.edits import (ColorEdit, CondSwap, Flip, Shift, color_edit_generate, cond_swap_generate,
                        flip_data, flip_latent, shift_data, shift_latent)
from core.errors import InvalidConfigError, NumericalError
from core.inversion import cyclediffusion_invert, ddim_invert, edit_friendly_invert
from core.latent import LatentCode, Method
from core.latent_io import load_latent, save_latent
from core.numerics import RNG_ALGORITHM, RngStream, Tensor, max_abs_error, rms, rms_distance
from core.sampler import ddpm_sample, generate_from_latent
from core.schedule import Schedule, schedule_from_config
from core.stats import (angle_histogram, consecutive_corr, diversity, fraction_where, per_step_std,
                        shift_mse)

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
COMPARED_METHODS = (Method.NATIVE, Method.EDIT_FRIENDLY, Method.CYCLEDIFFUSION)

R = TypeVar("R")


def run_replications(task: Callable[[int, RngStream], R], rng: RngStream, label: str, count: int,
                     workers: int = 1, progress: bool = False) -> List[R]:
    """
    Run ``task(index, stream)`` for every replication index.

    Child streams are derived up front from (label, index), so results do not
    depend on the worker count or on completion order; they come back ordered by
    index.
    """
    streams = rng.children(label, count)
    workers = max(1, min(int(workers), count))
    with tqdm(total=count, desc=label, disable=not progress, leave=False) as bar:
        if workers == 1:
            results = []
            for index, stream in enumerate(streams):
                results.append(task(index, stream))
                bar.update()
            return results
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix=label) as pool:
            futures = [pool.submit(task, index, stream) for index, stream in enumerate(streams)]
            results = []
            for future in futures:
                results.append(future.result())
                bar.update()
            return results


@dataclass
class ExperimentResult:
    kind: str
    output_directory: str
    summary: Dict[str, Any] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)
    plots: List[str] = field(default_factory=list)
    manifest_path: Optional[str] = None
    elapsed_seconds: float = 0.0


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Method):
        return value.value
    raise TypeError(f"cannot serialize {type(value).__name__}")


def host_facts() -> Dict[str, Any]:
    memory = psutil.virtual_memory()
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "physical_cpus": psutil.cpu_count(logical=False),
        "logical_cpus": psutil.cpu_count(logical=True),
        "total_memory_bytes": int(memory.total),
    }


def library_versions() -> Dict[str, str]:
    return {
        "ddpm_inversion": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
        "psutil": psutil.__version__,
    }


def _non_decreasing(values: Sequence[float]) -> bool:
    return bool(np.all(np.diff(np.asarray(values, dtype=np.float64)) >= 0.0))


def _strictly_increasing(values: Sequence[float]) -> bool:
    return bool(np.all(np.diff(np.asarray(values, dtype=np.float64)) > 0.0))


def build_mask(data_shape, mask_config: dict) -> np.ndarray:
    """Binary mask from ``{"rows": [r0, r1], "cols": [c0, c1]}`` or ``{"coordinates": [...]}``"""
    mask = np.zeros(data_shape)
    if "coordinates" in mask_config:
        flat = mask.reshape(-1)
        flat[np.asarray(mask_config["coordinates"], dtype=int)] = 1.0
        return mask
    if len(data_shape) != 2:
        raise InvalidConfigError("rows/cols masks need 2-D data; use 'coordinates' instead")
    try:
        r0, r1 = (int(value) for value in mask_config.get("rows", [0, data_shape[0]]))
        c0, c1 = (int(value) for value in mask_config.get("cols", [0, data_shape[1]]))
    except (TypeError, ValueError) as e:
        raise InvalidConfigError(f"color-edit mask {mask_config} needs [start, stop] rows and cols") from e
    mask[r0:r1, c0:c1] = 1.0
    if not mask.any():
        raise InvalidConfigError(f"color-edit mask {mask_config} selects no coordinates")
    return mask


class ExperimentRunner:
    def __init__(self, config_manager: ConfigManager, logger: Optional[logging.Logger] = None):
        """
        Initialize the runner for the configured experiment kind

        Args:
            config_manager (ConfigManager): validated configuration
            logger: Logger instance (defaults to this module's logger)
        """
        self.config_manager = config_manager
        self.logger = logger or logging.getLogger(__name__)
        self.kind = config_manager.get_kind()
        self.seed = config_manager.get_seed()
        self.samples = config_manager.get_samples()
        self.workers = config_manager.get_workers()
        self.progress = config_manager.get_progress_enabled()
        self.plots_enabled = config_manager.get_plots_enabled()
        self.output_directory = config_manager.get_output_directory()

        self.schedule: Schedule = schedule_from_config(config_manager.get_schedule_config())
        self.model: DenoiserModel = build_model(config_manager.get_model_declaration())
        self.rng = RngStream(self.seed)
        self._result = ExperimentResult(kind=self.kind, output_directory=self.output_directory)

        self.handlers: Dict[str, Callable[[], Dict[str, Any]]] = {
            "sample": self.run_sample,
            "invert": self.run_invert,
            "reconstruct": self.run_reconstruct,
            "toy2d-stats": self.run_toy2d_stats,
            "noise-stats": self.run_noise_stats,
            "shift": self.run_shift,
            "flip": self.run_flip,
            "color-edit": self.run_color_edit,
            "cond-swap": self.run_cond_swap,
            "sweep": self.run_sweep,
            "diversity": self.run_diversity,
        }

    # -- plumbing -----------------------------------------------------------------

    def _path(self, name: str) -> str:
        return os.path.join(self.output_directory, name)

    def _csv(self, name: str, header: Sequence[str], rows) -> None:
        self._result.artifacts[name] = write_csv(self._path(name), header, rows)

    def _plot(self, plotter: Callable, name: str, *args, **kwargs) -> None:
        if not self.plots_enabled:
            return
        plotter(self._path(name), *args, **kwargs)
        self._result.plots.append(name)

    def _replicate(self, task: Callable[[int, RngStream], R], label: str, count: Optional[int] = None) -> List[R]:
        count = self.samples if count is None else count
        self.logger.debug(f"Running {count} '{label}' replications on {self.workers} workers")
        return run_replications(task, self.rng.child(self.kind), label, count, self.workers, self.progress)

    def _latent_path(self) -> str:
        return self.config_manager.get_latent_path() or self._path(CONSTANTS["LATENT_FILE_NAME"])

    def _method(self) -> Method:
        try:
            return Method(self.config_manager.config["experiment"].get("method", "edit-friendly"))
        except ValueError as e:
            raise InvalidConfigError(f"unknown inversion method: {e}") from e

    def _invert(self, method: Method, x_0: Tensor, rng: RngStream, cond: Optional[str] = None,
                strength: Optional[float] = None) -> LatentCode:
        if method is Method.EDIT_FRIENDLY:
            return edit_friendly_invert(x_0, self.model, self.schedule, rng, cond, strength)
        if method is Method.CYCLEDIFFUSION:
            return cyclediffusion_invert(x_0, self.model, self.schedule, rng, cond, strength)
        if method is Method.DDIM:
            return ddim_invert(x_0, self.model, self.schedule, cond, strength)
        raise InvalidConfigError(f"'{method.value}' is not an inversion method")

    def _schedule_for(self, latent: LatentCode) -> Schedule:
        return self.schedule.with_eta(0.0) if latent.method is Method.DDIM else self.schedule

    def _require_samples(self, minimum: int) -> None:
        if self.samples < minimum:
            raise InvalidConfigError(f"'{self.kind}' needs experiment.samples >= {minimum}, got {self.samples}")

    def _write_manifest(self, elapsed: float) -> str:
        manifest = {
            "manifest_version": MANIFEST_VERSION,
            "kind": self.kind,
            "config": self.config_manager.as_dict(),
            "seeds": {"root": self.seed, "algorithm": RNG_ALGORITHM, "stream": self.kind},
            "schedule": self.schedule.to_dict(),
            "versions": library_versions(),
            "host": host_facts(),
            "elapsed_seconds": elapsed,
            "artifacts": {name: {"sha256": digest} for name, digest in sorted(self._result.artifacts.items())},
            "plots": list(self._result.plots),
            "summary": self._result.summary,
        }
        path = self._path(CONSTANTS["MANIFEST_NAME"])
        with open(path, 'w', encoding='utf-8') as handle:
            json.dump(manifest, handle, indent=2, default=_jsonable)
        return path

    def run(self) -> ExperimentResult:
        """
        Run the configured experiment and write its artifacts

        Returns:
            ExperimentResult: summary values, artifact digests and manifest path

        Raises:
            EditFriendlyError: invalid input (exit 2) or NumericalError (exit 3)
        """
        os.makedirs(self.output_directory, exist_ok=True)
        self.logger.info(f"Starting '{self.kind}' (seed={self.seed}, T={self.schedule.steps}, "
                         f"eta={self.schedule.eta}, samples={self.samples}) -> {self.output_directory}")
        started = time.perf_counter()
        try:
            summary = self.handlers[self.kind]()
        except NumericalError as e:
            raise e.with_context(experiment=self.kind)
        self._result.summary = summary
        self._result.elapsed_seconds = time.perf_counter() - started
        self._result.manifest_path = self._write_manifest(self._result.elapsed_seconds)
        self.logger.info(f"Finished '{self.kind}' in {self._result.elapsed_seconds:.2f}s: {summary}")
        return self._result

    # -- experiment kinds ---------------------------------------------------------

    def run_sample(self) -> Dict[str, Any]:
        """Draw samples; columns: sample, coordinate, value"""
        trajectories = self._replicate(lambda i, rng: ddpm_sample(self.model, self.schedule, rng), "sample")
        samples = np.stack([trajectory.x_0 for trajectory in trajectories])
        rows = [(i, j, value) for i, sample in enumerate(samples) for j, value in enumerate(sample.ravel())]
        self._csv("samples.csv", ["sample", "coordinate", "value"], rows)

        summary = {"samples": len(samples), "mean": float(samples.mean()), "std": float(samples.std())}
        if self.config_manager.get_latent_path():
            save_latent(trajectories[0].to_latent(), self._latent_path())
            summary["latent"] = self._latent_path()
        return summary

    def run_invert(self) -> Dict[str, Any]:
        """Invert data draws; columns: t, z_rms (over all inversions)"""
        method = self._method()

        def task(index, rng):
            x_0 = sample_data(self.model, rng.child("data"))
            return self._invert(method, x_0, rng.child("inversion"))

        latents = self._replicate(task, "invert")
        rows = [(t, rms(np.stack([latent.z(t) for latent in latents]))) for t in range(1, self.schedule.steps + 1)]
        self._csv("noise_rms.csv", ["t", "z_rms"], rows)
        self._plot(line_plot, "noise_rms.svg", [row[0] for row in rows], {"z_rms": [row[1] for row in rows]},
                   "t", "RMS of z_t", f"{method.value} noise maps")

        path = self._latent_path()
        save_latent(latents[0], path)
        return {"method": method.value, "inversions": len(latents), "latent": path}

    def run_reconstruct(self) -> Dict[str, Any]:
        """Regenerate from inverted latents; columns: sample, max_abs_error, rms_error"""
        latent_path = self.config_manager.get_latent_path()
        if latent_path:
            if not os.path.isfile(latent_path):
                raise InvalidConfigError(f"latent file not found: {latent_path}")
            latent = load_latent(latent_path)
            if latent.x_0 is None:
                raise InvalidConfigError(f"{latent_path} has no auxiliary chain, so its source x_0 is unknown")
            schedule = self._schedule_for(latent)
            latent.check_schedule(schedule)
            outputs = [(latent.x_0, generate_from_latent(self.model, schedule, latent, latent.cond, latent.strength))]
        else:
            method = self._method()

            def task(index, rng):
                x_0 = sample_data(self.model, rng.child("data"))
                latent = self._invert(method, x_0, rng.child("inversion"))
                return x_0, generate_from_latent(self.model, self._schedule_for(latent), latent)

            outputs = self._replicate(task, "reconstruct")

        rows = [(i, max_abs_error(x_0, x_hat), rms_distance(x_0, x_hat)) for i, (x_0, x_hat) in enumerate(outputs)]
        self._csv("reconstruction.csv", ["sample", "max_abs_error", "rms_error"], rows)
        return {"max_abs_error": max(row[1] for row in rows), "samples": len(rows)}

    def _native_latent(self, rng: RngStream) -> LatentCode:
        return ddpm_sample(self.model, self.schedule, rng).to_latent()

    def _data_latent(self, method: Method, rng: RngStream) -> LatentCode:
        x_0 = sample_data(self.model, rng.child("data"))
        return self._invert(method, x_0, rng.child("inversion"))

    def run_toy2d_stats(self) -> Dict[str, Any]:
        """Angles between consecutive noise vectors; columns: angle_low, angle_high, native, edit_friendly"""
        self._require_samples(2)
        bins = self.config_manager.get_angle_bins()
        native = self._replicate(lambda i, rng: self._native_latent(rng), "native")
        friendly = self._replicate(lambda i, rng: self._data_latent(Method.EDIT_FRIENDLY, rng), "edit-friendly")
        native_hist = angle_histogram(native, bins)
        friendly_hist = angle_histogram(friendly, bins)

        rows = [(lo, hi, n, f) for (lo, hi, n), (_, _, f) in zip(native_hist.rows(), friendly_hist.rows())]
        self._csv("angles.csv", ["angle_low", "angle_high", "native", "edit_friendly"], rows)
        self._plot(bar_plot, "angles.svg", native_hist.edges,
                   {"native": native_hist.counts, "edit-friendly": friendly_hist.counts},
                   "angle between z_t and z_{t-1} (degrees)", "count")

        native_stat, native_p = native_hist.uniformity()
        _, friendly_p = friendly_hist.uniformity()
        modal = friendly_hist.modal_bin()
        return {
            "angles": native_hist.total,
            "native_chi_square": native_stat,
            "native_p_value": native_p,
            "native_mean_angle": native_hist.mean_angle,
            "edit_friendly_p_value": friendly_p,
            "edit_friendly_mean_angle": friendly_hist.mean_angle,
            "edit_friendly_modal_bin": list(modal),
            "edit_friendly_modal_contains_180": modal[1] == 180.0,
            "skipped_pairs": native_hist.skipped + friendly_hist.skipped,
        }

    def run_noise_stats(self) -> Dict[str, Any]:
        """Per-step std and consecutive correlation of native, edit-friendly and CycleDiffusion maps"""
        self._require_samples(2)
        codes = {
            Method.NATIVE: self._replicate(lambda i, rng: self._native_latent(rng), "native"),
            Method.EDIT_FRIENDLY: self._replicate(
                lambda i, rng: self._data_latent(Method.EDIT_FRIENDLY, rng), "edit-friendly"),
            Method.CYCLEDIFFUSION: self._replicate(
                lambda i, rng: self._data_latent(Method.CYCLEDIFFUSION, rng), "cyclediffusion"),
        }
        stds = {method: per_step_std(latents) for method, latents in codes.items()}
        corrs = {method: consecutive_corr(latents) for method, latents in codes.items()}

        header = ["t"]
        for method in COMPARED_METHODS:
            name = method.value.replace("-", "_")
            header += [f"std_{name}", f"std_{name}_se"]
        header += [f"corr_{method.value.replace('-', '_')}" for method in COMPARED_METHODS]
        rows = []
        for t in range(1, self.schedule.steps + 1):
            row: List[Any] = [t]
            for method in COMPARED_METHODS:
                row += [stds[method].value[t - 1], stds[method].stderr[t - 1]]
            for method in COMPARED_METHODS:
                series = corrs[method]
                row.append(series.at(t) if t in series.t else None)
            rows.append(row)
        self._csv("noise_stats.csv", header, rows)

        t_values = stds[Method.NATIVE].t
        self._plot(line_plot, "noise_std.svg", t_values,
                   {method.value: stds[method].value for method in COMPARED_METHODS},
                   "t", "std of z_t", errors={method.value: stds[method].stderr for method in COMPARED_METHODS},
                   reference=1.0)
        self._plot(line_plot, "noise_corr.svg", corrs[Method.NATIVE].t,
                   {method.value: corrs[method].value for method in COMPARED_METHODS},
                   "t", "corr(z_t, z_{t-1})", reference=0.0)

        friendly_std = stds[Method.EDIT_FRIENDLY].value
        return {
            "edit_friendly_std_above_native": fraction_where(friendly_std > stds[Method.NATIVE].value),
            "edit_friendly_corr_negative": fraction_where(corrs[Method.EDIT_FRIENDLY].value < 0.0),
            "native_std_range": [float(stds[Method.NATIVE].value.min()), float(stds[Method.NATIVE].value.max())],
            "native_corr_max_abs": float(np.abs(corrs[Method.NATIVE].value).max()),
            "cyclediffusion_std_range": [float(stds[Method.CYCLEDIFFUSION].value.min()),
                                         float(stds[Method.CYCLEDIFFUSION].value.max())],
        }

    def _generated_latents(self, rng: RngStream) -> Dict[Method, LatentCode]:
        """A generated image with its native latent plus two inversions of it"""
        native = self._native_latent(rng.child("native"))
        return {
            Method.NATIVE: native,
            Method.EDIT_FRIENDLY: edit_friendly_invert(native.x_0, self.model, self.schedule, rng.child("ef")),
            Method.CYCLEDIFFUSION: cyclediffusion_invert(native.x_0, self.model, self.schedule, rng.child("cd")),
        }

    def run_shift(self) -> Dict[str, Any]:
        """Valid-region MSE of shifted-latent outputs; columns: d, mse_native, mse_edit_friendly, mse_cyclediffusion"""
        settings = self.config_manager.get_edit_config("shift")
        distances = [int(d) for d in settings.get("distances", [1, 2, 4, 8])]
        specs = [Shift(d, int(settings.get("axis", -1)), settings.get("source_offset")) for d in distances]
        data_shape = self.model.data_shape

        def task(index, rng):
            latents = self._generated_latents(rng)
            x_0 = latents[Method.NATIVE].x_0
            errors = {}
            for spec in specs:
                reference = shift_data(x_0, spec, data_shape)
                for method, latent in latents.items():
                    output = generate_from_latent(self.model, self.schedule, shift_latent(latent, spec))
                    errors[(spec.d, method)] = shift_mse(output, reference, spec.d, spec.axis)
            return errors

        results = self._replicate(task, "shift")
        mean = {key: float(np.mean([result[key] for result in results])) for key in results[0]}
        rows = [(d,) + tuple(mean[(d, method)] for method in COMPARED_METHODS) for d in distances]
        self._csv("shift_mse.csv", ["d", "mse_native", "mse_edit_friendly", "mse_cyclediffusion"], rows)
        self._plot(line_plot, "shift_mse.svg", distances,
                   {method.value: [mean[(d, method)] for d in distances] for method in COMPARED_METHODS},
                   "shift d (cells)", "MSE over valid region")

        friendly = [mean[(d, Method.EDIT_FRIENDLY)] for d in distances]
        native = [mean[(d, Method.NATIVE)] for d in distances]
        return {
            "edit_friendly_below_native": all(f < n for f, n in zip(friendly, native)),
            "edit_friendly_non_decreasing": _non_decreasing(friendly),
        }

    def run_flip(self) -> Dict[str, Any]:
        """RMS of flipped-latent outputs to the flipped image; columns: sample, rms_native, ..."""
        spec = Flip(int(self.config_manager.get_edit_config("flip").get("axis", -1)))

        def task(index, rng):
            latents = self._generated_latents(rng)
            reference = flip_data(latents[Method.NATIVE].x_0, spec, self.model.data_shape)
            return {method: rms_distance(generate_from_latent(self.model, self.schedule, flip_latent(latent, spec)),
                                         reference)
                    for method, latent in latents.items()}

        results = self._replicate(task, "flip")
        rows = [(i,) + tuple(result[method] for method in COMPARED_METHODS) for i, result in enumerate(results)]
        self._csv("flip_rms.csv", ["sample", "rms_native", "rms_edit_friendly", "rms_cyclediffusion"], rows)
        self._plot(line_plot, "flip_rms.svg", list(range(len(results))),
                   {method.value: [result[method] for result in results] for method in COMPARED_METHODS},
                   "sample", "RMS to flipped image")
        closer = sum(result[Method.EDIT_FRIENDLY] < result[Method.NATIVE] for result in results)
        return {"edit_friendly_closer": closer, "samples": len(results),
                "edit_friendly_closer_all": closer == len(results),
                "flip_symmetric_model": bool(getattr(self.model, "flip_symmetric", False))}

    def run_color_edit(self) -> Dict[str, Any]:
        """Masked color edits; columns: strength, rms_deviation, rms_inside_mask, rms_outside_mask"""
        settings = self.config_manager.get_edit_config("color")
        mask = build_mask(self.model.data_shape, settings.get("mask", {}))
        target = np.asarray(settings.get("target", 0.0), dtype=np.float64)
        strengths = [float(s) for s in settings.get("strengths", [0.0, 0.01, 0.05, 0.1])]
        t1, t2 = int(settings.get("t1", 20)), int(settings.get("t2", 70))
        specs = [ColorEdit(mask, target, s, t1, t2) for s in strengths]
        inside, outside = mask == 1.0, mask == 0.0

        def task(index, rng):
            latent = self._data_latent(Method.EDIT_FRIENDLY, rng)
            base = generate_from_latent(self.model, self.schedule, latent)
            deviations, identity = [], True
            for spec in specs:
                output = color_edit_generate(latent, self.model, self.schedule, spec)
                difference = output - base
                deviations.append((rms(difference), rms(difference[inside]),
                                   rms(difference[outside]) if outside.any() else 0.0))
                if spec.strength == 0.0:
                    identity = identity and np.array_equal(output, base)
            return deviations, identity

        results = self._replicate(task, "color-edit")
        rows = []
        for k, strength in enumerate(strengths):
            rows.append((strength,) + tuple(float(np.mean([result[0][k][j] for result in results])) for j in range(3)))
        self._csv("color_edit.csv", ["strength", "rms_deviation", "rms_inside_mask", "rms_outside_mask"], rows)
        self._plot(line_plot, "color_edit.svg", strengths,
                   {"total": [row[1] for row in rows], "inside mask": [row[2] for row in rows],
                    "outside mask": [row[3] for row in rows]},
                   "edit strength s", "RMS deviation from unedited output")
        return {
            "zero_strength_identity": all(result[1] for result in results),
            "deviation_strictly_increasing": _strictly_increasing([row[1] for row in rows]),
        }

    def _swap_fidelity(self, latent: LatentCode, x_0: Tensor, target: str, strength: Optional[float],
                       t_skip: int, schedule: Optional[Schedule] = None) -> Dict[str, Any]:
        output = cond_swap_generate(latent, self.model, CondSwap(target, strength, t_skip),
                                    schedule or self.schedule)
        return {"output": output, "rms_to_input": rms_distance(output, x_0),
                "rms_to_target_mode": rms_distance(output, data_mode(self.model, target))}

    def run_cond_swap(self) -> Dict[str, Any]:
        """Condition swaps over T_skip; columns: t_skip, rms_to_input, rms_to_target_mode"""
        settings = self.config_manager.get_edit_config("cond_swap")
        source, target = settings.get("source"), settings.get("target")
        strength = settings.get("strength")
        t_skips = [int(t) for t in settings.get("t_skips", [0]) if int(t) <= self.schedule.steps]
        if not t_skips:
            raise InvalidConfigError(f"no cond_swap.t_skips within [0, {self.schedule.steps}]")

        def task(index, rng):
            x_0 = sample_data(self.model, rng.child("data"), cond=source)
            latent = edit_friendly_invert(x_0, self.model, self.schedule, rng.child("inversion"), cond=source)
            return [self._swap_fidelity(latent, x_0, target, strength, t_skip) for t_skip in t_skips]

        results = self._replicate(task, "cond-swap")
        rows = [(t_skip,
                 float(np.mean([result[k]["rms_to_input"] for result in results])),
                 float(np.mean([result[k]["rms_to_target_mode"] for result in results])))
                for k, t_skip in enumerate(t_skips)]
        self._csv("cond_swap.csv", ["t_skip", "rms_to_input", "rms_to_target_mode"], rows)
        self._plot(line_plot, "cond_swap.svg", t_skips,
                   {"to input": [row[1] for row in rows], "to target mode": [row[2] for row in rows]},
                   "T_skip", "RMS distance")
        return {"fidelity_monotone": _non_decreasing([-row[1] for row in rows])}

    def run_sweep(self) -> Dict[str, Any]:
        """T_skip x strength grid; columns: t_skip, strength, rms_to_input, rms_to_target_mode"""
        settings = self.config_manager.get_edit_config("sweep")
        source, target = settings.get("source"), settings.get("target")
        strengths = [float(w) for w in settings.get("strengths", [1.0])]
        step = int(settings.get("t_skip_step", 1))
        if step < 1:
            raise InvalidConfigError(f"sweep.t_skip_step must be positive, got {step}")
        t_skips = sorted(set(range(0, self.schedule.steps + 1, step)) | {self.schedule.steps})

        def task(index, rng):
            x_0 = sample_data(self.model, rng.child("data"), cond=source)
            latent = edit_friendly_invert(x_0, self.model, self.schedule, rng.child("inversion"), cond=source)
            return {(t_skip, w): self._swap_fidelity(latent, x_0, target, w, t_skip)
                    for t_skip in t_skips for w in strengths}

        results = self._replicate(task, "sweep")
        rows = []
        for t_skip in t_skips:
            for w in strengths:
                rows.append((t_skip, w,
                             float(np.mean([result[(t_skip, w)]["rms_to_input"] for result in results])),
                             float(np.mean([result[(t_skip, w)]["rms_to_target_mode"] for result in results]))))
        self._csv("sweep.csv", ["t_skip", "strength", "rms_to_input", "rms_to_target_mode"], rows)
        self._plot(line_plot, "sweep.svg", t_skips,
                   {f"w={w}": [row[2] for row in rows if row[1] == w] for w in strengths},
                   "T_skip", "RMS to input")
        monotone = {str(w): _non_decreasing([-row[2] for row in rows if row[1] == w]) for w in strengths}
        return {"fidelity_monotone": monotone}

    def run_diversity(self) -> Dict[str, Any]:
        """Stochastic vs deterministic inversion before a condition swap; columns: method, diversity, mean_rms_to_input"""
        settings = self.config_manager.get_edit_config("diversity")
        source, target = settings.get("source"), settings.get("target")
        strength = settings.get("strength")
        t_skip = int(settings.get("t_skip", 0))
        inversions = int(settings.get("inversions", 8))
        if inversions < 2:
            raise InvalidConfigError(f"diversity.inversions must be at least 2, got {inversions}")

        x_0 = sample_data(self.model, self.rng.child(self.kind).child("data"), cond=source)
        deterministic = self.schedule.with_eta(0.0)

        def stochastic(index, rng):
            latent = edit_friendly_invert(x_0, self.model, self.schedule, rng, cond=source)
            return self._swap_fidelity(latent, x_0, target, strength, t_skip)

        def ddim(index, rng):
            latent = ddim_invert(x_0, self.model, self.schedule, cond=source)
            return self._swap_fidelity(latent, x_0, target, strength, t_skip, deterministic)

        rows = []
        summary = {}
        for method, task in ((Method.EDIT_FRIENDLY, stochastic), (Method.DDIM, ddim)):
            results = self._replicate(task, method.value, inversions)
            value = diversity([result["output"] for result in results])
            rows.append((method.value, value, float(np.mean([result["rms_to_input"] for result in results]))))
            summary[f"{method.value.replace('-', '_')}_diversity"] = value
        self._csv("diversity.csv", ["method", "diversity", "mean_rms_to_input"], rows)
        return summary
