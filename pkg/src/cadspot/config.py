"""Run configuration: one flat key = value file drives every command.

Precedence, lowest to highest: built-in defaults, config file, CLI
--set overrides, then the environment (CADSPOT_OUT_DIR, CADSPOT_THREADS).
Lines starting with # are comments; keys are dotted to group the
predictor, schedule, tiling and scene-generator settings. Unknown keys
are rejected rather than ignored, so typos fail loudly.

All randomness descends from the single rng_seed through named
substreams (synth / init / shuffle), so re-running one stage never
perturbs the draws of another.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .detect import PatchGrid
from .model import PredictorConfig
from .schedule import FIXED, NAIVE_SWITCH, PGK, KernelSchedule
from .schedule import validate as validate_schedule
from .synth import SceneSpec

ENV_OUT_DIR = "CADSPOT_OUT_DIR"
ENV_THREADS = "CADSPOT_THREADS"


class ConfigError(ValueError):
    pass


# key -> (default string, help line)
SCHEMA: dict[str, tuple[str, str]] = {
    "data_dir": ("data", "dataset root holding train/ val/ test/ splits"),
    "out_dir": ("out", "all artifacts (checkpoints, CSVs, figures) land here"),
    "checkpoint": ("", "checkpoint path; empty means <out_dir>/predictor.ckpt"),
    "rng_seed": ("0", "root seed; synth/init/shuffle streams derive from it"),
    "threshold": ("0.6", "heatmap score a peak must exceed to be a detection"),
    "tau_p": ("2.0", "keypoint match distance (strict) for the metrics"),
    "tau_o": ("0.5", "region-box IoU threshold for the metrics"),
    "dedup_radius": ("2.0", "same-class merge radius when patches overlap, px"),
    "threads": ("0", "BLAS thread cap; 0 leaves the library default"),
    "predictor.patch_size": ("256", "network input edge, px"),
    "predictor.down_sample": ("4", "R: pixels per heatmap cell"),
    "predictor.channels": ("15", "number of keypoint classes"),
    "predictor.hidden": (
        "16x1,32x2,64x2,64x1",
        "3x3 stages as widthxstride; strides must multiply to R",
    ),
    "predictor.learning_rate": ("1e-4", "Adam step size"),
    "predictor.lam": ("0.1", "offset-loss weight"),
    "predictor.epochs": ("200", "training epochs (also the schedule length)"),
    "predictor.batch_size": ("8", "samples per optimizer step"),
    "predictor.predict_offsets": ("true", "train and decode the offset head"),
    "schedule.variant": ("pgk", "pgk | fixed | naive_switch"),
    "schedule.sigma_max": ("3.0", "starting kernel width"),
    "schedule.sigma_min": ("1.0", "final kernel width (fixed uses this = sigma_max)"),
    "schedule.alpha": ("0.3", "annealing shape parameter in (0, 1)"),
    "schedule.switch_epoch": ("", "naive_switch only: epoch of the hard switch"),
    "grid.patch_size": ("256", "tiling patch edge for inference"),
    "grid.stride": ("", "tiling stride; empty means patch_size (no overlap)"),
    "synth.width": ("256", "generated scene width"),
    "synth.height": ("256", "generated scene height"),
    "synth.n_blocks": ("2", "blocks per scene"),
    "synth.n_walls": ("1", "walls per scene"),
    "synth.n_scales": ("1", "scales per scene"),
    "synth.min_symbol_size": ("12", "smallest symbol edge, px"),
    "synth.max_symbol_size": ("48", "largest symbol edge, px"),
    "synth.line_width": ("1", "stroke thickness, px"),
    "synth.noise_level": ("0.0", "per-pixel flip probability"),
}


@dataclass(frozen=True)
class RunConfig:
    data_dir: Path
    out_dir: Path
    checkpoint: Path
    rng_seed: int
    threshold: float
    tau_p: float
    tau_o: float
    dedup_radius: float
    threads: int
    predictor: PredictorConfig
    schedule: KernelSchedule
    grid: PatchGrid
    synth: SceneSpec


def parse_kv_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Syntax pass: `key = value` lines, # comments; duplicate keys are
    rejected."""
    values: dict[str, str] = {}
    for ln, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{ln}: expected 'key = value', got {rawline!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{ln}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{ln}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def _check_keys(values: Mapping[str, str], source: str) -> None:
    for key in values:
        if key not in SCHEMA:
            raise ConfigError(f"{source}: unknown config key {key!r}")


def _get_int(values: Mapping[str, str], key: str) -> int:
    raw = values[key]
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r} (expected integer)") from None


def _get_float(values: Mapping[str, str], key: str) -> float:
    raw = values[key]
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r} (expected number)") from None


def _get_bool(values: Mapping[str, str], key: str) -> bool:
    raw = values[key].lower()
    if raw in ("true", "yes", "1", "on"):
        return True
    if raw in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"invalid value for {key}: {values[key]!r} (expected true/false)")


def _get_hidden(values: Mapping[str, str], key: str) -> tuple[tuple[int, int], ...]:
    raw = values[key]
    stages = []
    for part in raw.split(","):
        part = part.strip()
        try:
            width, _, stride = part.partition("x")
            stages.append((int(width), int(stride)))
        except ValueError:
            raise ConfigError(
                f"invalid value for {key}: {raw!r} (expected e.g. 16x1,32x2)"
            ) from None
    return tuple(stages)


def effective_values(
    file_values: Mapping[str, str] | None = None,
    cli_overrides: Mapping[str, str] | None = None,
    env: Mapping[str, str] | None = None,
) -> dict[str, str]:
    """Merge the precedence chain into one complete value map."""
    merged = {key: default for key, (default, _) in SCHEMA.items()}
    if file_values:
        _check_keys(file_values, "config file")
        merged.update(file_values)
    if cli_overrides:
        _check_keys(cli_overrides, "--set")
        merged.update(cli_overrides)
    if env is None:
        env = os.environ
    if env.get(ENV_OUT_DIR):
        merged["out_dir"] = env[ENV_OUT_DIR]
    if env.get(ENV_THREADS):
        merged["threads"] = env[ENV_THREADS]
    return merged


def build_run_config(values: Mapping[str, str]) -> RunConfig:
    rng_seed = _get_int(values, "rng_seed")
    epochs = _get_int(values, "predictor.epochs")

    predictor = PredictorConfig(
        patch_size=_get_int(values, "predictor.patch_size"),
        down_sample=_get_int(values, "predictor.down_sample"),
        channels=_get_int(values, "predictor.channels"),
        hidden=_get_hidden(values, "predictor.hidden"),
        learning_rate=_get_float(values, "predictor.learning_rate"),
        lam=_get_float(values, "predictor.lam"),
        epochs=epochs,
        batch_size=_get_int(values, "predictor.batch_size"),
        rng_seed=rng_seed,
        predict_offsets=_get_bool(values, "predictor.predict_offsets"),
    )

    variant = values["schedule.variant"]
    if variant not in (PGK, FIXED, NAIVE_SWITCH):
        raise ConfigError(
            f"invalid value for schedule.variant: {variant!r} "
            f"(expected {PGK}, {FIXED} or {NAIVE_SWITCH})"
        )
    switch_raw = values["schedule.switch_epoch"]
    schedule = KernelSchedule(
        variant=variant,
        sigma_max=_get_float(values, "schedule.sigma_max"),
        sigma_min=_get_float(values, "schedule.sigma_min"),
        total_epochs=epochs,
        alpha=_get_float(values, "schedule.alpha"),
        switch_epoch=_get_int(values, "schedule.switch_epoch") if switch_raw else None,
    )
    try:
        validate_schedule(schedule)
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from exc

    stride_raw = values["grid.stride"]
    grid = PatchGrid(
        patch_size=_get_int(values, "grid.patch_size"),
        stride=_get_int(values, "grid.stride") if stride_raw else None,
    )

    synth = SceneSpec(
        width=_get_int(values, "synth.width"),
        height=_get_int(values, "synth.height"),
        n_blocks=_get_int(values, "synth.n_blocks"),
        n_walls=_get_int(values, "synth.n_walls"),
        n_scales=_get_int(values, "synth.n_scales"),
        min_symbol_size=_get_int(values, "synth.min_symbol_size"),
        max_symbol_size=_get_int(values, "synth.max_symbol_size"),
        line_width=_get_int(values, "synth.line_width"),
        noise_level=_get_float(values, "synth.noise_level"),
        rng_seed=rng_seed,
    )

    for key in ("threshold", "tau_p", "tau_o", "dedup_radius"):
        if _get_float(values, key) <= 0:
            raise ConfigError(f"{key} must be positive")
    threads = _get_int(values, "threads")
    if threads < 0:
        raise ConfigError("threads must be >= 0")

    out_dir = Path(values["out_dir"])
    checkpoint = Path(values["checkpoint"]) if values["checkpoint"] else out_dir / "predictor.ckpt"
    return RunConfig(
        data_dir=Path(values["data_dir"]),
        out_dir=out_dir,
        checkpoint=checkpoint,
        rng_seed=rng_seed,
        threshold=_get_float(values, "threshold"),
        tau_p=_get_float(values, "tau_p"),
        tau_o=_get_float(values, "tau_o"),
        dedup_radius=_get_float(values, "dedup_radius"),
        threads=threads,
        predictor=predictor,
        schedule=schedule,
        grid=grid,
        synth=synth,
    )


def load_run_config(
    path: str | Path | None = None,
    cli_overrides: Mapping[str, str] | None = None,
    env: Mapping[str, str] | None = None,
) -> RunConfig:
    file_values = None
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        file_values = parse_kv_text(p.read_text(), source=str(p))
    try:
        return build_run_config(effective_values(file_values, cli_overrides, env))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def default_config_text() -> str:
    """Documented schema: every key with its help line and default."""
    lines = ["# run configuration (key = value; # starts a comment)"]
    for key, (default, help_line) in SCHEMA.items():
        lines.append(f"# {help_line}")
        lines.append(f"{key} = {default}")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def apply_thread_limit(threads: int) -> None:
    """Cap BLAS pool sizes; 0 leaves the library default in place."""
    if threads <= 0:
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return
    threadpool_limits(limits=threads)
