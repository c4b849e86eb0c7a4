"""Gaussian kernel size schedules for target re-encoding during training.

The annealed ("pgk") schedule interpolates from a wide kernel down to
a narrow one over M epochs:

    sigma_t = (smax - smin) * alpha^(t/M) + smin * (1 - (smax - smin) * alpha)^(t/M)

with t counted from 0, so sigma_0 = smax exactly and, when smin = 1,
sigma_M = smin exactly. The second base must stay inside (0, 1),
hence the constraint (smax - smin) * alpha < 1. A "fixed" schedule
holds one sigma; "naive_switch" jumps from smax to smin at a chosen
epoch.
"""

from __future__ import annotations

from dataclasses import dataclass

PGK = "pgk"
FIXED = "fixed"
NAIVE_SWITCH = "naive_switch"
VARIANTS = (PGK, FIXED, NAIVE_SWITCH)


@dataclass(frozen=True)
class KernelSchedule:
    variant: str
    sigma_max: float
    sigma_min: float
    total_epochs: int
    alpha: float = 0.3
    switch_epoch: int | None = None

    @staticmethod
    def pgk(sigma_max: float, sigma_min: float, total_epochs: int, alpha: float = 0.3) -> "KernelSchedule":
        return KernelSchedule(PGK, sigma_max, sigma_min, total_epochs, alpha)

    @staticmethod
    def fixed(sigma: float, total_epochs: int) -> "KernelSchedule":
        return KernelSchedule(FIXED, sigma, sigma, total_epochs)

    @staticmethod
    def naive_switch(
        sigma_max: float, sigma_min: float, total_epochs: int, switch_epoch: int
    ) -> "KernelSchedule":
        return KernelSchedule(
            NAIVE_SWITCH, sigma_max, sigma_min, total_epochs, switch_epoch=switch_epoch
        )


def validate(schedule: KernelSchedule) -> list[str]:
    """Raise ValueError on a malformed schedule; return human-readable
    warnings for legal but unusual ones (e.g. a terminal sigma that is
    not reached exactly)."""
    if schedule.variant not in VARIANTS:
        raise ValueError(f"unknown schedule variant: {schedule.variant!r}")
    if schedule.total_epochs < 1:
        raise ValueError("total_epochs must be >= 1")
    if schedule.sigma_min <= 0:
        raise ValueError("sigma_min must be positive")
    warnings: list[str] = []
    if schedule.variant == FIXED:
        if schedule.sigma_max != schedule.sigma_min:
            raise ValueError("fixed schedule requires sigma_max == sigma_min")
        return warnings
    if schedule.sigma_max <= schedule.sigma_min:
        raise ValueError("sigma_max must exceed sigma_min")
    if schedule.variant == PGK:
        if not 0.0 < schedule.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if (schedule.sigma_max - schedule.sigma_min) * schedule.alpha >= 1.0:
            raise ValueError("(sigma_max - sigma_min) * alpha must be < 1")
        if schedule.sigma_min != 1.0:
            warnings.append(
                "sigma_min != 1: the annealed schedule ends at "
                f"sigma={terminal_sigma(schedule):.6f}, not sigma_min"
            )
    if schedule.variant == NAIVE_SWITCH:
        if schedule.switch_epoch is None or not 0 < schedule.switch_epoch < schedule.total_epochs:
            raise ValueError("switch_epoch must lie strictly between 0 and total_epochs")
    return warnings


def sigma_at(schedule: KernelSchedule, epoch: int) -> float:
    """Kernel size for a 0-based epoch counter; defined on [0, M]."""
    m = schedule.total_epochs
    if not 0 <= epoch <= m:
        raise ValueError(f"epoch {epoch} outside [0, {m}]")
    if schedule.variant == FIXED:
        return schedule.sigma_max
    if schedule.variant == NAIVE_SWITCH:
        return schedule.sigma_max if epoch < schedule.switch_epoch else schedule.sigma_min
    delta = schedule.sigma_max - schedule.sigma_min
    s = epoch / m
    return delta * schedule.alpha**s + schedule.sigma_min * (1.0 - delta * schedule.alpha) ** s


def terminal_sigma(schedule: KernelSchedule) -> float:
    return sigma_at(schedule, schedule.total_epochs)
