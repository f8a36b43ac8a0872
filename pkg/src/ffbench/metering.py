"""Deterministic compute-cost accounting.

FLOPs are counted exactly (the matmul hook reports 2*m*k*n per product;
elementwise work is not counted), wall time is tracked per phase, and an
analytic power model converts the totals to energy and CO2 figures. With
the default model (no baseline draw) the energy figure depends only on
the FLOP count, so identical runs report identical energy.
"""

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

from . import tensor

__all__ = ["CostMeter", "MeterSnapshot", "PowerModel", "estimate_footprint"]

# Counters clamp here instead of growing without bound; a run that hits
# this is flagged rather than silently wrapped.
FLOP_SATURATION_LIMIT = 2**63 - 1


@dataclass(frozen=True)
class MeterSnapshot:
    flops: int
    wall_seconds: float
    phase_flops: dict
    phase_wall_seconds: dict
    saturated: bool


@dataclass(frozen=True)
class PowerModel:
    """Analytic cost model: joules per GFLOP plus an idle draw.

    energy_kwh = (watts_per_gflops * flops / 1e9
                  + baseline_watts * wall_seconds) / 3.6e6
    emissions_g = energy_kwh * grid_intensity_g_per_kwh

    `watts_per_gflops` is numerically joules per GFLOP (a machine
    sustaining R GFLOP/s at watts_per_gflops*R watts spends that many
    joules per GFLOP of work). baseline_watts defaults to 0 so reported
    energy is deterministic; set it > 0 to include wall-clock idle cost.
    """

    watts_per_gflops: float = 1.0
    baseline_watts: float = 0.0
    grid_intensity_g_per_kwh: float = 475.0

    def __post_init__(self):
        for name in ("watts_per_gflops", "baseline_watts", "grid_intensity_g_per_kwh"):
            if getattr(self, name) < 0:
                raise ValueError(f"PowerModel.{name} must be >= 0")


class CostMeter:
    """Single-writer FLOP and wall-clock accumulator with phase tags."""

    def __init__(self):
        self.flops = 0
        self.wall_seconds = 0.0
        self.saturated = False
        self.phase_flops = {}
        self.phase_wall_seconds = {}
        self._phase_stack = []

    def record(self, op_kind, count):
        if count < 0:
            raise ValueError(f"CostMeter.record: negative flop count {count}")
        del op_kind  # every source is charged the same way
        new_total = self.flops + count
        if new_total > FLOP_SATURATION_LIMIT:
            new_total = FLOP_SATURATION_LIMIT
            self.saturated = True
        self.flops = new_total
        if self._phase_stack:
            tag = self._phase_stack[-1]
            phase_total = self.phase_flops.get(tag, 0) + count
            if phase_total > FLOP_SATURATION_LIMIT:
                phase_total = FLOP_SATURATION_LIMIT
                self.saturated = True
            self.phase_flops[tag] = phase_total

    @contextmanager
    def phase(self, tag):
        """Attribute flops and wall time inside the block to `tag`."""
        self._phase_stack.append(tag)
        started = time.perf_counter()
        try:
            yield self
        finally:
            elapsed = time.perf_counter() - started
            self._phase_stack.pop()
            self.wall_seconds += elapsed
            self.phase_wall_seconds[tag] = (
                self.phase_wall_seconds.get(tag, 0.0) + elapsed
            )

    @contextmanager
    def capture(self):
        """Receive flop reports from every matmul inside the block."""
        previous = tensor.set_flop_hook(self.record)
        try:
            yield self
        finally:
            tensor.set_flop_hook(previous)

    def read(self):
        return MeterSnapshot(
            flops=self.flops,
            wall_seconds=self.wall_seconds,
            phase_flops=dict(self.phase_flops),
            phase_wall_seconds=dict(self.phase_wall_seconds),
            saturated=self.saturated,
        )


def estimate_footprint(snapshot, model):
    """(energy_kwh, emissions_g) for a snapshot under a power model."""
    joules = (
        model.watts_per_gflops * (snapshot.flops / 1e9)
        + model.baseline_watts * snapshot.wall_seconds
    )
    energy_kwh = joules / 3.6e6
    emissions_g = energy_kwh * model.grid_intensity_g_per_kwh
    return energy_kwh, emissions_g
