"""System metrics and the current-based energy model.

Weighted speedup sums each core's shared-mode IPC over its alone-mode IPC;
harmonic speedup is the harmonic mean of the per-core speedups.  The
energy model is a simplified DDR3 current model (background, activate/
precharge, read/write bursts, refresh); absolute joules are not meant to
be compared against hardware, only across policies under one parameter
set.  Energies are reported in picojoules: mA x V x ns = pJ.
"""

from dataclasses import dataclass, field

from .errors import MetricError
from .timing import CurrentParams, TimingParams


@dataclass
class SimStats:
    """Aggregated counters for one measured run."""
    core_instructions: list = field(default_factory=list)
    core_cycles: list = field(default_factory=list)
    dram_cycles: int = 0
    n_act: int = 0
    n_pre: int = 0
    n_rd: int = 0
    n_wr: int = 0
    n_refab: int = 0
    n_refpb: int = 0
    refab_cycles: int = 0
    refpb_cycles: int = 0
    rank_busy_cycles: int = 0
    rank_count: int = 0
    completed_reads: int = 0
    completed_writes: int = 0
    read_latency_total: int = 0
    read_latency_hist: dict = field(default_factory=dict)
    refresh_counts: dict = field(default_factory=dict)
    subarray_conflicts: int = 0
    sarp_parallel_accesses: int = 0
    writeback_cycles: int = 0

    @property
    def refresh_total(self) -> int:
        return self.n_refab + self.n_refpb

    @property
    def avg_read_latency(self) -> float:
        if self.completed_reads == 0:
            return 0.0
        return self.read_latency_total / self.completed_reads

    def ipc(self, core: int) -> float:
        cycles = self.core_cycles[core]
        return self.core_instructions[core] / cycles if cycles else 0.0


def weighted_speedup(shared_ipc, alone_ipc) -> float:
    if len(shared_ipc) != len(alone_ipc):
        raise MetricError("IPC vectors must have equal length")
    total = 0.0
    for shared, alone in zip(shared_ipc, alone_ipc):
        if alone <= 0:
            raise MetricError(f"alone IPC must be positive, got {alone}")
        total += shared / alone
    return total


def harmonic_speedup(shared_ipc, alone_ipc) -> float:
    if len(shared_ipc) != len(alone_ipc):
        raise MetricError("IPC vectors must have equal length")
    if not shared_ipc:
        raise MetricError("empty IPC vectors")
    denom = 0.0
    for shared, alone in zip(shared_ipc, alone_ipc):
        if shared <= 0:
            raise MetricError(f"shared IPC must be positive, got {shared}")
        denom += alone / shared
    return len(shared_ipc) / denom


def max_slowdown(shared_ipc, alone_ipc) -> float:
    """Fairness companion: the worst per-core alone/shared ratio."""
    worst = 0.0
    for shared, alone in zip(shared_ipc, alone_ipc):
        if shared <= 0:
            raise MetricError(f"shared IPC must be positive, got {shared}")
        worst = max(worst, alone / shared)
    return worst


@dataclass
class EnergyBreakdown:
    background_pj: float
    activate_precharge_pj: float
    read_write_pj: float
    refresh_pj: float

    @property
    def total_pj(self) -> float:
        return (self.background_pj + self.activate_precharge_pj
                + self.read_write_pj + self.refresh_pj)

    def energy_per_access_pj(self, accesses: int) -> float:
        return self.total_pj / accesses if accesses else 0.0


def energy_accumulate(stats: SimStats, currents: CurrentParams,
                      timing: TimingParams) -> EnergyBreakdown:
    tck = timing.tCK_ns
    vdd = currents.vdd
    total_rank_cycles = stats.dram_cycles * stats.rank_count
    busy = min(stats.rank_busy_cycles, total_rank_cycles)
    precharged = total_rank_cycles - busy
    background = vdd * (currents.i_bg_active * busy
                        + currents.i_bg_precharged * precharged) * tck
    act_pre = vdd * currents.i_act * timing.tRC * tck * stats.n_act
    rw = vdd * (currents.i_rd * stats.n_rd
                + currents.i_wr * stats.n_wr) * timing.tBURST * tck
    refresh = vdd * (currents.i_ref_ab * stats.refab_cycles
                     + currents.i_ref_pb * stats.refpb_cycles) * tck
    return EnergyBreakdown(background, act_pre, rw, refresh)
