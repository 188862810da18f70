"""Behavioral model of subarray-level refresh-access parallelism.

The DRAM device selects which subarray a refresh lands in (the engine's
per-bank refresh-subarray/local-row counters); the memory controller keeps
shadow copies so it can steer demand accesses to idle subarrays.  The
shadow is advanced on every observed refresh command and must stay equal
to the device counters at all times.
"""

from .errors import AddressError
from .timing import DramGeometry


def subarray_of_row(row: int, geometry: DramGeometry) -> int:
    if not 0 <= row < geometry.rows_per_bank:
        raise AddressError(f"row {row} out of range")
    return row // geometry.rows_per_subarray


def advance_refresh_counters(sa: int, local_row: int, rows: int,
                             geometry: DramGeometry) -> tuple[int, int]:
    """Advance a (refresh-subarray, local-row) counter pair by `rows`,
    carrying into the subarray counter modulo the subarray count."""
    local_row += rows
    rps = geometry.rows_per_subarray
    if local_row >= rps:
        sa = (sa + local_row // rps) % geometry.subarrays_per_bank
        local_row %= rps
    return sa, local_row


def access_allowed(row: int, refresh_subarray: int, open_row: int | None,
                   geometry: DramGeometry) -> bool:
    """May a demand access target `row` in a bank that is refreshing?

    True iff the row lives outside the refreshing subarray and no other
    subarray of the bank is currently activated for an access (only one
    row buffer may drive the global bitlines).
    """
    if open_row is not None:
        return False
    return subarray_of_row(row, geometry) != refresh_subarray


def sarp_mode_banks(policy_kind: str, engine, ri: int, now: int) -> frozenset[int]:
    """Banks of a rank that admit subarray-parallel access right now.

    All-bank mode exposes every bank of a refreshing rank (bank-level
    parallelism under rank refresh); per-bank modes expose just the one
    refreshing bank.  Empty when no refresh is in progress or the policy
    has no subarray support.
    """
    if not engine.sarp_enabled:
        return frozenset()
    return frozenset(b for b in range(engine.n_banks)
                     if engine.bank_refreshing(ri, b, now))


class SubarrayShadow:
    """Controller-side mirror of the device refresh counters."""

    def __init__(self, geometry: DramGeometry):
        self.geometry = geometry
        n = geometry.ranks_per_channel * geometry.banks_per_rank
        self.sa = [0] * n
        self.row = [0] * n

    def on_refresh(self, ri: int, bi: int, rows: int) -> None:
        idx = ri * self.geometry.banks_per_rank + bi
        self.sa[idx], self.row[idx] = advance_refresh_counters(
            self.sa[idx], self.row[idx], rows, self.geometry)

    def on_all_bank_refresh(self, ri: int, rows: int) -> None:
        for bi in range(self.geometry.banks_per_rank):
            self.on_refresh(ri, bi, rows)

    def counters(self, ri: int, bi: int) -> tuple[int, int]:
        idx = ri * self.geometry.banks_per_rank + bi
        return self.sa[idx], self.row[idx]

    def matches_engine(self, engine) -> bool:
        for ri in range(self.geometry.ranks_per_channel):
            for bi in range(self.geometry.banks_per_rank):
                bank = engine.bank_state(ri, bi)
                if (bank.ref_sa, bank.ref_row) != self.counters(ri, bi):
                    return False
        return True
