"""Unit-to-subchannel assignment: greedy robustness pairing, baselines, brute-force oracle."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .channel import SubchannelSet
from .errors import CapacityError, FormatError, ParameterError, SizeError
from .nn_core import Rng

STRATEGIES = ("proposed", "random", "worst_case", "brute_force")


@dataclass(frozen=True, eq=False)
class AllocationPlan:
    assign: np.ndarray
    strategy: str
    steps: int = 0  # assignment operations performed by the allocator

    def __post_init__(self):
        a = np.array(self.assign, dtype=np.int64).reshape(-1)
        a.flags.writeable = False
        object.__setattr__(self, "assign", a)
        if self.strategy not in STRATEGIES:
            raise ParameterError(f"unknown strategy {self.strategy!r}")

    @property
    def m(self) -> int:
        return self.assign.size

    def check(self, subs: SubchannelSet) -> "AllocationPlan":
        if self.assign.size and (self.assign.min() < 0 or self.assign.max() >= subs.s):
            raise CapacityError("assignment references a missing subchannel")
        if np.any(np.bincount(self.assign, minlength=subs.s) > subs.capacity):
            raise CapacityError("assignment exceeds subchannel capacity")
        return self

    def __eq__(self, other):
        return isinstance(other, AllocationPlan) and np.array_equal(self.assign, other.assign)

    __hash__ = None


def _require_capacity(m: int, subs: SubchannelSet):
    if m > subs.total_capacity:
        raise CapacityError(f"{m} units do not fit in {subs.s} subchannels x capacity {subs.capacity}")


def _scores(mask_or_r) -> np.ndarray:
    return np.asarray(getattr(mask_or_r, "r", mask_or_r), dtype=np.float64).reshape(-1)


def _pair(r: np.ndarray, snr: np.ndarray, capacity: int, strategy: str) -> AllocationPlan:
    """Least robust unit first, each onto the best subchannel with room left."""
    m = r.size
    unit_order = np.lexsort((np.arange(m), r))  # ascending r, then index
    sub_order = np.lexsort((np.arange(snr.size), -snr))  # descending SNR, then index
    assign = np.empty(m, dtype=np.int64)
    remaining = np.full(snr.size, capacity)
    cursor = 0  # front of the still-open subchannel list
    steps = 0
    for k in unit_order:
        j = sub_order[cursor]
        assign[k] = j
        steps += 1
        remaining[j] -= 1
        if remaining[j] == 0:
            cursor += 1
    return AllocationPlan(assign, strategy, steps)


def greedy_allocate(mask, subs: SubchannelSet) -> AllocationPlan:
    """Units in ascending score take the highest-SNR subchannel that still has capacity.

    Sorting costs O(m log m + s log s); the pairing loop itself is m steps.
    """
    r = _scores(mask)
    _require_capacity(r.size, subs)
    return _pair(r, subs.snr_db, subs.capacity, "proposed").check(subs)


def worst_case_allocate(mask, subs: SubchannelSet) -> AllocationPlan:
    """Least robust units onto the lowest-SNR subchannels."""
    r = _scores(mask)
    _require_capacity(r.size, subs)
    return _pair(r, -subs.snr_db, subs.capacity, "worst_case").check(subs)


def random_allocate(m: int, subs: SubchannelSet, rng: Rng) -> AllocationPlan:
    """Random slot assignment: each unit takes one of ``s * capacity`` slots without replacement."""
    _require_capacity(m, subs)
    slots = np.repeat(np.arange(subs.s), subs.capacity)
    perm = rng.permutation(slots.size)
    return AllocationPlan(slots[perm[:m]], "random", m).check(subs)


def brute_force_allocate(score, subs: SubchannelSet, max_units: int = 10, max_subchannels: int = 5,
                         chunk: int = 1 << 18) -> AllocationPlan:
    """Exhaustive search maximizing ``sum_k score[k, assign[k]]``.

    Candidates are scanned in lexicographic order and only a strictly better
    total replaces the incumbent, so ties resolve to the smallest assignment.
    """
    score = np.asarray(score, dtype=np.float64)
    m, s = score.shape
    if s != subs.s:
        raise ParameterError("score table width must equal the number of subchannels")
    if m > max_units or s > max_subchannels:
        raise SizeError(f"brute force limited to m <= {max_units}, s <= {max_subchannels}")
    _require_capacity(m, subs)
    powers = s ** np.arange(m - 1, -1, -1, dtype=np.int64)
    best_val, best = -np.inf, None
    total = s ** m
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (codes[:, None] // powers[None, :]) % s
        counts = np.zeros((codes.size, s), dtype=np.int64)
        for j in range(s):
            counts[:, j] = (digits == j).sum(axis=1)
        feasible = (counts <= subs.capacity).all(axis=1)
        if not feasible.any():
            continue
        vals = score[np.arange(m)[None, :], digits].sum(axis=1)
        vals[~feasible] = -np.inf
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best = vals[i], digits[i].copy()
    return AllocationPlan(best, "brute_force", m).check(subs)


def separable_utility(r, subs: SubchannelSet) -> np.ndarray:
    """``exp(-r_k) * snr_linear_j``: strictly decreasing in score, increasing in SNR.

    Both factors stay positive, so the optimum is unique whenever scores and
    SNRs are distinct (a ``1 - r`` weight would vanish at ``m = 1``).
    """
    r = _scores(r)
    return np.outer(np.exp(-r), 10.0 ** (subs.snr_db / 10.0))


def allocate(strategy: str, mask, subs: SubchannelSet, rng: Rng | None = None) -> AllocationPlan:
    if strategy == "proposed":
        return greedy_allocate(mask, subs)
    if strategy == "worst_case":
        return worst_case_allocate(mask, subs)
    if strategy == "random":
        if rng is None:
            raise ParameterError("random allocation needs an rng")
        return random_allocate(_scores(mask).size, subs, rng)
    if strategy == "brute_force":
        return brute_force_allocate(separable_utility(mask, subs), subs)
    raise ParameterError(f"unknown strategy {strategy!r}")


def plan_to_csv(plan: AllocationPlan, subs: SubchannelSet, r, path) -> None:
    r = _scores(r)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_index", "subchannel_index", "r", "snr_db"])
        for k, j in enumerate(plan.assign):
            w.writerow([k, int(j), repr(float(r[k])), repr(float(subs.snr_db[j]))])


def plan_from_csv(path, strategy: str = "proposed") -> AllocationPlan:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["unit_index", "subchannel_index", "r", "snr_db"]:
        raise FormatError(f"{path}: unexpected plan header")
    try:
        entries = sorted((int(r[0]), int(r[1])) for r in rows[1:] if r)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    if [k for k, _ in entries] != list(range(len(entries))):
        raise FormatError(f"{path}: unit indices must be 0..m-1")
    return AllocationPlan([j for _, j in entries], strategy, len(entries))
