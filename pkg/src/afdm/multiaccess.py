"""Orthogonal DAFT-domain resource allocation for several users (AFDMA)."""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .channel import offset_range
from .core import AfdmParams, DdProfile

PLAN_SCHEMA = "afdm.allocation-plan"
PLAN_VERSION = 1


class CapacityError(ValueError):
    """The requested users do not fit in one frame."""


class Direction(str, enum.Enum):
    DOWNLINK = "downlink"
    UPLINK = "uplink"


@dataclass(frozen=True)
class UserSpec:
    user_id: str
    profile: DdProfile
    demand: int
    margin: int = 0

    def __post_init__(self) -> None:
        if self.demand < 0:
            raise ValueError("demand must be nonnegative")


def spread_band(profile: DdProfile, params: AfdmParams, margin: int = 0) -> tuple[int, int]:
    """Lowest and highest diagonal offset of the profile, widened by ``margin`` in total."""
    lo, hi = offset_range(params, profile.l_max, profile.k_max)
    return lo - margin // 2, hi + (margin - margin // 2)


def compute_guard(profile: DdProfile, params: AfdmParams, margin: int = 0) -> int:
    """Guard symbols needed by one user: the width of its ECM band plus ``margin``.

    ``2N|c1| l_max + 2 k_max + margin``, clamped to ``N - 1``.
    """
    if not params.integer_mapping:
        raise ValueError("guard sizing needs 2*N*c1 to be an integer")
    width = abs(params.delay_shift) * profile.l_max + 2 * profile.k_max + margin
    return int(min(width, params.n_sub - 1))


@dataclass(frozen=True)
class _Element:
    kind: str            # "pilot" or "data"
    owner: str | None    # None for the shared downlink pilot
    length: int


@dataclass
class UserAllocation:
    data: list[int] = field(default_factory=list)
    pilot: list[int] = field(default_factory=list)
    guard: list[int] = field(default_factory=list)


@dataclass
class AllocationPlan:
    """Disjoint per-user index sets over ``[0, N)``.

    In downlink the single pilot is listed under ``shared_pilot``. Indices that
    belong to nobody are ``padding``.
    """

    n_sub: int
    direction: Direction
    users: dict[str, UserAllocation]
    order: list[str]
    shared_pilot: list[int] = field(default_factory=list)
    guards: list[int] = field(default_factory=list)
    padding: list[int] = field(default_factory=list)
    bands: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def total_guard(self) -> int:
        return len(self.guards)

    def assigned(self) -> list[int]:
        out = list(self.shared_pilot)
        for u in self.users.values():
            out += u.data + u.pilot
        return out

    def check_disjoint(self) -> None:
        idx = self.assigned() + self.guards + self.padding
        if len(idx) != len(set(idx)):
            raise AssertionError("index assigned twice")
        if len(set(idx)) != self.n_sub:
            raise AssertionError("plan does not cover every index exactly once")

    def pilot_index(self, user_id: str) -> int:
        if self.shared_pilot:
            return self.shared_pilot[0]
        return self.users[user_id].pilot[0]

    def _reach(self, indices: list[int], band: tuple[int, int]) -> set[int]:
        return {(i + d) % self.n_sub for i in indices for d in range(band[0], band[1] + 1)}

    def observation_rows(self, user_id: str) -> np.ndarray:
        """Received rows carrying this user's data and nothing from anyone else.

        In uplink every other element arrives through its owner's channel; in
        downlink the user sees everything through its own channel.
        """
        own = self.users[user_id]
        band = self.bands[user_id]
        rows = self._reach(own.data, band)
        if self.direction is Direction.DOWNLINK:
            others = list(self.shared_pilot) + own.pilot + [
                i for uid, u in self.users.items() if uid != user_id for i in u.data + u.pilot]
            rows -= self._reach(others, band)
        else:
            rows -= self._reach(own.pilot, band)
            for uid, u in self.users.items():
                if uid != user_id:
                    rows -= self._reach(u.data + u.pilot, self.bands[uid])
        return np.array(sorted(rows), dtype=int)

    def to_dict(self) -> dict:
        def ranges(ix: list[int]) -> list[list[int]]:
            out: list[list[int]] = []
            for i in sorted(ix):
                if out and out[-1][1] == i - 1:
                    out[-1][1] = i
                else:
                    out.append([i, i])
            return out

        return {
            "schema": PLAN_SCHEMA,
            "version": PLAN_VERSION,
            "n_sub": self.n_sub,
            "direction": self.direction.value,
            "order": self.order,
            "shared_pilot": ranges(self.shared_pilot),
            "guards": ranges(self.guards),
            "padding": ranges(self.padding),
            "users": {
                uid: {"data": ranges(u.data), "pilot": ranges(u.pilot),
                      "band": list(self.bands[uid])}
                for uid, u in self.users.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _gap(a: _Element, b: _Element, bands: dict[str, tuple[int, int]],
         direction: Direction) -> int:
    """Zero symbols needed between consecutive elements ``a`` then ``b``.

    Every element must be observable over its whole reach without picking up
    anything else. In uplink each element travels through its owner's channel;
    in downlink each user sees every element through its own channel, so the
    gap is the widest band among the users observing either side.
    """
    if direction is Direction.UPLINK:
        need = bands[a.owner][1] - bands[b.owner][0]
    else:
        need = max((bands[u][1] - bands[u][0] for u in bands
                    if a.owner in (u, None) or b.owner in (u, None)), default=0)
    return max(need, 0)


def _layout(order: list[str], users: dict[str, UserSpec], direction: Direction,
            shared_pilot: bool = True) -> list[_Element]:
    elems: list[_Element] = []
    if direction is Direction.DOWNLINK and shared_pilot:
        elems.append(_Element("pilot", None, 1))
        for uid in order:
            elems.append(_Element("data", uid, users[uid].demand))
    else:
        for uid in order:
            elems.append(_Element("pilot", uid, 1))
            elems.append(_Element("data", uid, users[uid].demand))
    return [e for e in elems if e.length > 0]


def _cycle_gaps(elems: list[_Element], bands: dict[str, tuple[int, int]],
                direction: Direction) -> list[int]:
    k = len(elems)
    return [_gap(elems[i], elems[(i + 1) % k], bands, direction) for i in range(k)]


def allocate_afdma(users: list[UserSpec], params: AfdmParams,
                   direction: Direction | str = Direction.DOWNLINK,
                   shared_pilot: bool = True) -> AllocationPlan:
    """Lay out pilots, data blocks and guards for all users in one DAFT frame.

    Users are ordered by guard requirement (widest first, next to the pilot);
    for up to seven users every ordering is tried and the one with the fewest
    guard symbols wins, ties going to the sorted order. Downlink frames carry
    one pilot for everybody unless ``shared_pilot`` is False; uplink frames
    always carry one pilot per user.
    """
    direction = Direction(direction)
    n = params.n_sub
    if not users:
        raise ValueError("no users")
    ids = [u.user_id for u in users]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate user ids")
    by_id = {u.user_id: u for u in users}
    bands = {u.user_id: spread_band(u.profile, params, u.margin) for u in users}
    gammas = {u.user_id: compute_guard(u.profile, params, u.margin) for u in users}

    sorted_order = sorted(ids, key=lambda uid: (-gammas[uid], ids.index(uid)))
    candidates = [sorted_order, ids]
    if len(ids) <= 7:
        candidates += [list(p) for p in itertools.permutations(ids)]

    def cost(order: list[str]) -> int:
        return sum(_cycle_gaps(_layout(order, by_id, direction, shared_pilot), bands, direction))

    best = min(candidates, key=cost)
    elems = _layout(best, by_id, direction, shared_pilot)
    gaps = _cycle_gaps(elems, bands, direction)
    used = sum(e.length for e in elems) + sum(gaps)
    if used > n:
        raise CapacityError(f"plan needs {used} indices but N={n}; short by {used - n}")

    plan = AllocationPlan(n, direction, {uid: UserAllocation() for uid in ids}, best, bands=bands)
    pos = 0
    for e, g in zip(elems, gaps):
        block = list(range(pos, pos + e.length))
        if e.owner is None:
            plan.shared_pilot += block
        elif e.kind == "pilot":
            plan.users[e.owner].pilot += block
        else:
            plan.users[e.owner].data += block
        pos += e.length
        guard = list(range(pos, pos + g))
        plan.guards += guard
        if e.owner is not None:
            plan.users[e.owner].guard += guard
        pos += g
    plan.padding = list(range(pos, n))
    plan.check_disjoint()
    return plan


def unsorted_guard_total(users: list[UserSpec], params: AfdmParams,
                         direction: Direction | str = Direction.DOWNLINK,
                         shared_pilot: bool = True) -> int:
    """Guard symbols the given user order would need; the baseline for ordering gains."""
    direction = Direction(direction)
    by_id = {u.user_id: u for u in users}
    bands = {u.user_id: spread_band(u.profile, params, u.margin) for u in users}
    elems = _layout([u.user_id for u in users], by_id, direction, shared_pilot)
    return sum(_cycle_gaps(elems, bands, direction))


def user_frame(plan: AllocationPlan, data: dict[str, np.ndarray], pilot_amplitude: float = 1.0,
               user_id: str | None = None) -> np.ndarray:
    """DAFT-domain frame to transmit.

    Uplink: pass ``user_id`` and get that user's frame (own pilot and data only).
    Downlink: the base-station frame carrying the shared pilot and all users' data.
    """
    x = np.zeros(plan.n_sub, dtype=complex)
    if plan.direction is Direction.UPLINK:
        if user_id is None:
            raise ValueError("uplink frames are per user")
        ids = [user_id]
        x[plan.users[user_id].pilot] = pilot_amplitude
    else:
        ids = list(plan.users)
        x[plan.shared_pilot] = pilot_amplitude
        for u in plan.users.values():
            x[u.pilot] = pilot_amplitude
    for uid in ids:
        sym = np.asarray(data[uid], dtype=complex)
        if sym.size != len(plan.users[uid].data):
            raise ValueError(f"user {uid} has {len(plan.users[uid].data)} data slots, got {sym.size}")
        x[plan.users[uid].data] = sym
    return x


def user_soft_estimate(plan: AllocationPlan, user_id: str, ecm_matrix: np.ndarray,
                       rx: np.ndarray) -> np.ndarray:
    """Least-squares estimate of one user's data from its observation rows.

    ``ecm_matrix`` is that user's effective channel; in uplink ``rx`` is the
    superposition received at the base station.
    """
    rows = plan.observation_rows(user_id)
    cols = np.array(sorted(plan.users[user_id].data), dtype=int)
    sub = ecm_matrix[np.ix_(rows, cols)]
    sol, *_ = np.linalg.lstsq(sub, np.asarray(rx)[rows], rcond=None)
    return sol
