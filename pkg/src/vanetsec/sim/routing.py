"""Simplified routing baselines: DSDV tables and greedy geographic forwarding."""

from __future__ import annotations

from dataclasses import dataclass

DSDV_ENTRY_BYTES = 16
NEIGHBOR_ENTRY_BYTES = 20
GPSR_PACKET_STATE_BYTES = 12   # destination position, mode, hop count
BMFR_PACKET_STATE_BYTES = 16   # GPSR state plus the forwarding-sector descriptor


@dataclass
class Route:
    next_hop: int
    metric: int
    seq: int
    updated_at: float


class DSDVTable:
    """Destination-sequenced distance-vector table of one node."""

    def __init__(self, owner: int):
        self.owner = owner
        self.seq = 0
        self.routes: dict[int, Route] = {owner: Route(owner, 0, 0, 0.0)}

    def __len__(self) -> int:
        return len(self.routes)

    def advertise(self, now: float) -> list[tuple[int, int, int]]:
        """Bump our own sequence number and return the full table as (dest, metric, seq)."""
        self.seq += 2
        self.routes[self.owner] = Route(self.owner, 0, self.seq, now)
        return [(dest, r.metric, r.seq) for dest, r in self.routes.items()]

    def merge(self, neighbor: int, advert: list[tuple[int, int, int]], now: float) -> None:
        for dest, metric, seq in advert:
            if dest == self.owner:
                continue
            cur = self.routes.get(dest)
            cand = metric + 1
            if cur is None or seq > cur.seq or (seq == cur.seq and cand < cur.metric):
                self.routes[dest] = Route(neighbor, cand, seq, now)
            elif cur.next_hop == neighbor and seq == cur.seq:
                cur.updated_at = now

    def expire(self, now: float, max_age: float) -> None:
        stale = [d for d, r in self.routes.items() if d != self.owner and now - r.updated_at > max_age]
        for d in stale:
            del self.routes[d]

    def next_hop(self, dest: int) -> int | None:
        r = self.routes.get(dest)
        return None if r is None else r.next_hop


class NeighborTable:
    """Beacon-built positions of one-hop neighbors."""

    def __init__(self, owner: int):
        self.owner = owner
        self.entries: dict[int, tuple[float, float]] = {}
        self.permanent: dict[int, float] = {}

    def __len__(self) -> int:
        return len(self.entries) + len(self.permanent)

    def heard(self, node: int, position: float, now: float) -> None:
        self.entries[node] = (position, now)

    def expire(self, now: float, max_age: float) -> None:
        stale = [n for n, (_, t) in self.entries.items() if now - t > max_age]
        for n in stale:
            del self.entries[n]

    def positions(self) -> dict[int, float]:
        out = {n: p for n, (p, _) in self.entries.items()}
        out.update(self.permanent)
        return out


def greedy_next_hop(own_pos: float, dest: int, dest_pos: float,
                    neighbors: dict[int, float]) -> int | None:
    """GPSR greedy mode: the neighbor closest to the destination, if it makes progress."""
    if dest in neighbors:
        return dest
    best, best_dist = None, abs(own_pos - dest_pos)
    for node, pos in sorted(neighbors.items()):
        dist = abs(pos - dest_pos)
        if dist < best_dist:
            best, best_dist = node, dist
    return best


def sector_next_hop(own_pos: float, dest: int, dest_pos: float,
                    neighbors: dict[int, float]) -> int | None:
    """BMFR-style choice: among neighbors on the destination's side of us, the one
    leaving the least remaining distance."""
    if dest in neighbors:
        return dest
    direction = 1.0 if dest_pos >= own_pos else -1.0
    own_dist = abs(own_pos - dest_pos)
    best, best_dist = None, own_dist
    for node, pos in sorted(neighbors.items()):
        if (pos - own_pos) * direction <= 0:
            continue
        dist = abs(pos - dest_pos)
        if dist < best_dist:
            best, best_dist = node, dist
    return best

