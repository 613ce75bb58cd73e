"""Seed a weight kernel at the most central vertex and drag it to every
other vertex along minimum-deformation chains of local translations.

Each vertex keeps the single best placement seen so far, compared by
(total deformation, losses, slot-image sequence). The expansion is
best-first over that key, a kept placement is revisited whenever a later
chain improves it, and the loop runs until no kept placement can improve
any neighbor. The result is a true fixed point of the per-vertex-winner
process: re-running the relaxation over it changes nothing.
"""

from __future__ import annotations

import heapq
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

from .graph import ConnectivityError, Graph, ParameterError, bfs_distances, is_connected
from .translations import (
    LOSS_TEXT,
    DeformationScore,
    KernelPlacement,
    ZERO_SCORE,
    _seq_key,
    find_local_translation,
)


class PlacementFormatError(Exception):
    """Malformed placement-map text. Carries a 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


def closeness_centrality(g: Graph) -> list[float]:
    """Inverse of each vertex's summed hop distance to all others."""
    if g.n == 0:
        raise ParameterError("empty graph has no centrality")
    if not is_connected(g):
        raise ConnectivityError("closeness centrality needs a connected graph")
    if g.n == 1:
        return [math.inf]
    out = []
    for v in range(g.n):
        out.append(1.0 / sum(bfs_distances(g, v)))
    return out


def most_central_vertex(g: Graph) -> int:
    """Vertex with the highest closeness; ties go to the smallest id."""
    if not is_connected(g):
        raise ConnectivityError("most central vertex needs a connected graph")
    if g.n == 1:
        return 0
    # compare integer distance sums to dodge float equality
    best_v, best_sum = 0, None
    for v in range(g.n):
        s = sum(bfs_distances(g, v))
        if best_sum is None or s < best_sum:
            best_v, best_sum = v, s
    return best_v


def init_kernel(g: Graph, center: int, radius: int = 1) -> KernelPlacement:
    """Fresh kernel: the center plus every vertex within ``radius`` hops,
    slots ordered by (hop distance, vertex id)."""
    if not (0 <= center < g.n):
        raise ParameterError(f"center {center} out of range for n={g.n}")
    if radius < 0:
        raise ParameterError(f"radius must be nonnegative, got {radius}")
    dist = bfs_distances(g, center)
    members = [(d, v) for v, d in enumerate(dist) if d <= radius]
    members.sort()
    slots = tuple(v for _, v in members)
    return KernelPlacement(center=center, slots=slots, accumulated=ZERO_SCORE)


@dataclass
class PlacementMap:
    """Best kernel placement found for every vertex, plus run metadata."""

    n: int
    k: int
    seed: int
    alpha: float
    beta: float
    placements: dict[int, KernelPlacement] = field(default_factory=dict)

    def is_complete(self) -> bool:
        return all(v in self.placements for v in range(self.n))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PlacementMap):
            return NotImplemented
        return (
            self.n == other.n
            and self.k == other.k
            and self.seed == other.seed
            and self.alpha == other.alpha
            and self.beta == other.beta
            and self.placements == other.placements
        )


def _placement_key(p: KernelPlacement) -> tuple:
    return (p.accumulated.total, p.accumulated.losses, _seq_key(p.slots))


def resolve_workers(requested: int | None = None) -> int:
    """Worker count for frontier evaluation; GCF_THREADS caps it."""
    w = 1 if requested is None else max(1, requested)
    cap = os.environ.get("GCF_THREADS")
    if cap is not None:
        try:
            w = min(w, max(1, int(cap)))
        except ValueError:
            raise ParameterError(f"GCF_THREADS must be an integer, got {cap!r}") from None
    return w


@lru_cache(maxsize=1 << 18)
def _cached_translation(
    g: Graph, center: int, slots: tuple[int | None, ...], target: int, alpha: float, beta: float
) -> tuple[tuple[int | None, ...], DeformationScore]:
    # pure function of its arguments; caching makes repeated runs (multiple
    # worker configurations, refinement passes) nearly free
    source = KernelPlacement(center=center, slots=slots, accumulated=ZERO_SCORE)
    t, step_score = find_local_translation(g, source, target, alpha, beta)
    mapping = t.mapping()
    new_slots = tuple(None if v is None else mapping[v] for v in slots)
    return new_slots, step_score


def _step(
    g: Graph, source: KernelPlacement, target: int, alpha: float, beta: float
) -> KernelPlacement:
    """Apply the best local translation of ``source`` onto ``target``."""
    new_slots, step_score = _cached_translation(
        g, source.center, source.slots, target, alpha, beta
    )
    return KernelPlacement(
        center=target, slots=new_slots, accumulated=source.accumulated + step_score
    )


def propagate(
    g: Graph,
    seed_kernel: KernelPlacement,
    alpha: float = 1.0,
    beta: float = 1.0,
    workers: int | None = None,
) -> PlacementMap:
    """Best-first propagation of the seed kernel to every vertex."""
    if not is_connected(g):
        raise ConnectivityError("propagation needs a connected graph")
    pm = PlacementMap(
        n=g.n, k=seed_kernel.k, seed=seed_kernel.center, alpha=alpha, beta=beta,
        placements={seed_kernel.center: seed_kernel},
    )
    _settle(g, pm, workers)
    return pm


def refine(g: Graph, pm: PlacementMap, workers: int | None = None) -> PlacementMap:
    """Re-run the relaxation from an existing map; a settled map is a fixed
    point, so refining it returns an equal map."""
    out = PlacementMap(
        n=pm.n, k=pm.k, seed=pm.seed, alpha=pm.alpha, beta=pm.beta,
        placements=dict(pm.placements),
    )
    _settle(g, out, workers)
    return out


def _settle(g: Graph, pm: PlacementMap, workers: int | None) -> None:
    nworkers = resolve_workers(workers)
    best = pm.placements
    heap: list[tuple] = []
    for v in sorted(best):
        heapq.heappush(heap, (*_placement_key(best[v]), v))

    pool = ThreadPoolExecutor(max_workers=nworkers) if nworkers > 1 else None
    try:
        while heap:
            *key, u = heapq.heappop(heap)
            placement = best.get(u)
            if placement is None or tuple(key) != _placement_key(placement):
                continue  # stale entry
            # a step only adds deformation and never resurrects lost slots,
            # so some incumbents are unbeatable from here without searching
            acc = placement.accumulated
            targets = []
            for t in g.neighbors(u):
                inc = best.get(t)
                if inc is not None:
                    if inc.accumulated.total < acc.total:
                        continue
                    if (
                        inc.accumulated.total == acc.total
                        and inc.accumulated.losses < placement.loss_count
                    ):
                        continue
                targets.append(t)
            if pool is not None:
                results = list(
                    pool.map(lambda t: _step(g, placement, t, pm.alpha, pm.beta), targets)
                )
            else:
                results = [_step(g, placement, t, pm.alpha, pm.beta) for t in targets]
            # the relax step is a serial, deterministic reduction
            for candidate in results:
                t = candidate.center
                incumbent = best.get(t)
                if incumbent is None or _placement_key(candidate) < _placement_key(incumbent):
                    best[t] = candidate
                    heapq.heappush(heap, (*_placement_key(candidate), t))
    finally:
        if pool is not None:
            pool.shutdown()


@dataclass(frozen=True)
class PlacementReport:
    """Summary of a placement map: per-vertex deformation and completeness."""

    per_vertex: tuple[tuple[int, float, int], ...]  # (vertex, total, losses)
    score_histogram: tuple[tuple[float, int], ...]
    complete_count: int
    vertex_count: int

    def render(self) -> str:
        lines = [
            f"vertices: {self.vertex_count}",
            f"loss-free placements: {self.complete_count} of {self.vertex_count}",
            "score histogram:",
        ]
        for total, count in self.score_histogram:
            lines.append(f"  score {total:g}: {count} vertices")
        return "\n".join(lines) + "\n"


def placement_report(pm: PlacementMap) -> PlacementReport:
    per_vertex = tuple(
        (v, pm.placements[v].accumulated.total, pm.placements[v].loss_count)
        for v in sorted(pm.placements)
    )
    hist: dict[float, int] = {}
    complete = 0
    for _, total, losses in per_vertex:
        hist[total] = hist.get(total, 0) + 1
        if losses == 0:
            complete += 1
    return PlacementReport(
        per_vertex=per_vertex,
        score_histogram=tuple(sorted(hist.items())),
        complete_count=complete,
        vertex_count=len(per_vertex),
    )


HEADER_COMMENT = "# gcforge placement map v1"


def serialize_placements(pm: PlacementMap) -> str:
    """Canonical text form.

    Line 1 is a format comment; line 2 is ``n K seed alpha beta``; then one
    line per vertex, sorted by center id::

        center; score; slot0=v, slot1=⊥, ...

    ``score`` is the accumulated deformation total. Lost slots render as
    ``⊥``. Encode as UTF-8.
    """
    lines = [HEADER_COMMENT, f"{pm.n} {pm.k} {pm.seed} {pm.alpha!r} {pm.beta!r}"]
    for v in sorted(pm.placements):
        p = pm.placements[v]
        slots = ", ".join(
            f"slot{i}={LOSS_TEXT if s is None else s}" for i, s in enumerate(p.slots)
        )
        lines.append(f"{v}; {p.accumulated.total!r}; {slots}")
    return "\n".join(lines) + "\n"


def parse_placements(text: str) -> PlacementMap:
    """Parse the placement-map format produced by :func:`serialize_placements`."""
    pm: PlacementMap | None = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if pm is None:
            parts = line.split()
            if len(parts) != 5:
                raise PlacementFormatError(
                    f"expected header 'n K seed alpha beta', got {line!r}", line_no
                )
            try:
                n, k, seed = int(parts[0]), int(parts[1]), int(parts[2])
                alpha, beta = float(parts[3]), float(parts[4])
            except ValueError:
                raise PlacementFormatError(f"non-numeric header field in {line!r}", line_no) from None
            if n < 0 or k < 1 or not (0 <= seed < max(n, 1)):
                raise PlacementFormatError(f"header values out of range: {line!r}", line_no)
            pm = PlacementMap(n=n, k=k, seed=seed, alpha=alpha, beta=beta)
            continue

        parts = [p.strip() for p in line.split(";")]
        if len(parts) != 3:
            raise PlacementFormatError(
                f"expected 'center; score; slots', got {line!r}", line_no
            )
        try:
            center = int(parts[0])
            total = float(parts[1])
        except ValueError:
            raise PlacementFormatError(f"non-numeric center or score in {line!r}", line_no) from None
        if not (0 <= center < pm.n):
            raise PlacementFormatError(f"center {center} out of range", line_no)
        if center in pm.placements:
            raise PlacementFormatError(f"duplicate placement for center {center}", line_no)

        slot_fields = [s.strip() for s in parts[2].split(",")]
        if len(slot_fields) != pm.k:
            raise PlacementFormatError(
                f"expected {pm.k} slots, got {len(slot_fields)}", line_no
            )
        slots: list[int | None] = []
        for i, fieldtext in enumerate(slot_fields):
            prefix = f"slot{i}="
            if not fieldtext.startswith(prefix):
                raise PlacementFormatError(f"expected '{prefix}...', got {fieldtext!r}", line_no)
            value = fieldtext[len(prefix):]
            if value == LOSS_TEXT:
                slots.append(None)
            else:
                try:
                    vid = int(value)
                except ValueError:
                    raise PlacementFormatError(
                        f"slot value must be a vertex id or {LOSS_TEXT}, got {value!r}", line_no
                    ) from None
                if not (0 <= vid < pm.n):
                    raise PlacementFormatError(f"slot vertex {vid} out of range", line_no)
                slots.append(vid)
        losses = sum(1 for s in slots if s is None)
        if pm.beta > 0:
            snp = round((total - pm.alpha * losses) / pm.beta)
            if abs(pm.alpha * losses + pm.beta * snp - total) > 1e-9 or snp < 0:
                raise PlacementFormatError(
                    f"score {total!r} inconsistent with {losses} losses", line_no
                )
        else:
            snp = 0
        score = DeformationScore(losses, snp, total)
        try:
            pm.placements[center] = KernelPlacement(
                center=center, slots=tuple(slots), accumulated=score
            )
        except Exception as exc:
            raise PlacementFormatError(str(exc), line_no) from None
    if pm is None:
        raise PlacementFormatError("empty input: missing header")
    return pm
