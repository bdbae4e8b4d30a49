"""Boltzmann sampler for triangulations of a polygon.

A filled p-gon is drawn with probability kappa^(internal vertices) / Z_p.
The sampler works hole-first: a work hole of perimeter p is resolved by
one of

* close (p = 2 only): the hole zips shut, probability 1/Z_2;
* fresh: the triangle on the hole's root edge has a new internal apex,
  probability kappa Z_{p+1} / Z_p, leaving a (p+1)-hole;
* split at k in 1..p-2: the apex is the k-th boundary vertex ahead,
  probability Z_{k+1} Z_{p-k} / Z_p, leaving a (k+1)-hole and a
  (p-k)-hole.

The three weights sum to one exactly (the splitting identity of the
partition functions); the implementation checks the float sum at table
build time.  All ratios are computed through the one-sided step weights
q_{-k} = 2 beta^k Z_{k+1}, which keeps every intermediate quantity well
scaled however large p gets.

Two drivers consume the same decision stream: :meth:`BoltzmannFiller.fill_hole`
performs the surgeries on a map, :meth:`BoltzmannFiller.fill_volume` only
keeps score.  Given equal streams they make identical decisions draw for
draw, which the growth engines exploit to couple a map-backed process
with its lightweight twin.
"""

from __future__ import annotations

from bisect import bisect_right
from typing import Optional

from .errors import BudgetExceededError, DomainError, InvariantViolationError
from .params import PeelParams
from .planarmap import TriMap
from .rng import RngStream

_CLOSE = ("close",)
_FRESH = ("fresh",)

_ROW_TOL = 1e-9


class BoltzmannFiller:
    """Decision tables plus the two fill drivers for fixed parameters."""

    def __init__(self, params: PeelParams):
        self.params = params
        self._rows: dict[int, tuple[list, list]] = {}

    def row(self, p: int) -> tuple[list, list]:
        """Cumulative decision thresholds at hole perimeter p.

        Returns (cuts, decisions): cuts[i] is the cumulative probability
        through decisions[i]; the last cut is forced to 1 after the sum
        passes the consistency check.
        """
        cached = self._rows.get(p)
        if cached is not None:
            return cached
        if p < 2:
            raise DomainError(f"hole perimeter p={p} must be at least 2")
        params = self.params
        params.ensure_q(p)
        qn = params._qneg
        decisions = []
        probs = []
        if p == 2:
            decisions.append(_CLOSE)
            probs.append(2.0 * params.beta / qn[1])
        decisions.append(_FRESH)
        probs.append(params.alpha * qn[p] / qn[p - 1])
        for k in range(1, p - 1):
            decisions.append(("split", k))
            probs.append(qn[k] * qn[p - 1 - k] / (2.0 * qn[p - 1]))
        total = sum(probs)
        if abs(total - 1.0) > _ROW_TOL:
            raise InvariantViolationError(
                f"hole decision weights at p={p} sum to {total!r}, not 1"
            )
        cuts = []
        acc = 0.0
        for w in probs:
            acc += w
            cuts.append(acc)
        cuts[-1] = 1.0
        self._rows[p] = (cuts, decisions)
        return cuts, decisions

    def decide(self, p: int, rng: RngStream) -> tuple:
        """Draw one hole decision, consuming exactly one uniform."""
        cuts, decisions = self.row(p)
        return decisions[bisect_right(cuts, rng.u())]

    # -- drivers ----------------------------------------------------------

    def fill_hole(
        self,
        tmap: TriMap,
        hole_he: int,
        perimeter: int,
        rng: RngStream,
        max_steps: Optional[int] = None,
    ) -> int:
        """Resolve a work hole by surgery until nothing is left of it.

        Returns the number of internal vertices added.  Split pushes the
        far piece and keeps working on the near piece, depth-first, so
        the decision order is a deterministic function of the stream.
        """
        stack = [(hole_he, perimeter)]
        added = 0
        steps = 0
        while stack:
            h, p = stack.pop()
            d = self.decide(p, rng)
            steps += 1
            if max_steps is not None and steps > max_steps:
                raise BudgetExceededError(
                    f"hole fill exceeded {max_steps} decisions",
                    partial={"decisions": steps, "added": added},
                )
            if d is _CLOSE:
                tmap.close_two_gon(h)
            elif d is _FRESH:
                c2, _, _ = tmap.attach_fresh(h)
                added += 1
                stack.append((c2, p + 1))
            else:
                k = d[1]
                cont, enclosed, _ = tmap.open_swallow(h, k, "next")
                stack.append((cont, p - k))
                stack.append((enclosed, k + 1))
        return added

    def fill_volume(
        self,
        perimeter: int,
        rng: RngStream,
        max_steps: Optional[int] = None,
    ) -> int:
        """Scorekeeping twin of :meth:`fill_hole`: same decisions, no map."""
        stack = [perimeter]
        added = 0
        steps = 0
        while stack:
            p = stack.pop()
            d = self.decide(p, rng)
            steps += 1
            if max_steps is not None and steps > max_steps:
                raise BudgetExceededError(
                    f"hole fill exceeded {max_steps} decisions",
                    partial={"decisions": steps, "added": added},
                )
            if d is _CLOSE:
                pass
            elif d is _FRESH:
                added += 1
                stack.append(p + 1)
            else:
                k = d[1]
                stack.append(p - k)
                stack.append(k + 1)
        return added

    def sample_map(
        self,
        p: int,
        rng: RngStream,
        max_steps: Optional[int] = None,
    ) -> tuple[TriMap, int]:
        """Boltzmann-distributed triangulation of the p-gon.

        The returned map is rooted on the outer side of the polygon's
        root edge; its main hole is the polygon's outside.
        """
        tmap, inner = TriMap.polygon(p)
        added = self.fill_hole(tmap, inner, p, rng, max_steps=max_steps)
        return tmap, added

    # -- exhaustive small-map enumeration ----------------------------------

    def enumerate_fillings(self, p: int, n_max: int) -> dict:
        """All fillings of the p-gon with at most n_max internal vertices.

        Walks the full decision tree, pruning branches once they commit
        to more than n_max internal vertices.  Returns {canonical code:
        (n_internal, probability)} where the probability is the product
        of decision weights along the unique path that builds the map.
        Each decision sequence yields a distinct rooted map, so the
        number of codes at a given n doubles as a surgery-correctness
        check against the closed counting formula.
        """
        base, inner = TriMap.polygon(p)
        agenda = [(base, [(inner, p)], 0, 1.0)]
        out: dict = {}
        while agenda:
            tmap, stack, n, prob = agenda.pop()
            if not stack:
                code = tmap.canonical_code()
                if code in out:
                    raise InvariantViolationError(
                        "two decision paths built the same rooted map"
                    )
                out[code] = (n, prob)
                continue
            h, q = stack[-1]
            cuts, decisions = self.row(q)
            prev = 0.0
            for cut, d in zip(cuts, decisions):
                w = cut - prev
                prev = cut
                if d is _FRESH and n + 1 > n_max:
                    continue
                m2 = tmap.clone()
                st2 = stack[:-1]
                n2 = n
                if d is _CLOSE:
                    m2.close_two_gon(h)
                elif d is _FRESH:
                    c2, _, _ = m2.attach_fresh(h)
                    n2 = n + 1
                    st2 = st2 + [(c2, q + 1)]
                else:
                    k = d[1]
                    cont, enclosed, _ = m2.open_swallow(h, k, "next")
                    st2 = st2 + [(cont, q - k), (enclosed, k + 1)]
                agenda.append((m2, st2, n2, prob * w))
        return out
