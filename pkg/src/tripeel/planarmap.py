"""Half-edge arena for rooted planar triangulations with holes.

A map is stored as four parallel integer arrays indexed by half-edge id:
``twin`` (the opposite half-edge of the same edge), ``nxt``/``prv`` (the
face cycle), and ``org`` (origin vertex).  Every alive half-edge lies on
exactly one face cycle, and each cycle is either a triangle or a hole:

* ``hflag == 0``: the half-edge bounds a triangle (cycles of length 3);
* ``hflag == 1``: it bounds the main hole, the unexplored part of the
  plane that the growth process eats into;
* ``hflag == 2``: it bounds a work hole, a finite region scheduled to be
  filled by the polygon sampler.

Vertices are immortal integers.  ``v_out[v]`` is some alive half-edge
leaving ``v``; ``v_hole[v]`` is the unique main-hole half-edge leaving
``v`` when ``v`` is on the main boundary (else -1), which makes "is this
vertex still exposed" an O(1) query.  Dead half-edge ids are recycled
through a free list.

Rotation around a vertex is ``rot(h) = nxt(twin(h))``, which steps to the
next outgoing half-edge; one orbit enumerates the full fan, holes
included, so vertex degrees count multi-edges correctly.

The three surgeries (`attach_fresh`, `open_swallow`, `close_two_gon`)
are the only mutations.  Each keeps the counters (vertices, edges,
triangles, main perimeter) and the per-vertex indexes exact; a full
O(size) :func:`validate` recomputes everything from the raw arrays and
is used liberally in tests, never in hot loops.
"""

from __future__ import annotations

import json
import sys
from array import array
from typing import Iterator, Optional

from .errors import DomainError, InvariantViolationError, MisuseError

FLAG_TRIANGLE = 0
FLAG_MAIN = 1
FLAG_WORK = 2
DEAD = -1

_SERIAL_SCHEMA = "trimap"
_SERIAL_VERSION = 1


class TriMap:
    """Mutable rooted triangulation-with-holes on the half-edge arena."""

    __slots__ = (
        "twin",
        "nxt",
        "prv",
        "org",
        "hflag",
        "v_out",
        "v_hole",
        "free",
        "nv",
        "ne",
        "n_tri",
        "perimeter",
        "root",
    )

    def __init__(self) -> None:
        self.twin: list[int] = []
        self.nxt: list[int] = []
        self.prv: list[int] = []
        self.org: list[int] = []
        self.hflag: list[int] = []
        self.v_out: list[int] = []
        self.v_hole: list[int] = []
        self.free: list[int] = []
        self.nv = 0
        self.ne = 0
        self.n_tri = 0
        self.perimeter = 0
        self.root = -1

    # -- construction ---------------------------------------------------

    @classmethod
    def root_edge(cls) -> "TriMap":
        """A single oriented edge; the main hole is everything else.

        The hole is the 2-cycle of the edge's two half-edges, the one
        configuration in which an edge sees the same hole on both sides.
        """
        m = cls()
        u, v = m._new_vertex(), m._new_vertex()
        a = m._new_he(u, FLAG_MAIN)
        b = m._new_he(v, FLAG_MAIN)
        m.twin[a], m.twin[b] = b, a
        m._link(a, b)
        m._link(b, a)
        m.ne = 1
        m.perimeter = 2
        m.root = a
        m.v_out[u], m.v_out[v] = a, b
        m.v_hole[u], m.v_hole[v] = a, b
        return m

    @classmethod
    def polygon(cls, p: int) -> tuple["TriMap", int]:
        """Simple p-gon: a work hole inside, the main hole outside.

        Returns the map and the inner half-edge at the root edge; the map
        root is the outer (main hole) half-edge of the same edge, so the
        finished object is rooted on its boundary with the filled
        interior on the root's left.
        """
        if p < 2:
            raise DomainError(f"polygon needs p >= 2, got {p}")
        m = cls()
        verts = [m._new_vertex() for _ in range(p)]
        inner = [m._new_he(verts[i], FLAG_WORK) for i in range(p)]
        outer = [m._new_he(verts[(i + 1) % p], FLAG_MAIN) for i in range(p)]
        for i in range(p):
            j = (i + 1) % p
            m.twin[inner[i]] = outer[i]
            m.twin[outer[i]] = inner[i]
            m._link(inner[i], inner[j])
            m._link(outer[j], outer[i])
            m.v_out[verts[i]] = inner[i]
            m.v_hole[verts[j]] = outer[i]
        m.ne = p
        m.perimeter = p
        m.root = outer[0]
        return m, inner[0]

    def clone(self) -> "TriMap":
        """Independent copy preserving half-edge and vertex ids."""
        m = TriMap()
        m.twin = self.twin[:]
        m.nxt = self.nxt[:]
        m.prv = self.prv[:]
        m.org = self.org[:]
        m.hflag = self.hflag[:]
        m.v_out = self.v_out[:]
        m.v_hole = self.v_hole[:]
        m.free = self.free[:]
        m.nv, m.ne, m.n_tri = self.nv, self.ne, self.n_tri
        m.perimeter, m.root = self.perimeter, self.root
        return m

    # -- low-level ------------------------------------------------------

    def _new_vertex(self) -> int:
        self.v_out.append(-1)
        self.v_hole.append(-1)
        self.nv += 1
        return self.nv - 1

    def _new_he(self, org: int, flag: int) -> int:
        if self.free:
            h = self.free.pop()
            self.org[h] = org
            self.hflag[h] = flag
            self.twin[h] = self.nxt[h] = self.prv[h] = -1
            return h
        self.twin.append(-1)
        self.nxt.append(-1)
        self.prv.append(-1)
        self.org.append(org)
        self.hflag.append(flag)
        return len(self.org) - 1

    def _kill_he(self, h: int) -> None:
        self.hflag[h] = DEAD
        self.twin[h] = self.nxt[h] = self.prv[h] = -1
        self.org[h] = -1
        self.free.append(h)

    def _link(self, a: int, b: int) -> None:
        self.nxt[a] = b
        self.prv[b] = a

    def alive(self, h: int) -> bool:
        return 0 <= h < len(self.org) and self.hflag[h] != DEAD

    def target(self, h: int) -> int:
        return self.org[self.twin[h]]

    def rot(self, h: int) -> int:
        """Next outgoing half-edge around org(h)."""
        return self.nxt[self.twin[h]]

    def n_half_edges(self) -> int:
        return len(self.org) - len(self.free)

    # -- iteration ------------------------------------------------------

    def alive_half_edges(self) -> Iterator[int]:
        for h, f in enumerate(self.hflag):
            if f != DEAD:
                yield h

    def hole_cycle(self, h: int) -> list[int]:
        """The full face cycle through h, in nxt order."""
        if not self.alive(h):
            raise MisuseError(f"half-edge {h} is not alive")
        cyc = [h]
        g = self.nxt[h]
        while g != h:
            cyc.append(g)
            g = self.nxt[g]
        return cyc

    def triangles(self) -> Iterator[tuple[int, int, int]]:
        """Each triangle once, as its half-edge triple in cycle order."""
        seen = [False] * len(self.org)
        for h, f in enumerate(self.hflag):
            if f != FLAG_TRIANGLE or seen[h]:
                continue
            a, b, c = h, self.nxt[h], self.nxt[self.nxt[h]]
            seen[a] = seen[b] = seen[c] = True
            yield a, b, c

    def out_half_edges(self, v: int) -> list[int]:
        """The fan of outgoing half-edges of v, one full rotation orbit."""
        h0 = self.v_out[v]
        if h0 == -1 or not self.alive(h0):
            raise MisuseError(f"vertex {v} has no alive outgoing half-edge")
        fan = [h0]
        h = self.rot(h0)
        while h != h0:
            fan.append(h)
            h = self.rot(h)
        return fan

    def degree(self, v: int) -> int:
        return len(self.out_half_edges(v))

    def neighbors(self, v: int) -> list[int]:
        """Targets of the fan, with multi-edge multiplicity."""
        return [self.target(h) for h in self.out_half_edges(v)]

    # -- surgeries ------------------------------------------------------

    def attach_fresh(self, a: int) -> tuple[int, int, int]:
        """Glue a triangle with a brand-new apex onto hole edge a.

        The hole side of a is replaced by the two new edges, lengthening
        the hole by one.  Returns (c2, c1, apex): c2 runs from org(a) to
        the apex, c1 from the apex to target(a), both on the hole.
        """
        flag = self.hflag[a]
        if flag not in (FLAG_MAIN, FLAG_WORK):
            raise MisuseError(f"half-edge {a} does not bound a hole")
        u = self.org[a]
        w = self.target(a)
        x_prev, x_next = self.prv[a], self.nxt[a]
        v = self._new_vertex()
        t1 = self._new_he(w, FLAG_TRIANGLE)
        t2 = self._new_he(v, FLAG_TRIANGLE)
        c1 = self._new_he(v, flag)
        c2 = self._new_he(u, flag)
        self.twin[t1], self.twin[c1] = c1, t1
        self.twin[t2], self.twin[c2] = c2, t2
        self.hflag[a] = FLAG_TRIANGLE
        self._link(a, t1)
        self._link(t1, t2)
        self._link(t2, a)
        if x_prev == a:
            # a was a 2-cycle hole with itself only when the hole is the
            # two-sided root edge; then the whole hole is c2 -> c1 -> twin(a)
            raise InvariantViolationError("hole cycle of length 1")
        self._link(x_prev, c2)
        self._link(c2, c1)
        self._link(c1, x_next)
        self.v_out[v] = t2
        self.ne += 2
        self.n_tri += 1
        if flag == FLAG_MAIN:
            self.perimeter += 1
            self.v_hole[u] = c2
            self.v_hole[v] = c1
        return c2, c1, v

    def open_swallow(self, a: int, k: int, side: str) -> tuple[int, int, int]:
        """Glue a triangle onto hole edge a whose apex is a hole vertex
        k edges away, fencing off the k skipped edges into a new hole.

        side 'next' walks forward along the cycle (apex = endpoint of
        nxt^k(a)); side 'prev' walks backward.  The fenced-off region
        becomes a work hole of perimeter k + 1; the ambient hole loses k
        edges.  Returns (cont, enclosed, apex): cont is the replacement
        half-edge on the ambient hole, enclosed the root of the new work
        hole.
        """
        flag = self.hflag[a]
        if flag not in (FLAG_MAIN, FLAG_WORK):
            raise MisuseError(f"half-edge {a} does not bound a hole")
        if k < 1:
            raise DomainError(f"swallow size k={k} must be at least 1")
        u = self.org[a]
        w = self.target(a)
        if side == "next":
            eaten = []
            e = a
            for _ in range(k):
                e = self.nxt[e]
                if e == a:
                    raise MisuseError(f"swallow k={k} wraps the whole hole")
                eaten.append(e)
            x = self.target(eaten[-1])
            after = self.nxt[eaten[-1]]
            before = self.prv[a]
            if after == a:
                raise MisuseError(f"swallow k={k} leaves no hole edge")
            s1 = self._new_he(w, FLAG_TRIANGLE)
            s2 = self._new_he(x, FLAG_TRIANGLE)
            s1t = self._new_he(x, FLAG_WORK)
            cont = self._new_he(u, flag)
            self.twin[s1], self.twin[s1t] = s1t, s1
            self.twin[s2], self.twin[cont] = cont, s2
            self.hflag[a] = FLAG_TRIANGLE
            self._link(a, s1)
            self._link(s1, s2)
            self._link(s2, a)
            # enclosed hole: s1t then the eaten run, already chained
            self._link(s1t, eaten[0])
            self._link(eaten[-1], s1t)
            for e in eaten:
                self.hflag[e] = FLAG_WORK
            # ambient hole: cont bridges the cut
            self._link(before, cont)
            self._link(cont, after)
            if flag == FLAG_MAIN:
                self.perimeter -= k
                self.v_hole[u] = cont
                for e in eaten:
                    self.v_hole[self.org[e]] = -1
                self.v_hole[x] = after if self.hflag[after] == FLAG_MAIN else -1
            self.ne += 2
            self.n_tri += 1
            return cont, s1t, x
        if side == "prev":
            eaten = []
            e = a
            for _ in range(k):
                e = self.prv[e]
                if e == a:
                    raise MisuseError(f"swallow k={k} wraps the whole hole")
                eaten.append(e)
            y = self.org[eaten[-1]]
            before = self.prv[eaten[-1]]
            after = self.nxt[a]
            if before == a:
                raise MisuseError(f"swallow k={k} leaves no hole edge")
            s1 = self._new_he(w, FLAG_TRIANGLE)
            s2 = self._new_he(y, FLAG_TRIANGLE)
            s2t = self._new_he(u, FLAG_WORK)
            cont = self._new_he(y, flag)
            self.twin[s2], self.twin[s2t] = s2t, s2
            self.twin[s1], self.twin[cont] = cont, s1
            self.hflag[a] = FLAG_TRIANGLE
            self._link(a, s1)
            self._link(s1, s2)
            self._link(s2, a)
            # enclosed hole: s2t then the eaten run in reverse cycle order
            self._link(s2t, eaten[-1])
            self._link(eaten[0], s2t)
            for e in eaten:
                self.hflag[e] = FLAG_WORK
            self._link(before, cont)
            self._link(cont, after)
            if flag == FLAG_MAIN:
                self.perimeter -= k
                self.v_hole[y] = cont
                self.v_hole[u] = -1
                for e in eaten[:-1]:
                    self.v_hole[self.org[e]] = -1
            self.ne += 2
            self.n_tri += 1
            return cont, s2t, y
        raise DomainError(f"side must be 'next' or 'prev', got {side!r}")

    def close_two_gon(self, g: int) -> int:
        """Zip shut a work hole of perimeter 2 by identifying its edges.

        Returns the surviving half-edge that replaced twin(g).
        """
        if self.hflag[g] != FLAG_WORK:
            raise MisuseError("only work holes can be zipped shut")
        g2 = self.nxt[g]
        if g2 == g or self.nxt[g2] != g:
            raise MisuseError("hole is not a 2-gon")
        if self.twin[g] == g2:
            raise InvariantViolationError("cannot identify an edge with itself")
        t1, t2 = self.twin[g], self.twin[g2]
        u, v = self.org[g], self.org[g2]
        self.twin[t1], self.twin[t2] = t2, t1
        if self.v_out[u] == g:
            self.v_out[u] = t2
        if self.v_out[v] == g2:
            self.v_out[v] = t1
        # the merged edge keeps representing the root edge, same orientation
        if self.root == g:
            self.root = t2
        elif self.root == g2:
            self.root = t1
        self._kill_he(g)
        self._kill_he(g2)
        self.ne -= 1
        return t1

    # -- distances -------------------------------------------------------

    def bfs_distances(
        self,
        start: int,
        max_dist: Optional[int] = None,
        out: Optional[list[int]] = None,
    ) -> list[int]:
        """Graph distances from a vertex over all alive edges.

        Unreached vertices (or those beyond max_dist) stay -1.  Distances
        are with respect to the explored map only; whether they equal the
        distances in the completed infinite map is the caller's problem.
        """
        dist = out if out is not None else [-1] * self.nv
        if len(dist) < self.nv:
            dist.extend([-1] * (self.nv - len(dist)))
        dist[start] = 0
        frontier = [start]
        d = 0
        twin, nxt, org = self.twin, self.nxt, self.org
        while frontier and (max_dist is None or d < max_dist):
            d += 1
            nxt_frontier = []
            for v in frontier:
                h0 = self.v_out[v]
                h = h0
                while True:
                    t = org[twin[h]]
                    if dist[t] == -1:
                        dist[t] = d
                        nxt_frontier.append(t)
                    h = nxt[twin[h]]
                    if h == h0:
                        break
            frontier = nxt_frontier
        return dist

    # -- validation -------------------------------------------------------

    def validate(
        self,
        expect_main_holes: Optional[int] = 1,
        allow_work_holes: bool = False,
        require_simple_main: bool = True,
    ) -> None:
        """Full structural audit; raises InvariantViolationError on defect.

        expect_main_holes None skips the hole-count and perimeter-counter
        checks (extracted submaps can have any number of holes).  O(size);
        for tests and checkpoints, not for inner loops.
        """
        alive = [h for h, f in enumerate(self.hflag) if f != DEAD]
        alive_set = set(alive)
        if len(alive) % 2:
            raise InvariantViolationError("odd number of half-edges")
        for h in alive:
            t = self.twin[h]
            if t not in alive_set or t == h or self.twin[t] != h:
                raise InvariantViolationError(f"twin structure broken at {h}")
            n = self.nxt[h]
            if n not in alive_set or self.prv[n] != h:
                raise InvariantViolationError(f"nxt/prv broken at {h}")
            if self.org[self.nxt[h]] != self.org[self.twin[h]]:
                raise InvariantViolationError(f"face cycle skips a vertex at {h}")
            if self.org[h] < 0 or self.org[h] >= self.nv:
                raise InvariantViolationError(f"origin out of range at {h}")
        # face cycles
        seen = set()
        n_tri = 0
        main_cycles = []
        work_cycles = 0
        for h in alive:
            if h in seen:
                continue
            cyc = [h]
            seen.add(h)
            g = self.nxt[h]
            while g != h:
                cyc.append(g)
                seen.add(g)
                g = self.nxt[g]
            flags = {self.hflag[c] for c in cyc}
            if len(flags) != 1:
                raise InvariantViolationError(f"mixed flags on face of {h}")
            flag = flags.pop()
            if flag == FLAG_TRIANGLE:
                if len(cyc) != 3:
                    raise InvariantViolationError(
                        f"triangle face of length {len(cyc)} at {h}"
                    )
                n_tri += 1
            elif flag == FLAG_MAIN:
                main_cycles.append(cyc)
            elif flag == FLAG_WORK:
                work_cycles += 1
                if not allow_work_holes:
                    raise InvariantViolationError("unexpected work hole")
            if flag != FLAG_TRIANGLE and len(cyc) < 2:
                raise InvariantViolationError(f"hole of length {len(cyc)} at {h}")
        if n_tri != self.n_tri:
            raise InvariantViolationError(
                f"triangle counter {self.n_tri} != actual {n_tri}"
            )
        if expect_main_holes is not None and len(main_cycles) != expect_main_holes:
            raise InvariantViolationError(
                f"expected {expect_main_holes} main holes, found {len(main_cycles)}"
            )
        if expect_main_holes == 1:
            if self.perimeter != len(main_cycles[0]):
                raise InvariantViolationError(
                    f"perimeter counter {self.perimeter} != actual {len(main_cycles[0])}"
                )
            if require_simple_main:
                origins = [self.org[c] for c in main_cycles[0]]
                if len(set(origins)) != len(origins):
                    raise InvariantViolationError("main hole boundary not simple")
        if 2 * self.ne != len(alive):
            raise InvariantViolationError(
                f"edge counter {self.ne} != half-edge count {len(alive)} / 2"
            )
        # vertices: every alive origin in range, rotation orbits close
        out_count = [0] * self.nv
        for h in alive:
            out_count[self.org[h]] += 1
        used = [v for v in range(self.nv) if out_count[v]]
        if len(used) != self.nv:
            raise InvariantViolationError("isolated vertex in arena")
        orbit_total = 0
        for v in range(self.nv):
            fan = self.out_half_edges(v)
            if len(fan) != out_count[v]:
                raise InvariantViolationError(
                    f"rotation orbit of vertex {v} does not close over its fan"
                )
            orbit_total += len(fan)
            if self.v_hole[v] != -1:
                h = self.v_hole[v]
                if self.hflag[h] != FLAG_MAIN or self.org[h] != v:
                    raise InvariantViolationError(f"v_hole wrong at vertex {v}")
        if orbit_total != len(alive):
            raise InvariantViolationError("rotation orbits do not partition half-edges")
        if expect_main_holes == 1 and require_simple_main:
            on_hole = {self.org[c] for c in main_cycles[0]}
            for v in range(self.nv):
                if (self.v_hole[v] != -1) != (v in on_hole):
                    raise InvariantViolationError(f"v_hole index stale at vertex {v}")
        # connectivity and genus: reach everything from the root, then Euler
        if self.root == -1 or not self.alive(self.root):
            raise InvariantViolationError("root half-edge dead or unset")
        stack = [self.root]
        reached = {self.root}
        while stack:
            h = stack.pop()
            for g in (self.nxt[h], self.twin[h]):
                if g not in reached:
                    reached.add(g)
                    stack.append(g)
        if len(reached) != len(alive):
            raise InvariantViolationError("map not connected from the root")
        faces = n_tri + len(main_cycles) + work_cycles
        if self.nv - self.ne + faces != 2:
            raise InvariantViolationError(
                f"Euler characteristic {self.nv - self.ne + faces} != 2"
            )

    # -- canonical encoding ----------------------------------------------

    def canonical_code(self, root: Optional[int] = None) -> tuple:
        """Root-anchored isomorphism invariant.

        Half-edges are numbered in BFS discovery order from the root,
        exploring nxt before twin; the code lists (nxt, twin, flag) per
        half-edge in that numbering.  Two maps get equal codes exactly
        when a root-preserving isomorphism matches them.
        """
        start = self.root if root is None else root
        if not self.alive(start):
            raise MisuseError("canonical code needs an alive root")
        index = {start: 0}
        order = [start]
        head = 0
        while head < len(order):
            h = order[head]
            head += 1
            for g in (self.nxt[h], self.twin[h]):
                if g not in index:
                    index[g] = len(order)
                    order.append(g)
        if len(order) != self.n_half_edges():
            raise InvariantViolationError("canonical traversal missed half-edges")
        return tuple(
            (index[self.nxt[h]], index[self.twin[h]], self.hflag[h]) for h in order
        )

    # -- serialization -----------------------------------------------------

    def to_bytes(self) -> bytes:
        """Compact binary dump: JSON header line, then int32 arrays.

        Half-edges are renumbered densely in ascending id order, so a
        dump-load-dump cycle is bit-identical.
        """
        alive = [h for h, f in enumerate(self.hflag) if f != DEAD]
        renum = {h: i for i, h in enumerate(alive)}
        header = {
            "format": _SERIAL_SCHEMA,
            "version": _SERIAL_VERSION,
            "n_half_edges": len(alive),
            "n_vertices": self.nv,
            "n_edges": self.ne,
            "n_triangles": self.n_tri,
            "perimeter": self.perimeter,
            "root": renum[self.root] if self.root in renum else -1,
        }
        blob = [json.dumps(header, sort_keys=True).encode(), b"\n"]
        for field in (self.twin, self.nxt, self.org, self.hflag):
            arr = array("i", (field[h] if field is self.org or field is self.hflag
                              else renum[field[h]] for h in alive))
            if sys.byteorder != "little":
                arr.byteswap()
            blob.append(arr.tobytes())
        return b"".join(blob)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TriMap":
        cut = data.index(b"\n")
        header = json.loads(data[:cut].decode())
        if header.get("format") != _SERIAL_SCHEMA or header.get("version") != _SERIAL_VERSION:
            raise DomainError(f"unrecognized map serialization header {header!r}")
        n = header["n_half_edges"]
        body = data[cut + 1 :]
        if len(body) != 4 * 4 * n:
            raise DomainError("map serialization truncated")
        fields = []
        for i in range(4):
            arr = array("i")
            arr.frombytes(body[4 * n * i : 4 * n * (i + 1)])
            if sys.byteorder != "little":
                arr.byteswap()
            fields.append(list(arr))
        twin, nxt, org, hflag = fields
        m = cls()
        m.twin, m.nxt, m.org, m.hflag = twin, nxt, org, hflag
        m.prv = [-1] * n
        for h in range(n):
            m.prv[nxt[h]] = h
        m.nv = header["n_vertices"]
        m.ne = header["n_edges"]
        m.n_tri = header["n_triangles"]
        m.perimeter = header["perimeter"]
        m.root = header["root"]
        m.v_out = [-1] * m.nv
        m.v_hole = [-1] * m.nv
        for h in range(n):
            m.v_out[org[h]] = h
            if hflag[h] == FLAG_MAIN:
                m.v_hole[org[h]] = h
        return m


def extract_submap(tmap: TriMap, keep: set, root: int) -> tuple[TriMap, dict]:
    """Copy the triangles whose half-edges are listed in ``keep``.

    ``keep`` must be closed under face cycles (whole triangles only).
    Edges whose other side is not kept get fresh hole half-edges; the
    complement may leave several holes and those holes may revisit a
    vertex, so the result should be validated with relaxed expectations.
    Returns the new map plus the old-to-new half-edge mapping.
    """
    if root not in keep:
        raise MisuseError("submap root must be among the kept half-edges")
    for h in keep:
        if tmap.hflag[h] != FLAG_TRIANGLE:
            raise MisuseError("submap extraction keeps triangles only")
        if tmap.nxt[h] not in keep:
            raise MisuseError("kept set not closed under face cycles")
    m = TriMap()
    vmap: dict[int, int] = {}
    hmap: dict[int, int] = {}
    for h in sorted(keep):
        v = tmap.org[h]
        if v not in vmap:
            vmap[v] = m._new_vertex()
        hmap[h] = m._new_he(vmap[v], FLAG_TRIANGLE)
    for h in keep:
        m._link(hmap[h], hmap[tmap.nxt[h]])
        t = tmap.twin[h]
        if t in keep:
            m.twin[hmap[h]] = hmap[t]
    # fence the exposed edges with hole half-edges
    boundary = [h for h in sorted(keep) if tmap.twin[h] not in keep]
    bmap: dict[int, int] = {}
    for h in boundary:
        b = m._new_he(vmap[tmap.org[tmap.twin[h]]], FLAG_MAIN)
        bmap[h] = b
        m.twin[hmap[h]] = b
        m.twin[b] = hmap[h]
    for h in boundary:
        # successor of bar(h) leaves org(h): rotate around org(h) through
        # the un-kept gap until the next kept outgoing half-edge
        x = tmap.rot(h)
        while x not in keep:
            x = tmap.rot(x)
        h2 = tmap.prv[x]
        m._link(bmap[h], bmap[h2])
    m.ne = (len(keep) + len(boundary)) // 2
    m.n_tri = len(keep) // 3
    m.root = hmap[root]
    for v_old, v_new in vmap.items():
        m.v_out[v_new] = hmap[next(h for h in tmap.out_half_edges(v_old) if h in keep)]
    # best-effort hole index; only authoritative when the complement is a
    # single hole visiting each vertex once, which strict validation checks
    for h in boundary:
        m.v_hole[m.org[bmap[h]]] = bmap[h]
    m.perimeter = len(boundary)
    return m, hmap
