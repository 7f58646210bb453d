"""Lattice models: self-avoiding walk counts, loop-erased walks, percolation.

The triangular lattice uses axial coordinates ``(i, j)`` for the site
``i + j e^{i pi/3}``. The six neighbour offsets, counter-clockwise, are
``(1,0), (0,1), (-1,1), (-1,0), (0,-1), (1,-1)``; ``e_{k-1} + e_{k+1} = e_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numba as nb
import numpy as np

from .errors import ConfigError, DomainError
from .rng import as_stream, concat_blocks, run_blocks
from .stats import Estimate, proportion_estimate

MAX_SAW_N = 16

HEX_DIRS = np.array([(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)], dtype=np.int64)


# ---------------------------------------------------------------------------
# self-avoiding walks


@nb.njit(cache=True)
def _saw_dfs(n):
    """Counts of walks and bridges whose first step is east; multiply walks by 4."""
    size = 2 * n + 3
    seen = np.zeros((size, size), np.bool_)
    dx = np.array([1, 0, -1, 0])
    dy = np.array([0, 1, 0, -1])
    walks = np.zeros(n + 1, np.int64)
    bridges = np.zeros(n + 1, np.int64)
    ox = n + 1
    oy = n + 1
    seen[ox, oy] = True
    seen[ox + 1, oy] = True
    # explicit stack of (direction index tried so far) per depth
    xs = np.zeros(n + 2, np.int64)
    ys = np.zeros(n + 2, np.int64)
    dirs = np.full(n + 2, -1, np.int64)
    maxx = np.zeros(n + 2, np.int64)
    xs[0], ys[0] = ox, oy
    xs[1], ys[1] = ox + 1, oy
    maxx[1] = ox + 1
    walks[1] = 1
    bridges[1] = 1
    depth = 1
    while depth >= 1:
        if depth == n:
            dirs[depth] = 4
        dirs[depth] += 1
        if dirs[depth] >= 4:
            dirs[depth] = -1
            seen[xs[depth], ys[depth]] = False if depth > 1 else True
            depth -= 1
            continue
        d = dirs[depth]
        nx = xs[depth] + dx[d]
        ny = ys[depth] + dy[d]
        if seen[nx, ny]:
            continue
        depth += 1
        xs[depth], ys[depth] = nx, ny
        seen[nx, ny] = True
        walks[depth] += 1
        mx = max(maxx[depth - 1], nx)
        maxx[depth] = mx
        # bridge: x_0 < x_i <= x_n for all i, so x_n must equal the running maximum
        if nx > ox and nx == mx and _all_right(xs, depth, ox):
            bridges[depth] += 1
    return walks, bridges


@nb.njit(cache=True)
def _all_right(xs, depth, ox):
    for i in range(1, depth + 1):
        if xs[i] <= ox:
            return False
    return True


def _saw_tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0 <= n <= MAX_SAW_N:
        raise DomainError(f"exact enumeration is limited to n <= {MAX_SAW_N}")
    if n == 0:
        return np.array([1]), np.array([1])
    walks, bridges = _saw_dfs(n)
    walks = 4 * walks
    walks[0] = 1
    bridges[0] = 1
    return walks, bridges


def saw_count(n: int) -> int:
    """Number ``J_n`` of ``n``-step self-avoiding walks on ``Z^2`` from the origin."""
    return int(_saw_tables(int(n))[0][n])


def saw_counts(n: int) -> list[int]:
    return [int(v) for v in _saw_tables(int(n))[0]]


def bridge_counts(n: int) -> list[int]:
    """Numbers of ``n``-step bridges (``x_0 < x_i <= x_n``), which are supermultiplicative."""
    return [int(v) for v in _saw_tables(int(n))[1]]


@dataclass(frozen=True)
class ConnectiveBounds:
    lower: float
    upper: float
    n: int


def connective_bounds(n: int) -> ConnectiveBounds:
    """Rigorous bounds on ``e^beta = lim J_n^{1/n}`` from counts up to ``n``.

    Upper: submultiplicativity gives ``e^beta <= J_m^{1/m}`` for every ``m``.
    Lower: bridges are supermultiplicative and are SAWs, so
    ``e^beta >= b_m^{1/m}``; walks using only north and east steps give 2.
    """
    if n < 1:
        raise DomainError("need n >= 1")
    walks, bridges = _saw_tables(int(n))
    m = np.arange(1, n + 1)
    upper = float(np.min(walks[1:] ** (1.0 / m)))
    lower = float(max(2.0, np.max(bridges[1:] ** (1.0 / m))))
    return ConnectiveBounds(lower, upper, int(n))


# ---------------------------------------------------------------------------
# loop-erased random walk


@dataclass
class WalkPath:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        self.points = pts
        if len(pts) > 1 and np.any(np.abs(np.diff(pts, axis=0)).sum(axis=1) != 1):
            raise DomainError("walk steps must be nearest-neighbour")

    def __len__(self) -> int:
        return max(len(self.points) - 1, 0)

    @classmethod
    def from_complex(cls, zs: Iterable[complex]) -> "WalkPath":
        return cls(np.array([(int(round(z.real)), int(round(z.imag))) for z in zs], dtype=np.int64).reshape(-1, 2))

    def to_complex(self) -> list[complex]:
        return [complex(int(x), int(y)) for x, y in self.points]

    def is_self_avoiding(self) -> bool:
        return len({tuple(p) for p in self.points}) == len(self.points)


def loop_erase(path: WalkPath | Sequence) -> WalkPath:
    """Chronological loop erasure."""
    pts = path.points if isinstance(path, WalkPath) else WalkPath.from_complex(path).points
    out: list[tuple[int, int]] = []
    where: dict[tuple[int, int], int] = {}
    for x, y in pts:
        p = (int(x), int(y))
        k = where.get(p)
        if k is not None:
            for q in out[k + 1:]:
                del where[q]
            del out[k + 1:]
        else:
            where[p] = len(out)
            out.append(p)
    return WalkPath(np.array(out, dtype=np.int64).reshape(-1, 2))


@nb.njit(nogil=True, cache=True)
def _srw_to_boundary(gen, mask, sx, sy, max_steps):
    """Simple random walk from ``(sx, sy)`` until it leaves ``mask``; returns the path."""
    dx = (1, 0, -1, 0)
    dy = (0, 1, 0, -1)
    cap = 1024
    xs = np.empty(cap, np.int64)
    ys = np.empty(cap, np.int64)
    xs[0], ys[0] = sx, sy
    n = 1
    x, y = sx, sy
    while n < max_steps:
        d = int(gen.integers(0, 4))
        x += dx[d]
        y += dy[d]
        if n == cap:
            cap *= 2
            nx = np.empty(cap, np.int64)
            ny = np.empty(cap, np.int64)
            nx[:n] = xs[:n]
            ny[:n] = ys[:n]
            xs, ys = nx, ny
        xs[n], ys[n] = x, y
        n += 1
        if x < 0 or y < 0 or x >= mask.shape[0] or y >= mask.shape[1] or not mask[x, y]:
            break
    return xs[:n], ys[:n]


def box_domain(n: int) -> np.ndarray:
    """Interior mask of the square ``{1..n-1}^2`` inside an ``(n+1) x (n+1)`` array."""
    if n < 2:
        raise DomainError("box size must be at least 2")
    mask = np.zeros((n + 1, n + 1), bool)
    mask[1:n, 1:n] = True
    return mask


def sample_lerw(mask: np.ndarray, start: tuple[int, int], rng=None, targets=None,
                max_tries: int = 100000, max_steps: int = 10 ** 8) -> WalkPath:
    """Loop-erased random walk from ``start`` to the first exterior site hit.

    ``mask`` marks interior sites. If ``targets`` (a set of exterior sites) is
    given, walks that exit elsewhere are rejected, which conditions the walk
    to leave through the target set.
    """
    mask = np.asarray(mask, dtype=bool)
    sx, sy = int(start[0]), int(start[1])
    if not (0 <= sx < mask.shape[0] and 0 <= sy < mask.shape[1] and mask[sx, sy]):
        raise ConfigError("start must be an interior site")
    tset = None
    if targets is not None:
        tset = {(int(x), int(y)) for x, y in targets}
        if not tset:
            raise ConfigError("target set is empty")
        for x, y in tset:
            inside = 0 <= x < mask.shape[0] and 0 <= y < mask.shape[1] and mask[x, y]
            adjacent = any(0 <= x + ex < mask.shape[0] and 0 <= y + ey < mask.shape[1] and mask[x + ex, y + ey]
                           for ex, ey in ((1, 0), (-1, 0), (0, 1), (0, -1)))
            if inside or not adjacent:
                raise ConfigError(f"target {(x, y)} is not a boundary site of the domain")
    gen = as_stream(rng).generator(0)
    for _ in range(max_tries):
        xs, ys = _srw_to_boundary(gen, mask, sx, sy, max_steps)
        end = (int(xs[-1]), int(ys[-1]))
        if tset is None or end in tset:
            return loop_erase(WalkPath(np.stack([xs, ys], axis=1)))
    raise ConfigError("target set was not reached; it may be unreachable")


# ---------------------------------------------------------------------------
# percolation on the triangular lattice


@dataclass
class TriangularColoring:
    """Site colours (``True`` = black) of the triangle ``i, j >= 0, i + j <= N``.

    The exploration uses one layer of exterior sites with fixed colours:
    the bottom row ``j = -1`` is black for ``i < split`` and white otherwise,
    the left column ``i = -1`` is black and the outer diagonal
    ``i + j = N + 1`` is white. The top corner where these meet is left out,
    so the colouring rule is symmetric under :meth:`mirrored`.
    """

    n: int
    colors: np.ndarray
    split: int

    def __post_init__(self):
        self.colors = np.asarray(self.colors, dtype=bool)
        if self.colors.shape != (self.n + 1, self.n + 1):
            raise ConfigError("colour array must have shape (N+1, N+1)")
        if not 0 < self.split <= self.n + 1:
            raise ConfigError("split must lie in 1..N+1")

    @classmethod
    def random(cls, n: int, split: int, rng=None, p_black: float = 0.5) -> "TriangularColoring":
        gen = as_stream(rng).generator(0)
        return cls(n, gen.random((n + 1, n + 1)) < p_black, split)

    def color(self, i: int, j: int) -> bool | None:
        """Colour of a site of the extended region, ``None`` outside it."""
        n = self.n
        if i < -1 or j < -1 or i + j > n + 1 or (i == -1 and j == n + 2):
            return None
        if i == -1:
            return True
        if j == -1:
            return i < self.split
        if i + j == n + 1:
            return False
        return bool(self.colors[i, j])

    def interior(self, i: int, j: int) -> bool:
        return i >= 0 and j >= 0 and i + j <= self.n

    def flipped(self) -> "TriangularColoring":
        return TriangularColoring(self.n, ~self.colors, self.split)

    def mirrored(self) -> "TriangularColoring":
        """Swap colours and reflect ``(i, j) -> (N - i - j, j)``, which exchanges ``A`` and ``B``."""
        n = self.n
        out = np.zeros_like(self.colors)
        for j in range(n + 1):
            i = np.arange(n + 1 - j)
            out[n - i - j, j] = ~self.colors[i, j]
        return TriangularColoring(n, out, n + 2 - self.split)

    def reflect_site(self, i: int, j: int) -> tuple[int, int]:
        return (self.n - i - j, j)


@dataclass
class Interface:
    """Exploration path as a sequence of (black site, white site) pairs.

    Each consecutive pair shares one site, so the path moves along one edge
    of the hexagonal dual lattice per step.
    """

    black: np.ndarray
    white: np.ndarray

    def __len__(self) -> int:
        return len(self.black)

    def edges(self) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        return [(tuple(b), tuple(w)) for b, w in zip(self.black.tolist(), self.white.tolist())]

    def midpoints(self) -> np.ndarray:
        """Positions in the plane of the hexagon edges crossed (midpoints of black-white pairs)."""
        w = np.exp(1j * math.pi / 3)
        b = self.black[:, 0] + w * self.black[:, 1]
        c = self.white[:, 0] + w * self.white[:, 1]
        return 0.5 * (b + c)


def percolation_exploration(coloring: TriangularColoring, max_steps: int | None = None) -> Interface:
    """Interface from the bottom split with black on the left and white on the right.

    The state is a black site ``L`` and a white neighbour ``R = L + e_k``.
    The next site ``F = L + e_{k+1}`` is the third corner of the triangle
    ahead: if it is black it becomes ``L``, otherwise it becomes ``R``.
    The walk stops when ``F`` falls outside the extended region (the top
    corner where the black and white boundary arcs meet).
    """
    n = coloring.n
    L = (coloring.split - 1, -1)
    k = 0  # R = L + e_0 = (split, -1)
    blacks = [L]
    whites = [(L[0] + 1, L[1])]
    limit = max_steps if max_steps is not None else 4 * (n + 3) ** 2
    for _ in range(limit):
        e = HEX_DIRS[(k + 1) % 6]
        F = (L[0] + int(e[0]), L[1] + int(e[1]))
        c = coloring.color(*F)
        if c is None:
            return Interface(np.array(blacks), np.array(whites))
        if c:
            L = F
            k = (k - 1) % 6
        else:
            k = (k + 1) % 6
        e = HEX_DIRS[k]
        blacks.append(L)
        whites.append((L[0] + int(e[0]), L[1] + int(e[1])))
    raise ConfigError("exploration did not terminate; boundary conditions may be malformed")


@nb.njit(nogil=True, cache=True)
def _crossing_kernel(gen, reps, n, splits):
    """For each colouring, whether a white path joins ``{j=0, i<=s}`` to ``{i+j=N}`` for each ``s``.

    A single BFS per colouring labels the white clusters touching the top
    side; the answer for split ``s`` is whether any such bottom site has
    index ``<= s``, so all splits share the same colouring.
    """
    ns = len(splits)
    out = np.zeros((reps, ns), np.bool_)
    white = np.zeros((n + 1, n + 1), np.bool_)
    mark = np.zeros((n + 1, n + 1), np.bool_)
    qi = np.empty((n + 1) * (n + 2) // 2 + 1, np.int64)
    qj = np.empty((n + 1) * (n + 2) // 2 + 1, np.int64)
    di = (1, 0, -1, -1, 0, 1)
    dj = (0, 1, 1, 0, -1, -1)
    for r in range(reps):
        for i in range(n + 1):
            for j in range(n + 1 - i):
                white[i, j] = gen.random() >= 0.5
                mark[i, j] = False
        head = 0
        tail = 0
        for i in range(n + 1):
            j = n - i
            if white[i, j]:
                mark[i, j] = True
                qi[tail] = i
                qj[tail] = j
                tail += 1
        while head < tail:
            i = qi[head]
            j = qj[head]
            head += 1
            for d in range(6):
                a = i + di[d]
                b = j + dj[d]
                if a >= 0 and b >= 0 and a + b <= n and white[a, b] and not mark[a, b]:
                    mark[a, b] = True
                    qi[tail] = a
                    qj[tail] = b
                    tail += 1
        first = n + 1
        for i in range(n + 1):
            if mark[i, 0]:
                first = i
                break
        for s in range(ns):
            out[r, s] = first <= splits[s]
    return out


@dataclass
class CrossingResult:
    x: float
    n: int
    floor: Estimate
    ceil: Estimate

    @property
    def estimate(self) -> float:
        return self.floor.estimate

    @property
    def stderr(self) -> float:
        return self.floor.stderr


def triangle_crossing_mc(x: float | Sequence[float], n: int, replicas: int, rng=None,
                         workers: int = 1) -> CrossingResult | list[CrossingResult]:
    """Probability of a white crossing from ``[A, X]`` to the side ``BC``.

    The triangle has vertices ``A = 0``, ``B = N`` and ``C = N e^{i pi/3}``
    in lattice units and ``X`` is at ``x N`` on ``AB``. The arc ``[A, X]``
    is the bottom sites with ``i <= floor(xN)``; the estimate with
    ``ceil(xN)`` is reported as well to expose the lattice rounding. All
    values of ``x`` are evaluated on the same colourings.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any((xs < 0) | (xs > 1)):
        raise DomainError("x must lie in [0, 1]")
    if n < 2:
        raise DomainError("lattice size must be at least 2")
    fl = np.floor(xs * n).astype(np.int64)
    ce = np.ceil(xs * n).astype(np.int64)
    splits = np.concatenate([fl, ce])
    parts = run_blocks(rng, replicas, lambda g, m: _crossing_kernel(g, m, n, splits), workers, block=1024)
    hits = concat_blocks(parts)
    k = len(xs)
    res = [CrossingResult(float(xs[i]), n, proportion_estimate(hits[:, i], split=int(fl[i])),
                          proportion_estimate(hits[:, k + i], split=int(ce[i]))) for i in range(k)]
    return res[0] if np.ndim(x) == 0 else res
