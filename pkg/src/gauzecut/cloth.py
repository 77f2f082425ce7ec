"""Fixed-step mass-spring cloth on a rectangular vertex grid.

Integration is damped Verlet followed by Jacobi positional relaxation of the
springs.  Units are whatever the caller uses for ``spacing`` (the toolkit
uses millimetres) and one simulated step per ``dt``.

    >>> state = new_mesh(3, 3, 1.0, pins="none")
    >>> state.n_vertices, len(state.constraints())
    (9, 12)
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels

GAUZE_WIDTH_MM = 101.6  # 4 inch square


class ClothError(ValueError):
    pass


@dataclass(frozen=True)
class ClothParams:
    alpha: float = 0.99
    delta: float = 0.008
    tau: float = 1.0
    gravity: tuple[float, float, float] = (0.0, 0.0, -0.01)
    dt: float = 1.0
    constraint_iterations: int = 3
    diagonals: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ClothError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.delta < 0.0:
            raise ClothError(f"delta must be >= 0, got {self.delta}")
        if self.tau <= 0.0:
            raise ClothError(f"tau must be > 0, got {self.tau}")
        if self.constraint_iterations < 1:
            raise ClothError("constraint_iterations must be >= 1")
        if self.dt <= 0.0:
            raise ClothError("dt must be > 0")
        if len(self.gravity) != 3:
            raise ClothError("gravity must be a 3-vector")


def _pin_vertices(spec, rows: int, cols: int) -> list[int]:
    """Resolve a pin spec to vertex ids.

    Accepts ``"none"``, ``"corners"``, ``"edges"``, ``"all"``, ``"top"`` or an
    explicit iterable of vertex ids.
    """
    n = rows * cols
    if spec is None or spec == "none":
        return []
    if spec == "corners":
        return sorted({0, cols - 1, n - cols, n - 1})
    if spec == "all":
        return list(range(n))
    if spec == "edges":
        return [r * cols + c for r in range(rows) for c in range(cols)
                if r in (0, rows - 1) or c in (0, cols - 1)]
    if spec == "top":
        return [(rows - 1) * cols + c for c in range(cols)]
    if isinstance(spec, str):
        raise ClothError(f"unknown pin spec {spec!r}")
    ids = sorted({int(v) for v in spec})
    for v in ids:
        if not 0 <= v < n:
            raise ClothError(f"pin vertex {v} out of range")
    return ids


@dataclass
class ClothState:
    """Mesh state.  Arrays are structure-of-arrays, see :mod:`._kernels`.

    Attributes:
        pos, prev: (3, n) current and previous world positions.
        material: (2, n) rest coordinates, x along columns, y along rows.
        rest: (4, n) rest length per constraint slot.
        act: (4, n) 1.0 for an intact constraint, 0.0 for cut or padding.
        valid: (4, n) bool, which constraint slots exist.
        free: (n,) 1.0 for free vertices, 0.0 for pinned ones.
        pin: (3, n) pin targets (meaningful where ``free == 0``).
        severed: (n,) bool, vertices removed by the scissors.
    """

    rows: int
    cols: int
    spacing: float
    params: ClothParams
    pos: np.ndarray
    prev: np.ndarray
    material: np.ndarray
    rest: np.ndarray
    act: np.ndarray
    valid: np.ndarray
    free: np.ndarray
    pin: np.ndarray
    severed: np.ndarray
    kw: np.ndarray = field(repr=False, default=None)
    _acc: np.ndarray = field(repr=False, default=None)
    _terms: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        n = self.n_vertices
        if self.kw is None:
            self.kw = np.zeros_like(self.act)
        self._acc = np.zeros(n)
        self._terms = np.zeros((4, 3, n))
        self.refresh()

    @property
    def n_vertices(self) -> int:
        return self.rows * self.cols

    @property
    def positions(self) -> np.ndarray:
        """(n, 3) view of the current positions."""
        return self.pos.T

    @property
    def material_coords(self) -> np.ndarray:
        return self.material.T

    @property
    def pins(self) -> dict[int, np.ndarray]:
        return {int(v): self.pin[:, v].copy() for v in np.flatnonzero(self.free == 0.0)}

    @property
    def cut(self) -> np.ndarray:
        """Cut flags of the existing constraints, in :meth:`constraints` order."""
        return self.act[self.valid] == 0.0

    def constraints(self) -> list[tuple[int, int, float, bool]]:
        """List of (i, j, rest_length, cut) for every existing constraint."""
        out = []
        for fam, v in zip(*np.nonzero(self.valid)):
            i, j = _kernels.edge_endpoints(int(fam), int(v), self.cols)
            out.append((int(i), int(j), float(self.rest[fam, v]),
                        bool(self.act[fam, v] == 0.0)))
        return out

    def vertex(self, row: int, col: int) -> int:
        return row * self.cols + col

    def refresh(self):
        _kernels.refresh_weights(self.free, self.act, self.kw, self.cols)

    def copy(self) -> "ClothState":
        return copy.deepcopy(self)

    def check_vertex(self, v: int):
        if not 0 <= v < self.n_vertices:
            raise ClothError(f"vertex {v} out of range [0, {self.n_vertices})")


def new_mesh(rows: int, cols: int, spacing: float, pins="corners",
             params: ClothParams | None = None) -> ClothState:
    """Flat mesh in the z = 0 plane at rest, zero velocity, nothing cut."""
    if rows < 2 or cols < 2:
        raise ClothError(f"mesh needs at least 2x2 vertices, got {rows}x{cols}")
    if not spacing > 0:
        raise ClothError(f"spacing must be > 0, got {spacing}")
    params = params or ClothParams()
    n = rows * cols
    r, c = np.divmod(np.arange(n), cols)
    pos = np.zeros((3, n))
    pos[0] = c * spacing
    pos[1] = r * spacing
    material = pos[:2].copy()
    inner = (r < rows - 1) & (c < cols - 1)
    valid = np.array([c < cols - 1, r < rows - 1, inner, inner])
    if not params.diagonals:
        valid[2:] = False
    rest = np.zeros((4, n))
    rest[:2] = spacing
    rest[2:] = spacing * np.sqrt(2.0)
    rest[~valid] = 0.0
    free = np.ones(n)
    free[_pin_vertices(pins, rows, cols)] = 0.0
    return ClothState(
        rows=rows, cols=cols, spacing=float(spacing), params=params,
        pos=pos, prev=pos.copy(), material=material, rest=rest,
        act=valid.astype(float), valid=valid, free=free, pin=pos.copy(),
        severed=np.zeros(n, dtype=bool),
    )


def gauze_mesh(rows: int = 25, cols: int = 25, pins="corners",
               params: ClothParams | None = None) -> ClothState:
    """Mesh spanning the 4x4 inch gauze square, in millimetres."""
    return new_mesh(rows, cols, GAUZE_WIDTH_MM / (cols - 1), pins, params)


def step(state: ClothState, nsteps: int = 1) -> ClothState:
    """Advance ``state`` in place by ``nsteps`` steps and return it."""
    p = state.params
    _kernels.step_n(state.pos, state.prev, state.free, state.pin, state.rest,
                    state.act, state.kw, state.cols, p.diagonals,
                    np.asarray(p.gravity, dtype=float), p.alpha, p.delta, p.tau,
                    p.dt, p.constraint_iterations, int(nsteps),
                    state._acc, state._terms)
    return state


def set_pin(state: ClothState, vertex: int, world_point=None) -> ClothState:
    """Hold ``vertex`` at ``world_point`` (default: where it is now)."""
    state.check_vertex(vertex)
    point = state.pos[:, vertex] if world_point is None else np.asarray(world_point, float)
    state.pin[:, vertex] = point
    state.pos[:, vertex] = point
    state.prev[:, vertex] = point
    if state.free[vertex] != 0.0:
        state.free[vertex] = 0.0
        state.refresh()
    return state


def release_pin(state: ClothState, vertex: int) -> ClothState:
    state.check_vertex(vertex)
    if state.free[vertex] == 0.0:
        state.free[vertex] = 1.0
        state.refresh()
    return state


def kinetic_energy(state: ClothState) -> float:
    d = (state.pos - state.prev) * state.free
    return float(np.sum(d * d) / (2.0 * state.params.dt ** 2))


def settle(state: ClothState, max_steps: int = 20000, tol: float = 1e-10,
           chunk: int = 100) -> ClothState:
    """Step until the kinetic energy drops below ``tol`` (or ``max_steps``)."""
    done = 0
    while done < max_steps:
        step(state, chunk)
        done += chunk
        if kinetic_energy(state) < tol:
            break
    return state


def cut_degree(state: ClothState) -> np.ndarray:
    """Number of cut constraints incident to each vertex."""
    deg = np.zeros(state.n_vertices, dtype=int)
    for i, j, _, is_cut in state.constraints():
        if is_cut:
            deg[i] += 1
            deg[j] += 1
    return deg


def write_snapshot_csv(state: ClothState, path) -> Path:
    path = Path(path)
    deg = cut_degree(state)
    with path.open("w") as fh:
        fh.write("vertex_id,x,y,z,cut_degree\n")
        for v in range(state.n_vertices):
            x, y, z = state.pos[:, v]
            fh.write(f"{v},{x:.9g},{y:.9g},{z:.9g},{deg[v]}\n")
    return path


def render_frame(state: ClothState, resolution: int = 256) -> np.ndarray:
    """Top-down orthographic height map as uint8 (brighter = higher).

    Intact quads are splatted at their vertices; severed vertices are left
    black so the cut line is visible.
    """
    img = np.zeros((resolution, resolution), dtype=np.uint8)
    x, y, z = state.pos
    lo = min(x.min(), y.min())
    hi = max(x.max(), y.max())
    span = max(hi - lo, 1e-12)
    zlo, zhi = z.min(), z.max()
    shade = np.full(z.shape, 200.0) if zhi - zlo < 1e-12 else 40 + 215 * (z - zlo) / (zhi - zlo)
    keep = ~state.severed
    ix = np.clip(((x - lo) / span * (resolution - 1)).round().astype(int), 0, resolution - 1)
    iy = np.clip(((y - lo) / span * (resolution - 1)).round().astype(int), 0, resolution - 1)
    rad = max(1, resolution // (2 * max(state.rows, state.cols)))
    for v in np.flatnonzero(keep):
        r0, c0 = resolution - 1 - iy[v], ix[v]
        img[max(r0 - rad, 0):r0 + rad + 1, max(c0 - rad, 0):c0 + rad + 1] = int(shade[v])
    return img


def write_pgm(image: np.ndarray, path) -> Path:
    """Binary PGM (P5) writer for uint8 images."""
    path = Path(path)
    h, w = image.shape
    with path.open("wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())
    return path
