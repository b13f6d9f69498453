"""Structured quadrilateral meshes, their skeleton, and the nested-dissection
edge hierarchy used by the multilevel solvers.

Conventions
-----------
Elements are indexed ``e = j * n + i`` with ``i`` the column (x) and ``j``
the row (y).  Horizontal edges ``H(i, j)`` sit on the line ``y = y0 + j h``
and get ids ``j * n + i``; vertical edges ``V(i, j)`` sit on ``x = x0 + i h``
and get ids ``n (n + 1) + i * n + j``.  Every edge is parameterised by the
increasing coordinate along it, for both neighbouring elements, so traces
never need flipping.

Local faces of an element are ordered south, east, north, west.

The separator cross of a level-``k`` front sits in the middle of a
``2^k x 2^k`` element block.  Its arms are numbered west, east, south,
north, and the fine edges within an arm are ordered by increasing
coordinate.  Fronts within a level follow Morton (quadtree) order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SOUTH, EAST, NORTH, WEST = 0, 1, 2, 3
FACE_NORMALS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])

ARM_WEST, ARM_EAST, ARM_SOUTH, ARM_NORTH = 0, 1, 2, 3
ARM_NAMES = ("west", "east", "south", "north")


@dataclass(frozen=True)
class StructuredMesh:
    """Uniform ``2^N x 2^N`` quadrilateral mesh of an axis-aligned square."""

    levels: int
    domain: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 0:
            raise ValueError(f"invalid level count {self.levels!r}")
        x0, x1, y0, y1 = self.domain
        if not np.isclose(x1 - x0, y1 - y0) or x1 <= x0:
            raise ValueError("domain must be a non-degenerate square")

    @property
    def n_per_side(self) -> int:
        return 2**self.levels

    @property
    def n_elements(self) -> int:
        return self.n_per_side**2

    @property
    def h(self) -> float:
        return (self.domain[1] - self.domain[0]) / self.n_per_side

    @property
    def n_horizontal(self) -> int:
        return self.n_per_side * (self.n_per_side + 1)

    @property
    def n_edges(self) -> int:
        return 2 * self.n_horizontal

    def hedge(self, i, j):
        return np.asarray(j) * self.n_per_side + np.asarray(i)

    def vedge(self, i, j):
        return self.n_horizontal + np.asarray(i) * self.n_per_side + np.asarray(j)

    def element_origins(self) -> np.ndarray:
        """Lower-left corner of every element, shape ``(n_elements, 2)``."""
        n, h = self.n_per_side, self.h
        j, i = np.divmod(np.arange(self.n_elements), n)
        return np.column_stack((self.domain[0] + i * h, self.domain[2] + j * h))

    def element_centers(self) -> np.ndarray:
        return self.element_origins() + 0.5 * self.h

    def element_faces(self) -> np.ndarray:
        """Global edge ids of the four faces of each element (S, E, N, W)."""
        n = self.n_per_side
        j, i = np.divmod(np.arange(self.n_elements), n)
        return np.column_stack(
            (self.hedge(i, j), self.vedge(i + 1, j), self.hedge(i, j + 1), self.vedge(i, j))
        )

    def edge_geometry(self) -> tuple[np.ndarray, np.ndarray]:
        """Orientation (0 horizontal, 1 vertical) and start point of each edge."""
        n, h = self.n_per_side, self.h
        x0, _, y0, _ = self.domain
        eid = np.arange(self.n_edges)
        vert = eid >= self.n_horizontal
        start = np.empty((self.n_edges, 2))
        jh, ih = np.divmod(eid[~vert], n)
        start[~vert] = np.column_stack((x0 + ih * h, y0 + jh * h))
        iv, jv = np.divmod(eid[vert] - self.n_horizontal, n)
        start[vert] = np.column_stack((x0 + iv * h, y0 + jv * h))
        return vert.astype(np.int8), start

    def edge_elements(self) -> np.ndarray:
        """The (up to) two elements sharing each edge, ``-1`` when absent.

        Column 0 is the element below/left of the edge, column 1 the one
        above/right.
        """
        faces = self.element_faces()
        out = -np.ones((self.n_edges, 2), dtype=np.int64)
        elems = np.arange(self.n_elements)
        out[faces[:, NORTH], 0] = elems
        out[faces[:, EAST], 0] = elems
        out[faces[:, SOUTH], 1] = elems
        out[faces[:, WEST], 1] = elems
        return out

    def boundary_mask(self) -> np.ndarray:
        return (self.edge_elements() < 0).any(axis=1)


@dataclass(frozen=True)
class SkeletonEdge:
    id: int
    orientation: str
    endpoints: tuple[tuple[float, float], tuple[float, float]]
    kind: str
    nd_level: int
    front_id: int
    arm_id: int
    position: int


def morton_order(m: int) -> np.ndarray:
    """Block coordinates ``(bx, by)`` of an ``m x m`` grid in Z-order."""
    if m == 1:
        return np.zeros((1, 2), dtype=np.int64)
    bits = int(np.log2(m))
    code = np.arange(m * m)
    bx = np.zeros_like(code)
    by = np.zeros_like(code)
    for b in range(bits):
        bx |= ((code >> (2 * b)) & 1) << b
        by |= ((code >> (2 * b + 1)) & 1) << b
    return np.column_stack((bx, by))


@dataclass
class SkeletonHierarchy:
    """Nested-dissection assignment of every interior edge.

    ``fronts[k]`` is an integer array of shape ``(4**(N-k), 4, 2**(k-1))``
    holding global edge ids per (front, arm, position); index ``k`` runs from
    1 to N (``fronts[0]`` is unused).
    """

    mesh: StructuredMesh
    fronts: list[np.ndarray]
    front_blocks: list[np.ndarray]
    interior_edges: np.ndarray
    interior_index: np.ndarray
    nd_level: np.ndarray
    front_id: np.ndarray
    arm_id: np.ndarray
    position: np.ndarray

    @property
    def levels(self) -> int:
        return self.mesh.levels

    def n_fronts(self, k: int) -> int:
        return self.fronts[k].shape[0]

    def nd_order(self) -> np.ndarray:
        """Interior edges in elimination order (level, front, arm, position)."""
        return np.concatenate([self.fronts[k].ravel() for k in range(1, self.levels + 1)])

    def edge_record(self, eid: int) -> SkeletonEdge:
        mesh = self.mesh
        vert, start = mesh.edge_geometry()
        a = tuple(start[eid])
        b = (a[0], a[1] + mesh.h) if vert[eid] else (a[0] + mesh.h, a[1])
        interior = self.interior_index[eid] >= 0
        return SkeletonEdge(
            id=int(eid),
            orientation="vertical" if vert[eid] else "horizontal",
            endpoints=(a, b),
            kind="interior" if interior else "boundary",
            nd_level=int(self.nd_level[eid]),
            front_id=int(self.front_id[eid]),
            arm_id=int(self.arm_id[eid]),
            position=int(self.position[eid]),
        )


def build_hierarchy(levels: int, domain=(0.0, 1.0, 0.0, 1.0)):
    """Build the mesh and its nested-dissection skeleton hierarchy.

    Parameters
    ----------
    levels : int
        Number of levels ``N``; the mesh has ``2^N`` elements per side.
    domain : tuple
        ``(x0, x1, y0, y1)`` of the square domain.

    Returns
    -------
    mesh : StructuredMesh
    hierarchy : SkeletonHierarchy
    """
    if isinstance(levels, bool) or int(levels) != levels or levels < 2:
        raise ValueError(f"nested dissection needs an integer N >= 2, got {levels!r}")
    mesh = StructuredMesh(int(levels), tuple(float(v) for v in domain))
    N = mesh.levels
    n_edges = mesh.n_edges

    nd_level = np.zeros(n_edges, dtype=np.int64)
    front_id = -np.ones(n_edges, dtype=np.int64)
    arm_id = -np.ones(n_edges, dtype=np.int64)
    position = -np.ones(n_edges, dtype=np.int64)

    fronts: list[np.ndarray] = [np.zeros((0, 4, 0), dtype=np.int64)]
    blocks: list[np.ndarray] = [np.zeros((0, 2), dtype=np.int64)]
    for k in range(1, N + 1):
        size, half = 2**k, 2 ** (k - 1)
        bxy = morton_order(2 ** (N - k))
        bx, by = bxy[:, 0:1], bxy[:, 1:2]
        cx, cy = bx * size + half, by * size + half
        pos = np.arange(half)[None, :]
        west = mesh.hedge(bx * size + pos, cy)
        east = mesh.hedge(cx + pos, cy)
        south = mesh.vedge(cx, by * size + pos)
        north = mesh.vedge(cx, cy + pos)
        arms = np.stack((west, east, south, north), axis=1)
        fronts.append(arms)
        blocks.append(bxy)
        nf = arms.shape[0]
        nd_level[arms] = k
        front_id[arms] = np.arange(nf)[:, None, None]
        arm_id[arms] = np.arange(4)[None, :, None]
        position[arms] = pos[:, None, :]

    interior_edges = np.flatnonzero(~mesh.boundary_mask())
    interior_index = -np.ones(n_edges, dtype=np.int64)
    interior_index[interior_edges] = np.arange(interior_edges.size)

    hier = SkeletonHierarchy(
        mesh=mesh,
        fronts=fronts,
        front_blocks=blocks,
        interior_edges=interior_edges,
        interior_index=interior_index,
        nd_level=nd_level,
        front_id=front_id,
        arm_id=arm_id,
        position=position,
    )
    assigned = np.sort(hier.nd_order())
    if assigned.size != interior_edges.size or np.any(assigned != interior_edges):
        raise RuntimeError("nested dissection does not partition the interior edges")
    return mesh, hier


@dataclass
class LumpingMap:
    """Grouping of fine interior edges into level-1 (coarse) edges.

    Coarse edges are numbered level by level, then by front, arm and segment.
    With ``lumped=True`` every arm collapses to one segment; with
    ``lumped=False`` each fine edge is its own segment (plain nested
    dissection).  ``members[k]`` has shape ``(n_segments_k, m_k)``.
    """

    hierarchy: SkeletonHierarchy
    lumped: bool
    members: list[np.ndarray]
    seg_arm: list[np.ndarray] = field(default_factory=list)
    seg_front: list[np.ndarray] = field(default_factory=list)

    @property
    def levels(self) -> int:
        return self.hierarchy.levels

    def n_segments(self, k: int) -> int:
        return self.members[k].shape[0]

    def edges_per_segment(self, k: int) -> int:
        return self.members[k].shape[1]

    def segments_per_front(self, k: int) -> int:
        return self.n_segments(k) // self.hierarchy.n_fronts(k)

    @property
    def n_coarse(self) -> int:
        return sum(self.n_segments(k) for k in range(1, self.levels + 1))

    def coarse_levels(self) -> np.ndarray:
        return np.concatenate(
            [np.full(self.n_segments(k), k) for k in range(1, self.levels + 1)]
        )

    def extent(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Start point and length of every level-``k`` coarse edge."""
        mesh = self.hierarchy.mesh
        _, start = mesh.edge_geometry()
        first = self.members[k][:, 0]
        return start[first], np.full(first.size, self.edges_per_segment(k) * mesh.h)


def build_lumping_map(hierarchy: SkeletonHierarchy, lumped: bool = True) -> LumpingMap:
    """Lump each separator arm into a single long edge.

    Level-1 arms hold one fine edge, so lumping is the identity there.
    """
    members = [np.zeros((0, 0), dtype=np.int64)]
    seg_arm = [np.zeros(0, dtype=np.int64)]
    seg_front = [np.zeros(0, dtype=np.int64)]
    for k in range(1, hierarchy.levels + 1):
        arms = hierarchy.fronts[k]
        nf, _, alen = arms.shape
        if lumped:
            members.append(arms.reshape(nf * 4, alen))
            spa = 1
        else:
            members.append(arms.reshape(nf * 4 * alen, 1))
            spa = alen
        seg_arm.append(np.tile(np.repeat(np.arange(4), spa), nf))
        seg_front.append(np.repeat(np.arange(nf), 4 * spa))
    return LumpingMap(hierarchy, lumped, members, seg_arm, seg_front)
