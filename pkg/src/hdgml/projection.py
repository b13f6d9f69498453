"""L2 transfer between the fine trace space and the lumped (level-1) space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import edge_mass, gauss_legendre, gll_nodes, lagrange_eval
from .mesh import LumpingMap

MAX_ORDER = 10


@dataclass(frozen=True)
class EnrichmentSchedule:
    """Polynomial order carried by the lumped edges of each separator level.

    ML keeps the fine order ``p`` everywhere.  EML raises the order by one per
    level, ``min(p + k - 1, cap)`` on level-``k`` fronts.
    """

    p: int
    method: str = "ML"
    cap: int = MAX_ORDER

    def __post_init__(self):
        if self.method not in ("ML", "EML"):
            raise ValueError(f"unknown method {self.method!r}; expected 'ML' or 'EML'")
        if self.p < 1:
            raise ValueError("polynomial degree must be at least 1")
        if self.cap < self.p:
            raise ValueError("enrichment cap below the base order")

    def order(self, k: int) -> int:
        if self.method == "ML":
            return self.p
        return min(self.p + k - 1, self.cap)

    def orders(self, levels: int) -> list[int]:
        return [self.order(k) for k in range(1, levels + 1)]


def transfer_block(order: int, p: int, n_sub: int, npts: int | None = None) -> np.ndarray:
    """L2 projections of a degree-``order`` coarse edge onto its ``n_sub`` fine edges.

    Returns shape ``(n_sub, p + 1, order + 1)``.  Fine edge ``j`` occupies
    ``[-1 + 2j/n_sub, -1 + 2(j+1)/n_sub]`` of the coarse parameter.
    """
    npts = max(order, p) + 2 if npts is None else npts
    t, w = gauss_legendre(npts)
    fine = lagrange_eval(gll_nodes(p), t)
    Minv = np.linalg.inv(edge_mass(p))
    out = np.empty((n_sub, p + 1, order + 1))
    for j in range(n_sub):
        s = -1.0 + (2 * j + t + 1.0) / n_sub
        coarse = lagrange_eval(gll_nodes(order), s)
        out[j] = Minv @ ((fine * w[:, None]).T @ coarse)
    # entries are O(1); drop round-off so nested spaces give exact sparsity
    out[np.abs(out) < 1e-13] = 0.0
    return out


def _block_diag(blocks: np.ndarray) -> sp.bsr_matrix:
    nb, m, _ = blocks.shape
    return sp.bsr_matrix((blocks, np.arange(nb), np.arange(nb + 1)), shape=(nb * m, nb * m))


@dataclass
class ProjectionPair:
    """Prolongation ``I0: M1 -> M0`` and its L2 adjoint ``Q1 = M1^{-1} I0^T M0``.

    ``level_offsets[k]`` is the first level-1 dof owned by separator level
    ``k``; ``front_sizes[k]`` the number of level-1 dofs of one level-``k``
    front.
    """

    I0: sp.csr_matrix
    Q1: sp.csr_matrix
    M0: sp.bsr_matrix
    M1: sp.csr_matrix
    orders: list[int]
    level_offsets: list[int]
    front_sizes: list[int]
    n_fronts: list[int]

    @property
    def n_fine(self) -> int:
        return self.I0.shape[0]

    @property
    def n_coarse(self) -> int:
        return self.I0.shape[1]

    def restrict(self, r: np.ndarray) -> np.ndarray:
        return self.Q1 @ r

    def prolong(self, z: np.ndarray) -> np.ndarray:
        return self.I0 @ z


def build_prolongation(lumping: LumpingMap, schedule: EnrichmentSchedule, p: int | None = None) -> ProjectionPair:
    """Assemble the level-0/level-1 transfer pair for a lumping map."""
    p = schedule.p if p is None else p
    hier = lumping.hierarchy
    mesh = hier.mesh
    nt = p + 1
    n0 = hier.interior_edges.size * nt

    rows, cols, vals = [], [], []
    m1_blocks = []
    offsets = [0, 0]
    front_sizes = [0]
    n_fronts = [0]
    col0 = 0
    for k in range(1, lumping.levels + 1):
        r = schedule.order(k)
        q = r + 1
        members = lumping.members[k]
        nseg, m = members.shape
        P = transfer_block(r, p, m)
        fine_dof = hier.interior_index[members][:, :, None] * nt + np.arange(nt)[None, None, :]
        coarse_dof = col0 + np.arange(nseg)[:, None] * q + np.arange(q)[None, :]
        rows.append(np.broadcast_to(fine_dof[:, :, :, None], (nseg, m, nt, q)).ravel())
        cols.append(np.broadcast_to(coarse_dof[:, None, None, :], (nseg, m, nt, q)).ravel())
        vals.append(np.broadcast_to(P[None], (nseg, m, nt, q)).ravel())
        length = m * mesh.h
        m1_blocks.append(np.broadcast_to(0.5 * length * edge_mass(r), (nseg, q, q)))
        col0 += nseg * q
        offsets.append(col0)
        front_sizes.append(lumping.segments_per_front(k) * q)
        n_fronts.append(hier.n_fronts(k))

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    keep = vals != 0.0
    I0 = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n0, col0))

    n_edges0 = hier.interior_edges.size
    M0 = _block_diag(np.broadcast_to(0.5 * mesh.h * edge_mass(p), (n_edges0, nt, nt)).copy())
    M1 = sp.block_diag([_block_diag(b.copy()).tocsr() for b in m1_blocks], format="csr")
    M1inv = _inverse_block_diag(m1_blocks)
    Q1 = (M1inv @ (I0.T.tocsr() @ M0)).tocsr()
    return ProjectionPair(
        I0=I0, Q1=Q1, M0=M0, M1=M1,
        orders=[0] + schedule.orders(lumping.levels),
        level_offsets=offsets, front_sizes=front_sizes, n_fronts=n_fronts,
    )


def _inverse_block_diag(level_blocks) -> sp.csr_matrix:
    mats = []
    for b in level_blocks:
        inv = np.linalg.inv(b[0])
        mats.append(_block_diag(np.broadcast_to(inv, b.shape).copy()).tocsr())
    return sp.block_diag(mats, format="csr")


def galerkin_coarse_matrix(A0: sp.spmatrix, pair: ProjectionPair) -> sp.csr_matrix:
    """Level-1 operator ``A1 = Q1 A0 I0``."""
    if A0.shape != (pair.n_fine, pair.n_fine):
        raise ValueError(f"A0 has shape {A0.shape}, projection expects {pair.n_fine} fine dofs")
    A1 = pair.Q1 @ (sp.csr_matrix(A0) @ pair.I0)
    A1 = sp.csr_matrix(A1)
    A1.sum_duplicates()
    A1.sort_indices()
    return A1
