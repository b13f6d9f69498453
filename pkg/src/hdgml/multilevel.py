"""Nested-dissection factorization of the coarse trace operator and the v-cycle.

The level-1 operator is ordered level by level, front by front, so every
separator level is a contiguous block of unknowns and, inside it, every front
is a contiguous dense block.  Eliminating level ``k`` therefore needs one
batched dense inverse per level plus a couple of sparse products for the
Schur complement handed to level ``k + 1``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import SkeletonHierarchy, build_lumping_map
from .projection import (
    EnrichmentSchedule,
    ProjectionPair,
    build_prolongation,
    galerkin_coarse_matrix,
)


class FactorizationError(RuntimeError):
    """A front block could not be inverted."""

    def __init__(self, level: int, front: int, detail: str = "singular block"):
        super().__init__(f"factorization failed at level {level}, front {front}: {detail}")
        self.level = level
        self.front = front


def _block_diagonal(A: sp.spmatrix, nblocks: int, m: int, *, strict: bool = True) -> np.ndarray:
    """Dense diagonal ``m x m`` blocks of a sparse matrix.

    With ``strict`` set, any entry outside the diagonal blocks is an error.
    """
    coo = sp.coo_matrix(A)
    bi = coo.row // m
    bj = coo.col // m
    on = bi == bj
    if strict and not np.all(on):
        raise ValueError("matrix is not block diagonal in the expected front layout")
    D = np.zeros((nblocks, m, m))
    np.add.at(D, (bi[on], coo.row[on] % m, coo.col[on] % m), coo.data[on])
    return D


def _invert_blocks(D: np.ndarray, level: int, rcond: float = 1e-14) -> np.ndarray:
    try:
        inv = np.linalg.inv(D)
    except np.linalg.LinAlgError:
        inv = None
    if inv is None or not np.all(np.isfinite(inv)):
        for f in range(D.shape[0]):
            try:
                np.linalg.inv(D[f])
            except np.linalg.LinAlgError:
                raise FactorizationError(level, f) from None
        raise FactorizationError(level, 0, "non-finite inverse")
    # exact singularity sometimes slips through LAPACK as a huge inverse
    scale = np.abs(D).max(axis=(1, 2))
    growth = np.abs(inv).max(axis=(1, 2)) * scale
    bad = np.nonzero(~(growth < 1.0 / rcond))[0]
    if bad.size:
        raise FactorizationError(level, int(bad[0]), "numerically singular block")
    return inv


def _bsr(blocks: np.ndarray) -> sp.bsr_matrix:
    nb, m, _ = blocks.shape
    return sp.bsr_matrix((blocks, np.arange(nb), np.arange(nb + 1)), shape=(nb * m, nb * m))


@dataclass
class LevelFactor:
    level: int
    n_fronts: int
    front_size: int
    inv_II: sp.bsr_matrix
    A_IB: sp.csr_matrix
    A_BI: sp.csr_matrix


@dataclass
class MultilevelFactorization:
    """Direct solver for the level-1 operator by level-wise Schur elimination.

    ``factor_flops`` and ``memory_words`` are the front-level model counters:
    the sum over fronts of ``m^3`` and ``m^2`` for front size ``m``.
    """

    levels: list[LevelFactor]
    n: int
    factor_flops: float = 0.0
    memory_words: float = 0.0
    front_sizes: dict[int, int] = field(default_factory=dict)
    setup_seconds: float = 0.0
    operators: dict[int, sp.csr_matrix] = field(default_factory=dict)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"right-hand side has {b.shape[0]} entries, expected {self.n}")
        # forward sweep: eliminate interior unknowns level by level
        interior = []
        rest = b
        for lev in self.levels:
            nI = lev.inv_II.shape[0]
            bI, rest = rest[:nI], rest[nI:]
            yI = lev.inv_II @ bI
            interior.append(yI)
            if rest.shape[0]:
                rest = rest - lev.A_BI @ yI
        # backward sweep
        x_tail = np.empty(0)
        for lev, yI in zip(reversed(self.levels), reversed(interior)):
            if x_tail.shape[0]:
                xI = yI - lev.inv_II @ (lev.A_IB @ x_tail)
            else:
                xI = yI
            x_tail = np.concatenate([xI, x_tail])
        return x_tail

    __call__ = solve

    def ideal_prolongation(self, k: int) -> sp.csr_matrix:
        """``I_k = [-A_II^{-1} A_IB; I]`` for the level-``k`` elimination step."""
        lev = self.levels[k - 1]
        nB = lev.A_IB.shape[1]
        top = -(lev.inv_II @ lev.A_IB)
        return sp.vstack([top, sp.identity(nB)], format="csr")

    def ideal_restriction(self, k: int) -> sp.csr_matrix:
        """``Q_{k+1} = [-A_BI A_II^{-1}, I]`` for the level-``k`` elimination step."""
        lev = self.levels[k - 1]
        nB = lev.A_BI.shape[0]
        left = -(lev.A_BI @ lev.inv_II)
        return sp.hstack([left, sp.identity(nB)], format="csr")


def front_layout(hierarchy: SkeletonHierarchy, schedule: EnrichmentSchedule,
                 lumped: bool = True) -> tuple[list[int], list[int]]:
    """Front sizes and front counts per separator level (index 0 unused)."""
    sizes, counts = [0], [0]
    for k in range(1, hierarchy.levels + 1):
        segments = 4 if lumped else 4 * 2 ** (k - 1)
        sizes.append(segments * (schedule.order(k) + 1))
        counts.append(hierarchy.n_fronts(k))
    return sizes, counts


def factor_coarse(A1: sp.spmatrix, hierarchy: SkeletonHierarchy, schedule: EnrichmentSchedule,
                  lumped: bool = True, keep_operators: bool = False) -> MultilevelFactorization:
    """Factor the level-1 operator of a lumped (or unlumped) hierarchy."""
    sizes, counts = front_layout(hierarchy, schedule, lumped)
    return factor_levels(A1, sizes, counts, keep_operators)


def factor_levels(A1: sp.spmatrix, front_sizes: list[int], n_fronts: list[int],
                  keep_operators: bool = False) -> MultilevelFactorization:
    """Factor a level-ordered operator.

    ``front_sizes[k]`` and ``n_fronts[k]`` describe separator level ``k``
    (index 0 unused).  The unknowns of level ``k`` must directly follow those
    of level ``k - 1``.  With ``keep_operators`` the Schur complement seen by
    every level is stored in ``operators[k]``.

    Raises
    ------
    FactorizationError
        If a front block is singular; the message names level and front.
    """
    t0 = time.perf_counter()
    A = sp.csr_matrix(A1)
    n = A.shape[0]
    expected = sum(m * f for m, f in zip(front_sizes[1:], n_fronts[1:]))
    if expected != n:
        raise ValueError(f"front layout covers {expected} unknowns but the operator has {n}")
    out = MultilevelFactorization(levels=[], n=n)
    for k in range(1, len(front_sizes)):
        m, nf = front_sizes[k], n_fronts[k]
        nI = m * nf
        if keep_operators:
            out.operators[k] = A
        A_II = A[:nI, :nI]
        inv = _invert_blocks(_block_diagonal(A_II, nf, m), k)
        inv_II = _bsr(inv)
        A_IB = A[:nI, nI:].tocsr()
        A_BI = A[nI:, :nI].tocsr()
        out.levels.append(LevelFactor(k, nf, m, inv_II, A_IB, A_BI))
        out.factor_flops += nf * float(m) ** 3
        out.memory_words += nf * float(m) ** 2
        out.front_sizes[k] = m
        if nI < A.shape[0]:
            A = (A[nI:, nI:] - A_BI @ (inv_II @ A_IB)).tocsr()
            A.eliminate_zeros()
    out.setup_seconds = time.perf_counter() - t0
    return out


class BlockJacobiSmoother:
    """Undamped block Jacobi with one block per fine trace edge."""

    def __init__(self, A: sp.spmatrix, block: int):
        A = sp.csr_matrix(A)
        n = A.shape[0]
        if n % block:
            raise ValueError("operator size is not a multiple of the block size")
        self.A = A
        self.block = block
        D = _block_diagonal(A, n // block, block, strict=False)
        self.Dinv = _bsr(_invert_blocks(D, 0))

    def smooth(self, x: np.ndarray, b: np.ndarray, steps: int) -> np.ndarray:
        """``steps`` sweeps of ``x <- x + D^{-1} (b - A x)``."""
        for _ in range(steps):
            x = x + self.Dinv @ (b - self.A @ x)
        return x

    def smooth_from_zero(self, b: np.ndarray, steps: int) -> np.ndarray:
        """Same as ``smooth(0, b, steps)`` without the wasted first product."""
        if steps == 0:
            return np.zeros_like(b)
        return self.smooth(self.Dinv @ b, b, steps - 1)

    def apply(self, r: np.ndarray) -> np.ndarray:
        return self.Dinv @ r


class BlockJacobiPreconditioner:
    """Stand-alone block-Jacobi preconditioner: ``sweeps`` sweeps from zero.

    With ``sweeps = m1 + m2`` this is the v-cycle with the coarse correction
    removed, which makes it the natural baseline for the multilevel methods.
    """

    def __init__(self, A: sp.spmatrix, block: int, sweeps: int = 4):
        self.smoother = BlockJacobiSmoother(A, block)
        self.sweeps = sweeps

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.smoother.smooth_from_zero(r, self.sweeps)


@dataclass
class VCyclePreconditioner:
    """Two-grid cycle: ``m1`` smoothing sweeps, exact coarse correction, ``m2`` sweeps."""

    A0: sp.csr_matrix
    smoother: BlockJacobiSmoother
    pair: ProjectionPair
    coarse: MultilevelFactorization
    A1: sp.csr_matrix
    m1: int = 2
    m2: int = 2
    setup_seconds: float = 0.0

    def coarse_correct(self, r: np.ndarray) -> np.ndarray:
        return self.pair.I0 @ self.coarse.solve(self.pair.Q1 @ r)

    def vcycle(self, r: np.ndarray) -> np.ndarray:
        """One cycle from a zero initial guess; a fixed linear map of ``r``."""
        e = self.smoother.smooth_from_zero(r, self.m1)
        e = e + self.coarse_correct(r - self.A0 @ e)
        return self.smoother.smooth(e, r, self.m2)

    apply = vcycle
    __call__ = vcycle

    def counters(self) -> dict:
        return {
            "coarse_dofs": int(self.pair.n_coarse),
            "factor_flops": self.coarse.factor_flops,
            "memory_words": self.coarse.memory_words,
            "front_sizes": dict(self.coarse.front_sizes),
            "setup_seconds": self.setup_seconds,
        }


def build_multilevel(A0: sp.spmatrix, hierarchy: SkeletonHierarchy, p: int, method: str = "ML",
                     cap: int = 10, m1: int = 2, m2: int = 2,
                     lumped: bool = True) -> VCyclePreconditioner:
    """Set up the ML or EML preconditioner for a fine trace operator."""
    t0 = time.perf_counter()
    A0 = sp.csr_matrix(A0)
    schedule = EnrichmentSchedule(p, method, cap)
    pair = build_prolongation(build_lumping_map(hierarchy, lumped=lumped), schedule, p)
    A1 = galerkin_coarse_matrix(A0, pair)
    coarse = factor_coarse(A1, hierarchy, schedule, lumped)
    smoother = BlockJacobiSmoother(A0, p + 1)
    pre = VCyclePreconditioner(A0, smoother, pair, coarse, A1, m1, m2)
    pre.setup_seconds = time.perf_counter() - t0
    return pre


class NestedDissectionSolver:
    """Exact solve of the fine trace system by nested dissection (no lumping)."""

    def __init__(self, A0: sp.spmatrix, hierarchy: SkeletonHierarchy, p: int):
        schedule = EnrichmentSchedule(p, "ML")
        self.pair = build_prolongation(build_lumping_map(hierarchy, lumped=False), schedule, p)
        A1 = galerkin_coarse_matrix(A0, self.pair)
        self.factor = factor_coarse(A1, hierarchy, schedule, lumped=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self.pair.I0 @ self.factor.solve(self.pair.Q1 @ b)

    __call__ = solve
