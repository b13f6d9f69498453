"""Restart-free GMRES with a left preconditioner."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np


PRECONDITIONERS = ("none", "block-jacobi", "ML", "EML")
INITIAL_GUESSES = ("zero", "coarse-solve")
STOPPING_RULES = ("true", "preconditioned")


@dataclass(frozen=True)
class GmresConfig:
    """Stopping rule plus labels for the preconditioner and starting vector.

    ``preconditioner`` and ``initial_guess`` are descriptive; the operators
    themselves are passed to :func:`gmres_solve`.  ``stopping`` selects the
    residual tested against ``tol``: the true ``||b - A x|| / ||b||`` or the
    preconditioned ``||M (b - A x)|| / ||M b||``.
    """

    tol: float = 1e-9
    max_iter: int = 200
    preconditioner: str = "none"
    initial_guess: str = "zero"
    stopping: str = "true"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.initial_guess not in INITIAL_GUESSES:
            raise ValueError(f"unknown initial guess policy {self.initial_guess!r}")
        if self.stopping not in STOPPING_RULES:
            raise ValueError(f"unknown stopping rule {self.stopping!r}")


@dataclass
class SolveReport:
    """Outcome of one iterative solve.

    ``residuals`` holds the true relative residual ``||b - A x|| / ||b||``
    after the initial guess and after every iteration;
    ``preconditioned_residuals`` the GMRES least-squares residual
    ``||M (b - A x)|| / ||M b||``, which never increases.  ``status`` is one of
    ``converged``, ``max_iter`` or ``breakdown``.
    """

    iterations: int
    converged: bool
    residuals: list[float] = field(default_factory=list)
    preconditioned_residuals: list[float] = field(default_factory=list)
    status: str = "converged"
    error_vs_direct: float | None = None
    solve_seconds: float = 0.0
    setup_seconds: float = 0.0
    counters: dict = field(default_factory=dict)

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else math.nan

    def cell(self) -> str:
        """Table entry: the iteration count, or ``*`` when not converged."""
        if self.converged:
            return str(self.iterations)
        if self.error_vs_direct is not None:
            return f"*({self.error_vs_direct:.1e})"
        return "*"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["final_residual"] = self.final_residual
        return d


def _as_operator(A):
    if callable(A) and not hasattr(A, "shape"):
        return A
    if hasattr(A, "matvec"):
        return A.matvec
    return lambda v: A @ v


def gmres_solve(A, b: np.ndarray, preconditioner: Callable | None = None,
                x0: np.ndarray | None = None,
                config: GmresConfig = GmresConfig()) -> tuple[np.ndarray, SolveReport]:
    """Solve ``A x = b`` with left-preconditioned full GMRES.

    By default convergence is declared on the true relative residual,
    recomputed from the current iterate at every step.  An initial guess that
    already meets the tolerance returns with zero iterations.

    Parameters
    ----------
    A : sparse matrix, LinearOperator or callable
        The system operator.
    b : ndarray
        Right-hand side.
    preconditioner : callable, optional
        Applied on the left; ``None`` means no preconditioning.
    x0 : ndarray, optional
        Starting vector, zero by default.
    config : GmresConfig
        Tolerance, iteration cap and stopping rule.

    Returns
    -------
    x : ndarray
        Final iterate.
    report : SolveReport
        Iteration count, status and residual histories.
    """
    t0 = time.perf_counter()
    matvec = _as_operator(A)
    M = (lambda v: v) if preconditioner is None else _as_operator(preconditioner)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    bnorm = np.linalg.norm(b)

    def report(iters, converged, status="converged"):
        return SolveReport(iters, converged, res, pres, status,
                           solve_seconds=time.perf_counter() - t0)

    res, pres = [0.0], [0.0]
    if bnorm == 0.0:
        return np.zeros(n), report(0, True)

    def true_res(x):
        return np.linalg.norm(b - matvec(x)) / bnorm

    precond = config.stopping == "preconditioned"
    res = [true_res(x0)]
    r0 = M(b - matvec(x0))
    beta = np.linalg.norm(r0)
    mb = beta if not np.any(x0) else np.linalg.norm(M(b))
    pres = [beta / mb if mb > 0 else 0.0]
    if (pres if precond else res)[0] <= config.tol:
        return x0, report(0, True)
    if beta == 0.0:
        # the preconditioner annihilates a nonzero residual
        return x0, report(0, False, "breakdown")

    m = config.max_iter
    V = [r0 / beta]
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    s = np.zeros(m + 1)
    s[0] = beta
    x = x0
    for j in range(m):
        w = M(matvec(V[j]))
        for i in range(j + 1):
            H[i, j] = np.dot(w, V[i])
            w = w - H[i, j] * V[i]
        hnext = np.linalg.norm(w)
        H[j + 1, j] = hnext
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        denom = math.hypot(H[j, j], H[j + 1, j])
        if denom == 0.0:
            cs[j], sn[j] = 1.0, 0.0
        else:
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
        H[j, j] = denom
        H[j + 1, j] = 0.0
        s[j + 1] = -sn[j] * s[j]
        s[j] = cs[j] * s[j]
        y = _back_substitute(H[: j + 1, : j + 1], s[: j + 1])
        x = x0.copy()
        for i in range(j + 1):
            x += y[i] * V[i]
        res.append(true_res(x))
        pres.append(abs(s[j + 1]) / mb)
        if (pres if precond else res)[-1] <= config.tol:
            return x, report(j + 1, True)
        if hnext <= 1e-14 * beta:
            # invariant Krylov space: the iterate is as good as it will get
            return x, report(j + 1, False, "breakdown")
        if j + 1 < m:
            V.append(w / hnext)
    return x, report(m, False, "max_iter")


def _back_substitute(R: np.ndarray, s: np.ndarray) -> np.ndarray:
    k = s.shape[0]
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        if R[i, i] == 0.0:
            y[i] = 0.0
            continue
        y[i] = (s[i] - R[i, i + 1:] @ y[i + 1:]) / R[i, i]
    return y
