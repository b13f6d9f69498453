"""Front-level cost model for nested dissection and the multilevel coarse solvers.

A level-``k`` front of size ``m`` is charged ``m^3`` for its dense
factorization and ``m^2`` for storage.  The Schur-complement triple products
are not charged, so the model counts exactly what
:class:`hdgml.multilevel.MultilevelFactorization` accumulates in
``factor_flops`` and ``memory_words``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

SCHEDULES = ("ND", "ML", "EML")


@dataclass(frozen=True)
class CostModel:
    """Problem size and solver for the cost model.

    ``N`` is the number of levels (``n = 2^N`` elements per side), ``p`` the
    base polynomial order and ``dimension`` 2 or 3.  For EML the front order
    at level ``k`` is ``min(p + k - 1, cap)``.
    """

    dimension: int
    N: int
    p: int
    schedule: str = "ML"
    cap: int = 10

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.N < 1 or self.p < 0:
            raise ValueError("need N >= 1 and p >= 0")

    @property
    def n_elements(self) -> int:
        return 2 ** (self.dimension * self.N)

    @property
    def q0(self) -> int:
        return (self.p + 1) ** (self.dimension - 1)

    def order(self, k: int) -> int:
        if self.schedule == "EML":
            return min(self.p + k - 1, self.cap)
        return self.p

    def q(self, k: int) -> int:
        return (self.order(k) + 1) ** (self.dimension - 1)

    def alpha(self, k: int) -> float:
        return self.q(k) / self.q0

    @property
    def alpha_N(self) -> float:
        return self.alpha(self.N)

    def fronts(self, k: int) -> int:
        """Number of level-``k`` fronts."""
        return (2 ** self.dimension) ** (self.N - k)

    def front_size(self, k: int) -> int:
        """Unknowns on one level-``k`` front."""
        faces = 4 if self.dimension == 2 else 12
        if self.schedule == "ND":
            # a level-k front spans n / 2^(N+1-k) = 2^(k-1) elements per face side
            span = 2 ** (k - 1)
            return faces * span ** (self.dimension - 1) * self.q0
        return faces * self.q(k)


def _front_sum(model: CostModel, power: int) -> float:
    return float(sum(model.fronts(k) * float(model.front_size(k)) ** power
                     for k in range(1, model.N + 1)))


def model_factor_cost(model: CostModel) -> float:
    """Exact sum over fronts of (front size)^3."""
    return _front_sum(model, 3)


def model_memory_cost(model: CostModel) -> float:
    """Exact sum over fronts of (front size)^2."""
    return _front_sum(model, 2)


def closed_form_factor(model: CostModel) -> float:
    """Asymptotic closed form of the factorization cost.

    For ML/EML the form takes ``alpha_k = alpha_N`` on every level above the
    first, so for EML it overestimates the exact sum.
    """
    NT, q0 = model.n_elements, model.q0
    if model.schedule == "ND":
        if model.dimension == 2:
            return 16 * q0**3 * NT**1.5 * (1 - 1 / math.sqrt(NT))
        return 31 * q0**3 * NT**2 * (1 - 1 / NT)
    a3 = model.alpha_N**3
    if model.dimension == 2:
        return 64 * q0**3 * (0.25 * (1 + a3 / 3) * NT - a3 / 3)
    return 1728 * q0**3 * (0.125 * (1 + a3 / 7) * NT - a3 / 7)


def closed_form_memory(model: CostModel) -> float:
    """Asymptotic closed form of the memory cost (see :func:`closed_form_factor`)."""
    NT, q0 = model.n_elements, model.q0
    if model.schedule == "ND":
        if model.dimension == 2:
            return 8 * q0**2 * NT * math.log2(NT)
        return 18 * q0**2 * NT ** (4 / 3) * (1 - NT ** (-1 / 3))
    a2 = model.alpha_N**2
    if model.dimension == 2:
        return 16 * q0**2 * (0.25 * (1 + a2 / 3) * NT - a2 / 3)
    return 144 * q0**2 * (0.125 * (1 + a2 / 7) * NT - a2 / 7)


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class Comparison:
    """Measured counters against the model along a sequence of meshes."""

    schedule: str
    quantity: str
    rows: list[dict]
    measured_slope: float
    model_slope: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        fields = ["schedule", "quantity", "N", "p", "n_elements", "measured", "model", "closed_form"]
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: r[k] for k in fields})
        return buf.getvalue()


def measured_vs_model(records: list[dict], quantity: str = "factor", fit_points: int = 3) -> Comparison:
    """Compare measured counters with the cost model.

    Parameters
    ----------
    records : list of dict
        One per mesh, each with keys ``N``, ``p``, ``schedule`` and the
        measured ``factor_flops`` / ``memory_words``; ``cap`` is optional.
    quantity : {"factor", "memory"}
        Which counter to compare.
    fit_points : int
        Slopes are fitted over this many finest meshes.

    Raises
    ------
    ValueError
        With fewer than three records or mixed schedules.
    """
    if len(records) < 3:
        raise ValueError("need at least three meshes to fit a slope")
    schedules = {r["schedule"] for r in records}
    if len(schedules) != 1:
        raise ValueError("records mix several schedules")
    key = {"factor": "factor_flops", "memory": "memory_words"}[quantity]
    model_fn = model_factor_cost if quantity == "factor" else model_memory_cost
    closed_fn = closed_form_factor if quantity == "factor" else closed_form_memory
    rows = []
    for r in sorted(records, key=lambda r: r["N"]):
        m = CostModel(2, r["N"], r["p"], r["schedule"], r.get("cap", 10))
        rows.append(dict(schedule=m.schedule, quantity=quantity, N=m.N, p=m.p, n_elements=m.n_elements,
                         measured=float(r[key]), model=model_fn(m), closed_form=closed_fn(m)))
    tail = rows[-fit_points:]
    nt = [r["n_elements"] for r in tail]
    return Comparison(
        schedule=rows[0]["schedule"], quantity=quantity, rows=rows,
        measured_slope=loglog_slope(nt, [r["measured"] for r in tail]),
        model_slope=loglog_slope(nt, [r["model"] for r in tail]),
    )
