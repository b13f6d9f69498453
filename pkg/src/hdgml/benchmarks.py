"""Benchmark problems: Poisson, a heterogeneous-permeability substitute, pure
transport and three convection-diffusion cases.

Each case bundles its coefficients in a :class:`ProblemCoefficients` so it
can be handed straight to :func:`hdgml.hdg.assemble_trace_system`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .hdg import ProblemCoefficients, TraceSystem, recover_volume, volume_quadrature

CASE_IDS = ("I", "II", "III-shock", "III-smooth", "IV", "V", "VI")
ALPHA_RANGE = (10.0, 1e4)
KAPPA_RANGE = (1e-4, 1e-1)
DEFAULT_PARAMETER = {"IV": 10.0, "V": 1e-1, "VI": 10.0, "II": 0}

# Example II substitute: 16x16 cells, log10(kappa) in {0, 1, 2, 3, 4}
PERMEABILITY_CELLS = 16
PERMEABILITY_SEED = 20240517


@dataclass(frozen=True)
class BenchmarkCase:
    """A fully specified test problem.

    ``boundary_mode`` is ``"dirichlet"`` when data is imposed on the whole
    boundary and ``"inflow"`` for pure transport, where only the inflow part
    carries data.
    """

    id: str
    domain: tuple[float, float, float, float]
    coefficients: ProblemCoefficients
    parameter: float | None
    exact: Callable | None
    boundary_mode: str

    @property
    def kappa(self):
        return self.coefficients.kappa

    @property
    def beta(self):
        return self.coefficients.beta

    @property
    def f(self):
        return self.coefficients.f

    @property
    def g(self):
        return self.coefficients.g


def _check_range(name: str, value: float, bounds: tuple[float, float]) -> float:
    value = float(value)
    lo, hi = bounds
    if not lo <= value <= hi:
        raise ValueError(f"{name}={value:g} outside the supported range [{lo:g}, {hi:g}]")
    return value


def _mixed_modes(x, y):
    return (np.sin(np.pi * x) + np.sin(13 * np.pi * x)
            + np.sin(np.pi * y) + np.sin(13 * np.pi * y))


def permeability_field(seed: int = PERMEABILITY_SEED, cells: int = PERMEABILITY_CELLS) -> np.ndarray:
    """Seeded cell values of the synthetic permeability, shape ``(cells, cells)``.

    Entry ``[j, i]`` covers the cell in column ``i`` and row ``j``.  Values
    are ``10**(4 b)`` with ``b`` drawn uniformly from ``{0, 1/4, 1/2, 3/4, 1}``;
    the four corner values are pinned so the field always spans exactly four
    orders of magnitude.
    """
    rng = np.random.default_rng(seed)
    b = rng.integers(0, 5, size=(cells, cells)) / 4.0
    b[0, 0], b[-1, -1] = 0.0, 1.0
    return 10.0 ** (4.0 * b)


def _permeability_closure(seed: int):
    field = permeability_field(seed)
    cells = field.shape[0]

    def kappa(x, y):
        i = np.clip(np.floor(np.asarray(x) * cells).astype(int), 0, cells - 1)
        j = np.clip(np.floor(np.asarray(y) * cells).astype(int), 0, cells - 1)
        return field[j, i]

    return kappa


def make_case(case_id: str, parameter: float | None = None, seed: int = PERMEABILITY_SEED) -> BenchmarkCase:
    """Build benchmark ``case_id``.

    ``parameter`` is the convection strength ``alpha`` for IV and VI and the
    diffusivity ``kappa`` for V; it is ignored elsewhere.  ``seed`` only
    affects the permeability field of case II.

    Raises
    ------
    ValueError
        For an unknown id or a parameter outside the supported range.
    """
    if case_id not in CASE_IDS:
        raise ValueError(f"unknown case {case_id!r}; choose from {', '.join(CASE_IDS)}")
    unit = (0.0, 1.0, 0.0, 1.0)
    pi = np.pi

    if case_id == "I":
        def exact(x, y):
            return np.sin(pi * x) * np.cos(pi * y) / pi**2

        def f(x, y):
            return 2.0 * np.sin(pi * x) * np.cos(pi * y)

        coeffs = ProblemCoefficients(kappa=1.0, f=f, g=exact)
        return BenchmarkCase("I", unit, coeffs, None, exact, "dirichlet")

    if case_id == "II":
        coeffs = ProblemCoefficients(kappa=_permeability_closure(seed), f=lambda x, y: np.ones_like(x),
                                     g=lambda x, y: np.zeros_like(x))
        return BenchmarkCase("II", unit, coeffs, None, None, "dirichlet")

    if case_id.startswith("III"):
        def beta(x, y):
            return 1.0 + np.sin(pi * y / 2.0), 2.0 * np.ones_like(y)

        square = (0.0, 2.0, 0.0, 2.0)
        if case_id == "III-shock":
            def g(x, y):
                x = np.asarray(x, dtype=float)
                y = np.asarray(y, dtype=float)
                bottom = np.where(x <= 1.0, np.sin(pi * x) ** 6, 0.0)
                return np.where(np.isclose(x, 0.0), 1.0, bottom) * np.ones_like(y)

            coeffs = ProblemCoefficients(kappa=0.0, beta=beta, f=lambda x, y: np.zeros_like(x), g=g)
            return BenchmarkCase(case_id, square, coeffs, None, None, "inflow")

        def exact(x, y):
            return np.sin(pi * x) * np.cos(pi * y) / pi

        def f(x, y):
            # div(beta u) = beta . grad u because beta is divergence free
            bx, by = beta(x, y)
            return bx * np.cos(pi * x) * np.cos(pi * y) - by * np.sin(pi * x) * np.sin(pi * y)

        coeffs = ProblemCoefficients(kappa=0.0, beta=beta, f=f, g=exact)
        return BenchmarkCase(case_id, square, coeffs, None, exact, "inflow")

    zero = lambda x, y: np.zeros_like(x)  # noqa: E731

    if case_id == "IV":
        alpha = _check_range("alpha", DEFAULT_PARAMETER["IV"] if parameter is None else parameter, ALPHA_RANGE)

        def beta(x, y):
            return -alpha * np.cos(4 * pi * y), -alpha * np.cos(4 * pi * x)

        def g(x, y):
            return np.cos(2 * y) * (1 - 2 * y) * np.ones_like(x)

        coeffs = ProblemCoefficients(kappa=1.0, beta=beta, f=zero, g=g)
        return BenchmarkCase("IV", unit, coeffs, alpha, None, "dirichlet")

    if case_id == "V":
        kappa = _check_range("kappa", DEFAULT_PARAMETER["V"] if parameter is None else parameter, KAPPA_RANGE)

        def beta(x, y):
            return (2 * y - 1) * (1 - x**2), 2 * x * y * (y - 1)

        coeffs = ProblemCoefficients(kappa=kappa, beta=beta, f=zero, g=_mixed_modes)
        return BenchmarkCase("V", unit, coeffs, kappa, None, "dirichlet")

    alpha = _check_range("alpha", DEFAULT_PARAMETER["VI"] if parameter is None else parameter, ALPHA_RANGE)

    def beta(x, y):
        return 4 * alpha * x * (x - 1) * (1 - 2 * y), -4 * alpha * y * (y - 1) * (1 - 2 * x)

    coeffs = ProblemCoefficients(kappa=1.0, beta=beta, f=zero, g=_mixed_modes)
    return BenchmarkCase("VI", unit, coeffs, alpha, None, "dirichlet")


def l2_error(case: BenchmarkCase, system: TraceSystem, lam: np.ndarray) -> float:
    """L2 norm of ``u_h - u_exact`` over the domain (NaN without an exact solution)."""
    if case.exact is None:
        return float("nan")
    vol = recover_volume(system, lam)
    p = system.p
    x, y, w, phi = volume_quadrature(system.mesh, p, p + 4)
    uh = vol.u @ phi.T
    return float(np.sqrt(np.sum(w * (uh - case.exact(x, y)) ** 2)))


def error_norms(case: BenchmarkCase, system: TraceSystem, lam: np.ndarray,
                lam_direct: np.ndarray | None = None) -> tuple[float, float]:
    """``(L2 error of u, max |lam_direct - lam|)``; either is NaN when unavailable."""
    l2 = l2_error(case, system, lam)
    if lam_direct is None:
        return l2, float("nan")
    return l2, float(np.max(np.abs(np.asarray(lam_direct) - np.asarray(lam)), initial=0.0))
