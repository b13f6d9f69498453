"""One-dimensional nodal bases and quadrature on the reference interval [-1, 1].

Everything two-dimensional in the package is a tensor product of these
pieces, so they are kept small and cached.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre


@lru_cache(maxsize=None)
def gll_nodes(p: int) -> np.ndarray:
    """Gauss-Lobatto-Legendre nodes for a degree ``p`` Lagrange basis.

    Returns ``p + 1`` sorted nodes including both end points.
    """
    if p < 0:
        raise ValueError("polynomial degree must be non-negative")
    if p == 0:
        return np.zeros(1)
    if p == 1:
        return np.array([-1.0, 1.0])
    # interior nodes are the roots of P_p'
    coeffs = np.zeros(p + 1)
    coeffs[-1] = 1.0
    interior = legendre.legroots(legendre.legder(coeffs))
    nodes = np.concatenate(([-1.0], np.sort(interior.real), [1.0]))
    nodes.setflags(write=False)
    return nodes


@lru_cache(maxsize=None)
def gauss_legendre(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights, exact for degree ``2 npts - 1``."""
    x, w = legendre.leggauss(npts)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / diff.prod(axis=1)


def lagrange_eval(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Values of the Lagrange polynomials on ``nodes`` at points ``x``.

    Returns an array of shape ``(len(x), len(nodes))``.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = nodes.size
    if n == 1:
        return np.ones((x.size, 1))
    w = _barycentric_weights(nodes)
    diff = x[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-14, rtol=0.0)
    diff[exact] = 1.0
    terms = w[None, :] / diff
    vals = terms / terms.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    if hit.any():
        vals[hit] = exact[hit].astype(float)
    return vals


def lagrange_deriv(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Derivatives of the Lagrange polynomials on ``nodes`` at ``x``.

    Uses the nodal differentiation matrix, so it is exact for any ``x``.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size
    if n == 1:
        return np.zeros((np.size(x), 1))
    w = _barycentric_weights(nodes)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = (w[j] / w[i]) / (nodes[i] - nodes[j])
        D[i, i] = -D[i].sum()
    # D[i, j] = l_j'(x_i); interpolate the derivative polynomials to x
    return lagrange_eval(nodes, x) @ D


@lru_cache(maxsize=None)
def edge_mass(p: int) -> np.ndarray:
    """Exact mass matrix of the degree ``p`` GLL basis on [-1, 1]."""
    xq, wq = gauss_legendre(p + 1)
    phi = lagrange_eval(gll_nodes(p), xq)
    M = (phi * wq[:, None]).T @ phi
    M.setflags(write=False)
    return M


def l2_project_1d(func, p: int, npts: int | None = None) -> np.ndarray:
    """Nodal coefficients of the L2 projection of ``func`` onto degree ``p``."""
    npts = p + 2 if npts is None else npts
    xq, wq = gauss_legendre(npts)
    phi = lagrange_eval(gll_nodes(p), xq)
    rhs = phi.T @ (wq * func(xq))
    return np.linalg.solve(edge_mass(p), rhs)
