"""Upwind HDG discretisation of steady convection-diffusion on a structured
quadrilateral mesh.

The first-order system ``sigma = -K grad u``, ``div(sigma + beta u) = f`` is
discretised element by element with a tensor GLL nodal basis of ``Q^p``.  On
every face the numerical flux is

    (sigma_hat + beta_hat u) . n = sigma . n + (beta . n) u + tau (u - lambda)

with the upwind stabilisation ``tau = (sqrt((beta . n)^2 + 4) - beta . n) / 2``.
Eliminating the volume unknowns element by element leaves a linear system for
the trace ``lambda`` on the interior edges; Dirichlet data enters only the
right-hand side.

With ``K = 0`` (pure transport) ``sigma`` is dropped.  Inflow boundary edges
carry the projected boundary data, and on outflow boundary edges the trace is
condensed locally, which leaves the purely upwind flux ``(beta . n) u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .basis import edge_mass, gauss_legendre, gll_nodes, lagrange_deriv, lagrange_eval
from .mesh import FACE_NORMALS, StructuredMesh

# bytes budget for one batch of dense local matrices
_BATCH_BYTES = 48e6


class CondensationError(RuntimeError):
    """Raised when an element's local solver is singular."""


def stabilization_tau(beta_dot_n):
    """Upwind HDG stabilisation ``(sqrt(b^2 + 4) - b) / 2``.

    Evaluated in a cancellation-free form; strictly positive for all inputs.
    """
    b = np.asarray(beta_dot_n, dtype=float)
    root = np.sqrt(b * b + 4.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(b > 0, 2.0 / (root + b), 0.5 * (root - b))
    return tau if tau.ndim else float(tau)


@dataclass
class ProblemCoefficients:
    """Coefficients of ``-div(K grad u) + div(beta u) = f`` with ``u = g`` on the boundary.

    ``kappa`` may be a scalar, a per-element array of scalars or 2x2 tensors,
    or a callable ``kappa(x, y)`` evaluated at element centres.  ``kappa=0``
    selects the pure-transport mode.  ``beta``, ``f`` and ``g`` are callables
    of ``(x, y)``; ``beta`` returns a pair of arrays.  ``None`` means zero.
    """

    kappa: float | np.ndarray | Callable = 1.0
    beta: Callable | None = None
    f: Callable | None = None
    g: Callable | None = None

    @property
    def transport(self) -> bool:
        k = self.kappa
        return k is None or (np.isscalar(k) and k == 0)

    @property
    def mode(self) -> str:
        return "transport" if self.transport else "diffusive"

    def kappa_inverse(self, mesh: StructuredMesh) -> np.ndarray:
        """Per-element inverse permeability tensors, shape ``(n_el, 2, 2)``."""
        k = self.kappa
        if callable(k):
            c = mesh.element_centers()
            k = np.asarray(k(c[:, 0], c[:, 1]), dtype=float)
        k = np.asarray(k, dtype=float)
        ne = mesh.n_elements
        if k.ndim == 0:
            K = np.broadcast_to(k * np.eye(2), (ne, 2, 2))
        elif k.ndim == 1:
            K = k[:, None, None] * np.eye(2)
        else:
            K = k.reshape(ne, 2, 2)
        if K.shape[0] != ne:
            raise ValueError("permeability array does not match the mesh")
        # a symmetric 2x2 matrix is SPD iff its leading entry and determinant are positive
        sym = 0.5 * (K + np.swapaxes(K, 1, 2))
        det = sym[:, 0, 0] * sym[:, 1, 1] - sym[:, 0, 1] * sym[:, 1, 0]
        if np.any(sym[:, 0, 0] <= 0) or np.any(det <= 0):
            raise ValueError("permeability must be symmetric positive definite")
        return np.linalg.inv(K)

    def uniform(self) -> bool:
        """True when every element sees the same local operator."""
        return self.beta is None and not callable(self.kappa) and np.ndim(self.kappa) == 0


@lru_cache(maxsize=None)
def _reference(p: int, nq: int):
    """Reference-square tables for degree ``p`` and ``nq`` Gauss points per direction."""
    nodes = gll_nodes(p)
    xq, wq = gauss_legendre(nq)
    L = lagrange_eval(nodes, xq)
    D = lagrange_deriv(nodes, xq)
    lo = lagrange_eval(nodes, [-1.0])[0]
    hi = lagrange_eval(nodes, [1.0])[0]
    nb = (p + 1) ** 2
    phi = np.einsum("qa,rb->rqba", L, L).reshape(nq * nq, nb)
    dphi_x = np.einsum("qa,rb->rqba", D, L).reshape(nq * nq, nb)
    dphi_y = np.einsum("qa,rb->rqba", L, D).reshape(nq * nq, nb)
    wvol = np.outer(wq, wq).ravel()
    xi = np.tile(xq, nq)
    eta = np.repeat(xq, nq)
    face_phi = np.stack(
        (
            np.einsum("qa,b->qba", L, lo).reshape(nq, nb),
            np.einsum("a,qb->qba", hi, L).reshape(nq, nb),
            np.einsum("qa,b->qba", L, hi).reshape(nq, nb),
            np.einsum("a,qb->qba", lo, L).reshape(nq, nb),
        )
    )
    return dict(
        nodes=nodes, xq=xq, wq=wq, L=L, phi=phi, dphi_x=dphi_x, dphi_y=dphi_y,
        wvol=wvol, xi=xi, eta=eta, face_phi=face_phi, mu=L,
    )


def _face_points(origins: np.ndarray, h: float, s: np.ndarray) -> np.ndarray:
    """Physical quadrature points on the four faces, shape ``(ne, 4, nq, 2)``."""
    t = 0.5 * (s + 1.0) * h
    ne, nq = origins.shape[0], s.size
    pts = np.empty((ne, 4, nq, 2))
    x0, y0 = origins[:, 0:1], origins[:, 1:2]
    pts[:, 0, :, 0], pts[:, 0, :, 1] = x0 + t, y0
    pts[:, 1, :, 0], pts[:, 1, :, 1] = x0 + h, y0 + t
    pts[:, 2, :, 0], pts[:, 2, :, 1] = x0 + t, y0 + h
    pts[:, 3, :, 0], pts[:, 3, :, 1] = x0, y0 + t
    return pts


def _eval_beta(beta, x, y):
    if beta is None:
        z = np.zeros_like(x)
        return z, z
    bx, by = beta(x, y)
    return np.broadcast_to(bx, x.shape).astype(float), np.broadcast_to(by, x.shape).astype(float)


def _eval_scalar(func, x, y):
    if func is None:
        return np.zeros_like(x)
    return np.broadcast_to(func(x, y), x.shape).astype(float)


@dataclass
class _Batch:
    """Dense local operators for a batch of elements.

    ``L x = rhs - B lam`` is the local solver, and ``C x + Clam lam`` the
    face-flux functional tested against each trace basis function.
    """

    L: np.ndarray | None
    B: np.ndarray
    rhs: np.ndarray
    C: np.ndarray
    Clam: np.ndarray
    split: dict | None = None


def _load_vector(mesh, coeffs, p, elements, nq=None) -> np.ndarray:
    """``(f, w)`` for every volume test function, shape ``(ne, (p+1)^2)``."""
    nq = p + 2 if nq is None else nq
    ref = _reference(p, nq)
    jac = 0.5 * mesh.h
    origins = mesh.element_origins()[elements]
    xv = origins[:, 0:1] + (ref["xi"] + 1.0) * jac
    yv = origins[:, 1:2] + (ref["eta"] + 1.0) * jac
    return np.matmul(ref["wvol"] * jac**2 * _eval_scalar(coeffs.f, xv, yv), ref["phi"])


def _local_operators(mesh, coeffs, p, elements, outflow=None, nq=None, full=True) -> _Batch:
    """Local operators of a batch; ``full=False`` skips the dense diffusive ``L``."""
    nq = p + 2 if nq is None else nq
    ref = _reference(p, nq)
    h = mesh.h
    nb, nt = (p + 1) ** 2, p + 1
    ne = elements.size
    jac = 0.5 * h
    origins = mesh.element_origins()[elements]

    W = ref["wvol"] * jac**2
    phi = ref["phi"]
    dx = ref["dphi_x"] / jac
    dy = ref["dphi_y"] / jac
    xv = origins[:, 0:1] + (ref["xi"] + 1.0) * jac
    yv = origins[:, 1:2] + (ref["eta"] + 1.0) * jac

    fpts = _face_points(origins, h, ref["xq"])
    fbx, fby = _eval_beta(coeffs.beta, fpts[..., 0], fpts[..., 1])
    bn = fbx * FACE_NORMALS[:, 0][None, :, None] + fby * FACE_NORMALS[:, 1][None, :, None]
    tau = stabilization_tau(bn)
    wf = ref["wq"] * jac
    fphi = ref["face_phi"]
    mu = ref["mu"]
    if outflow is None:
        outflow = np.zeros((ne, 4), dtype=bool)

    # convection and face terms of the u-u block
    vbx, vby = _eval_beta(coeffs.beta, xv, yv)
    Auu = -np.matmul(np.swapaxes((W * vbx)[:, :, None] * dx[None], 1, 2), phi)
    Auu -= np.matmul(np.swapaxes((W * vby)[:, :, None] * dy[None], 1, 2), phi)
    coef_u = np.where(outflow[:, :, None], bn, bn + tau) * wf
    coef_l = np.where(outflow[:, :, None], 0.0, tau) * wf
    Aul = np.zeros((ne, nb, 4 * nt))
    Cu = np.zeros((ne, 4 * nt, nb))
    Cl = np.zeros((ne, 4 * nt, 4 * nt))
    for f in range(4):
        Auu += np.matmul(np.swapaxes(coef_u[:, f, :, None] * fphi[f][None], 1, 2), fphi[f])
        blk = slice(f * nt, (f + 1) * nt)
        Aul[:, :, blk] = -np.matmul(np.swapaxes(coef_l[:, f, :, None] * fphi[f][None], 1, 2), mu)
        Cu[:, blk, :] = np.matmul(np.swapaxes(coef_u[:, f, :, None] * mu[None], 1, 2), fphi[f])
        Cl[:, blk, blk] = -np.matmul(np.swapaxes(coef_l[:, f, :, None] * mu[None], 1, 2), mu)

    F = _load_vector(mesh, coeffs, p, elements, nq)

    if coeffs.transport:
        return _Batch(L=Auu, B=Aul, rhs=F, C=Cu, Clam=Cl)

    kinv = coeffs.kappa_inverse(mesh)[elements]
    M = (phi * W[:, None]).T @ phi
    Asu = np.vstack((-(dx * W[:, None]).T @ phi, -(dy * W[:, None]).T @ phi))
    Asl = np.zeros((2 * nb, 4 * nt))
    for f in range(4):
        blk = slice(f * nt, (f + 1) * nt)
        face = (fphi[f] * wf[:, None]).T @ mu
        Asl[:nb, blk] = FACE_NORMALS[f, 0] * face
        Asl[nb:, blk] = FACE_NORMALS[f, 1] * face
    if outflow.any():
        raise ValueError("outflow faces only arise in the pure-transport mode")

    L = None
    if full:
        n = 3 * nb
        L = np.empty((ne, n, n))
        L[:, : 2 * nb, : 2 * nb] = np.einsum("eab,IJ->eaIbJ", kinv, M).reshape(ne, 2 * nb, 2 * nb)
        L[:, : 2 * nb, 2 * nb :] = Asu
        L[:, 2 * nb :, : 2 * nb] = -Asu.T
        L[:, 2 * nb :, 2 * nb :] = Auu
    B = np.concatenate((np.broadcast_to(Asl, (ne,) + Asl.shape), Aul), axis=1)
    rhs = np.concatenate((np.zeros((ne, 2 * nb)), F), axis=1)
    C = np.concatenate((np.broadcast_to(Asl.T, (ne,) + Asl.T.shape), Cu), axis=2)
    # pieces for eliminating sigma analytically: the flux block is kinv (x) M
    # with kinv constant per element, so its inverse is K (x) M^{-1}
    Minv = np.linalg.inv(M)
    Ga = (Asu[:nb], Asu[nb:])
    Sl = (Asl[:nb], Asl[nb:])
    split = dict(
        K=np.linalg.inv(kinv), Minv=Minv, Asu=Asu, Asl=Asl, Auu=Auu, Aul=Aul, F=F,
        P=[[Ga[a].T @ Minv @ Ga[b] for b in range(2)] for a in range(2)],
        R=[[Ga[a].T @ Minv @ Sl[b] for b in range(2)] for a in range(2)],
    )
    return _Batch(L=L, B=B, rhs=rhs, C=C, Clam=Cl, split=split)


def _apply_flux_inverse(K: np.ndarray, Minv: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``(K (x) M^{-1}) Y`` for ``Y`` of shape ``(ne, 2 nb, k)``."""
    nb = Minv.shape[0]
    MY = np.matmul(Minv, Y.reshape(Y.shape[0], 2, nb, -1))
    Z = np.einsum("eab,ebik->eaik", K, MY)
    return Z.reshape(Y.shape)


def _solve_split(batch: _Batch, elements: np.ndarray):
    sp_ = batch.split
    K = sp_["K"]
    S = sp_["Auu"].copy()
    T = sp_["Aul"].copy()
    for a in range(2):
        for b in range(2):
            S += K[:, a, b, None, None] * sp_["P"][a][b]
            T += K[:, a, b, None, None] * sp_["R"][a][b]
    stacked = np.concatenate((T, sp_["F"][:, :, None]), axis=2)
    Xu = _guarded_solve(S, stacked, elements)
    Xul, Xuf = Xu[:, :, :-1], Xu[:, :, -1]
    Asu, Asl = sp_["Asu"], sp_["Asl"]
    Xsl = _apply_flux_inverse(K, sp_["Minv"], Asl[None] - np.matmul(Asu, Xul))
    Xsf = -_apply_flux_inverse(K, sp_["Minv"], np.matmul(Asu, Xuf[:, :, None]))[:, :, 0]
    return np.concatenate((Xsl, Xul), axis=1), np.concatenate((Xsf, Xuf), axis=1)


def _guarded_solve(L: np.ndarray, rhs: np.ndarray, elements: np.ndarray) -> np.ndarray:
    try:
        X = np.linalg.solve(L, rhs)
    except np.linalg.LinAlgError:
        X = None
    if X is None or not np.all(np.isfinite(X)):
        for i, e in enumerate(elements):
            try:
                xi = np.linalg.solve(L[i], rhs[i])
            except np.linalg.LinAlgError:
                xi = None
            if xi is None or not np.all(np.isfinite(xi)) or np.linalg.cond(L[i]) > 1e15:
                raise CondensationError(f"singular local solver on element {int(e)}")
        raise CondensationError("local solve failed")
    return X


def _solve_local(batch: _Batch, elements: np.ndarray):
    """Return ``X_lam = L^{-1} B`` and ``X_f = L^{-1} rhs`` for a batch."""
    if batch.split is not None:
        return _solve_split(batch, elements)
    stacked = np.concatenate((batch.B, batch.rhs[:, :, None]), axis=2)
    X = _guarded_solve(batch.L, stacked, elements)
    return X[:, :, :-1], X[:, :, -1]


@dataclass
class LocalElement:
    """Static-condensation data for one element.

    The volume fields are ``u = -u_lam @ lam + u_f`` and
    ``sigma = -sigma_lam @ lam + sigma_f`` where ``lam`` stacks the traces of
    the four faces (S, E, N, W), ``p + 1`` nodal values each.  ``A`` and ``g``
    are the element's contribution to the trace system.
    """

    element: int
    p: int
    u_lam: np.ndarray
    u_f: np.ndarray
    sigma_lam: np.ndarray | None
    sigma_f: np.ndarray | None
    A: np.ndarray
    g: np.ndarray


def condense_element(mesh: StructuredMesh, element: int, coeffs: ProblemCoefficients, p: int,
                     outflow=None) -> LocalElement:
    """Condense one element's volume unknowns onto its four face traces."""
    if p < 1:
        raise ValueError("polynomial degree must be at least 1")
    elems = np.array([element])
    of = None if outflow is None else np.asarray(outflow, dtype=bool).reshape(1, 4)
    batch = _local_operators(mesh, coeffs, p, elems, of)
    Xl, Xf = _solve_local(batch, elems)
    A = batch.Clam[0] - batch.C[0] @ Xl[0]
    g = -batch.C[0] @ Xf[0]
    nb = (p + 1) ** 2
    if coeffs.transport:
        return LocalElement(int(element), p, Xl[0], Xf[0], None, None, A, g)
    return LocalElement(
        int(element), p,
        u_lam=Xl[0, 2 * nb :], u_f=Xf[0, 2 * nb :],
        sigma_lam=Xl[0, : 2 * nb].reshape(2, nb, -1), sigma_f=Xf[0, : 2 * nb].reshape(2, nb),
        A=A, g=g,
    )


def project_boundary_data(mesh: StructuredMesh, func, p: int, edges: np.ndarray, nq=None) -> np.ndarray:
    """L2 projection of ``func`` onto ``Q^p`` of each listed edge, shape ``(len(edges), p+1)``."""
    nq = p + 2 if nq is None else nq
    xq, wq = gauss_legendre(nq)
    mu = lagrange_eval(gll_nodes(p), xq)
    vert, start = mesh.edge_geometry()
    t = 0.5 * (xq + 1.0) * mesh.h
    s = start[edges]
    v = vert[edges].astype(bool)[:, None]
    x = s[:, 0:1] + np.where(v, 0.0, t)
    y = s[:, 1:2] + np.where(v, t, 0.0)
    vals = _eval_scalar(func, x, y)
    rhs = (vals * wq) @ mu
    return np.linalg.solve(edge_mass(p), rhs.T).T


@dataclass
class TraceSystem:
    """Condensed trace system ``A lam = g`` on the unknown edges.

    Unknowns are ordered by edge (``unknown_edges``), ``p + 1`` nodal values
    per edge.  ``known_values`` holds the prescribed trace on Dirichlet or
    inflow edges; ``outflow`` flags element faces condensed locally.
    """

    mesh: StructuredMesh
    coeffs: ProblemCoefficients
    p: int
    A: sp.csr_matrix
    g: np.ndarray
    unknown_edges: np.ndarray
    known_edges: np.ndarray
    known_values: np.ndarray
    outflow: np.ndarray
    edge_index: np.ndarray = field(repr=False)

    @property
    def n_dofs(self) -> int:
        return self.g.size

    def full_trace(self, lam: np.ndarray) -> np.ndarray:
        """Trace on every mesh edge, shape ``(n_edges, p + 1)``; outflow edges are NaN."""
        nt = self.p + 1
        full = np.full((self.mesh.n_edges, nt), np.nan)
        full[self.unknown_edges] = np.asarray(lam).reshape(-1, nt)
        full[self.known_edges] = self.known_values
        return full


def _element_chunks(ne: int, nloc: int, ntr: int):
    per = max(1, int(_BATCH_BYTES // (8 * nloc * (nloc + ntr + 1) + 1)))
    for start in range(0, ne, per):
        yield np.arange(start, min(ne, start + per))


def _sum_pairwise(parts: list, n: int) -> sp.csr_matrix:
    # adding chunks one at a time re-copies the growing matrix every step
    if not parts:
        return sp.csr_matrix((n, n))
    while len(parts) > 1:
        parts = [parts[i] + parts[i + 1] if i + 1 < len(parts) else parts[i]
                 for i in range(0, len(parts), 2)]
    return parts[0]


def _outflow_faces(mesh, coeffs, boundary):
    """Element faces on the outflow part of the boundary (transport only)."""
    faces = mesh.element_faces()
    if not coeffs.transport:
        return np.zeros(faces.shape, dtype=bool), boundary
    vert, start = mesh.edge_geometry()
    mid = start + 0.5 * mesh.h * np.where(vert[:, None].astype(bool), [0.0, 1.0], [1.0, 0.0])
    bx, by = _eval_beta(coeffs.beta, mid[:, 0], mid[:, 1])
    outflow = np.zeros(faces.shape, dtype=bool)
    for f in range(4):
        bn = bx[faces[:, f]] * FACE_NORMALS[f, 0] + by[faces[:, f]] * FACE_NORMALS[f, 1]
        outflow[:, f] = boundary[faces[:, f]] & (bn > 0)
    out_edges = np.zeros(mesh.n_edges, dtype=bool)
    out_edges[faces[outflow]] = True
    return outflow, boundary & ~out_edges


def assemble_trace_system(mesh: StructuredMesh, coeffs: ProblemCoefficients, p: int) -> TraceSystem:
    """Condense every element and assemble the global trace system."""
    if p < 1:
        raise ValueError("polynomial degree must be at least 1")
    nt = p + 1
    faces = mesh.element_faces()
    boundary = mesh.boundary_mask()
    outflow, known = _outflow_faces(mesh, coeffs, boundary)
    unknown_edges = np.flatnonzero(~boundary)
    known_edges = np.flatnonzero(known)
    edge_index = -np.ones(mesh.n_edges, dtype=np.int64)
    edge_index[unknown_edges] = np.arange(unknown_edges.size)

    known_vals = project_boundary_data(mesh, coeffs.g, p, known_edges)
    known_full = np.zeros((mesh.n_edges, nt))
    known_full[known_edges] = known_vals

    n = unknown_edges.size * nt
    parts = []
    g = np.zeros(n)
    ldof = np.arange(nt)
    nloc = (1 if coeffs.transport else 3) * nt * nt

    uniform = coeffs.uniform() and not outflow.any()
    if uniform:
        batch = _local_operators(mesh, coeffs, p, np.array([0]))
        lu = sla.lu_factor(batch.L[0])
        Xl = sla.lu_solve(lu, batch.B[0])
        Ae = batch.Clam[0] - batch.C[0] @ Xl
        CLinv = sla.lu_solve(lu, batch.C[0].T, trans=1).T

    for chunk in _element_chunks(mesh.n_elements, nloc, 4 * nt):
        if uniform:
            F = _load_vector(mesh, coeffs, p, chunk)
            Ae_b = np.broadcast_to(Ae, (chunk.size,) + Ae.shape)
            ge_b = -F @ CLinv[:, -F.shape[1]:].T
        else:
            batch = _local_operators(mesh, coeffs, p, chunk, outflow[chunk], full=False)
            Xl, Xf = _solve_local(batch, chunk)
            Ae_b = batch.Clam - np.matmul(batch.C, Xl)
            ge_b = -np.einsum("eij,ej->ei", batch.C, Xf)
        # local trace dof -> global unknown dof (or -1) and known value
        fe = faces[chunk]
        gdof = (edge_index[fe][:, :, None] * nt + ldof).reshape(chunk.size, 4 * nt)
        gdof[np.repeat(edge_index[fe] < 0, nt, axis=1)] = -1
        lam_known = known_full[fe].reshape(chunk.size, 4 * nt)
        rhs = ge_b - np.einsum("eij,ej->ei", Ae_b, lam_known)
        mask = gdof >= 0
        g += np.bincount(gdof[mask], weights=rhs[mask], minlength=n)
        rows = np.broadcast_to(gdof[:, :, None], Ae_b.shape)
        cols = np.broadcast_to(gdof[:, None, :], Ae_b.shape)
        keep = (rows >= 0) & (cols >= 0)
        parts.append(sp.csr_matrix((Ae_b[keep], (rows[keep], cols[keep])), shape=(n, n)))

    A = _sum_pairwise(parts, n)
    A.sum_duplicates()
    A.sort_indices()
    return TraceSystem(
        mesh=mesh, coeffs=coeffs, p=p, A=A.tocsr(), g=g,
        unknown_edges=unknown_edges, known_edges=known_edges, known_values=known_vals,
        outflow=outflow, edge_index=edge_index,
    )


@dataclass
class VolumeSolution:
    """Nodal volume fields per element; ``sigma`` is None in transport mode."""

    p: int
    u: np.ndarray
    sigma: np.ndarray | None


def recover_volume(system: TraceSystem, lam: np.ndarray) -> VolumeSolution:
    """Recover ``(u, sigma)`` on every element from the trace solution."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (system.n_dofs,):
        raise ValueError(f"trace vector has shape {lam.shape}, expected ({system.n_dofs},)")
    mesh, coeffs, p = system.mesh, system.coeffs, system.p
    nt, nb = p + 1, (p + 1) ** 2
    full = np.nan_to_num(system.full_trace(lam))
    faces = mesh.element_faces()
    ne = mesh.n_elements
    u = np.empty((ne, nb))
    sigma = None if coeffs.transport else np.empty((ne, 2, nb))
    nloc = (1 if coeffs.transport else 3) * nb
    for chunk in _element_chunks(ne, nloc, 4 * nt):
        batch = _local_operators(mesh, coeffs, p, chunk, system.outflow[chunk], full=False)
        Xl, Xf = _solve_local(batch, chunk)
        lam_loc = full[faces[chunk]].reshape(chunk.size, 4 * nt)
        x = Xf - np.einsum("eij,ej->ei", Xl, lam_loc)
        if coeffs.transport:
            u[chunk] = x
        else:
            u[chunk] = x[:, 2 * nb :]
            sigma[chunk] = x[:, : 2 * nb].reshape(chunk.size, 2, nb)
    return VolumeSolution(p, u, sigma)


def local_residuals(system: TraceSystem, lam: np.ndarray, vol: VolumeSolution) -> np.ndarray:
    """Relative residual of the local equations on each element."""
    mesh, coeffs, p = system.mesh, system.coeffs, system.p
    nt = p + 1
    full = np.nan_to_num(system.full_trace(lam))
    faces = mesh.element_faces()
    out = np.empty(mesh.n_elements)
    nloc = (1 if coeffs.transport else 3) * nt * nt
    for chunk in _element_chunks(mesh.n_elements, nloc, 4 * nt):
        batch = _local_operators(mesh, coeffs, p, chunk, system.outflow[chunk])
        lam_loc = full[faces[chunk]].reshape(chunk.size, 4 * nt)
        x = vol.u[chunk] if coeffs.transport else np.concatenate(
            (vol.sigma[chunk].reshape(chunk.size, -1), vol.u[chunk]), axis=1)
        res = np.einsum("eij,ej->ei", batch.L, x) + np.einsum("eij,ej->ei", batch.B, lam_loc) - batch.rhs
        scale = (np.abs(np.einsum("eij,ej->ei", batch.L, x)).max(axis=1)
                 + np.abs(batch.rhs).max(axis=1) + 1e-300)
        out[chunk] = np.abs(res).max(axis=1) / scale
    return out


def flux_jumps(system: TraceSystem, lam: np.ndarray, vol: VolumeSolution) -> np.ndarray:
    """Conservation functional ``<[[flux . n]], mu>`` per unknown trace dof.

    Computed from the recovered volume fields, so it checks the whole
    condense-solve-recover chain rather than the assembled matrix.
    """
    mesh, coeffs, p = system.mesh, system.coeffs, system.p
    nt = p + 1
    full = np.nan_to_num(system.full_trace(lam))
    faces = mesh.element_faces()
    jump = np.zeros(system.n_dofs)
    nloc = (1 if coeffs.transport else 3) * nt * nt
    ldof = np.arange(nt)
    for chunk in _element_chunks(mesh.n_elements, nloc, 4 * nt):
        batch = _local_operators(mesh, coeffs, p, chunk, system.outflow[chunk])
        lam_loc = full[faces[chunk]].reshape(chunk.size, 4 * nt)
        x = vol.u[chunk] if coeffs.transport else np.concatenate(
            (vol.sigma[chunk].reshape(chunk.size, -1), vol.u[chunk]), axis=1)
        flux = np.einsum("eij,ej->ei", batch.C, x) + np.einsum("eij,ej->ei", batch.Clam, lam_loc)
        fe = faces[chunk]
        gdof = (system.edge_index[fe][:, :, None] * nt + ldof).reshape(chunk.size, 4 * nt)
        mask = np.repeat(system.edge_index[fe] >= 0, nt, axis=1)
        jump += np.bincount(gdof[mask], weights=flux[mask], minlength=jump.size)
    return jump


def volume_quadrature(mesh: StructuredMesh, p: int, nq: int):
    """Quadrature points, weights and basis values for error integrals.

    Returns ``(x, y, w, phi)`` with ``x, y, w`` of shape ``(n_el, nq^2)`` and
    ``phi`` of shape ``(nq^2, (p+1)^2)``.
    """
    ref = _reference(p, nq)
    jac = 0.5 * mesh.h
    o = mesh.element_origins()
    x = o[:, 0:1] + (ref["xi"] + 1.0) * jac
    y = o[:, 1:2] + (ref["eta"] + 1.0) * jac
    w = np.broadcast_to(ref["wvol"] * jac**2, x.shape)
    return x, y, w, ref["phi"]
