"""Exact covariances of the pinned discrete Gaussian field by dense linear algebra.

For the quadratic potential the finite-volume measure is Gaussian with
precision ``beta * L`` on interior heights, ``L`` the Dirichlet Laplacian.
Everything here is a direct solve, independent of the samplers.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .lattice import LatticeDomain, dirichlet_laplacian


def height_covariance(dom: LatticeDomain, beta: float = 1.0) -> np.ndarray:
    """Covariance of θ on interior vertices (order of ``dom.interior_indices``)."""
    L = dirichlet_laplacian(dom)
    return cho_solve(cho_factor(L), np.eye(len(L))) / beta


def edge_incidence(dom: LatticeDomain) -> np.ndarray:
    """(m, n_interior) map from interior heights to canonical η."""
    inner = dom.interior_indices
    pos = -np.ones(dom.n_vertices, dtype=np.int64)
    pos[inner] = np.arange(len(inner))
    D = np.zeros((dom.n_edges, len(inner)))
    for b, (t, h) in enumerate(zip(dom.tail, dom.head)):
        if pos[h] >= 0:
            D[b, pos[h]] += 1.0
        if pos[t] >= 0:
            D[b, pos[t]] -= 1.0
    return D


def edge_covariance(dom: LatticeDomain, beta: float = 1.0) -> np.ndarray:
    """Covariance of η on canonical edges."""
    D = edge_incidence(dom)
    return D @ height_covariance(dom, beta) @ D.T


def pairing_variance(dom: LatticeDomain, grad_phi: np.ndarray) -> float:
    """Var of Σ_b w(b) η̃(b) for weights ``w`` on canonical edges (β-free)."""
    D = edge_incidence(dom)
    L = dirichlet_laplacian(dom)
    v = D.T @ grad_phi
    return float(v @ cho_solve(cho_factor(L), v))
