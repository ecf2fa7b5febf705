"""Independent reference computations used only by the tests.

Nothing here imports the propagation code under test; each oracle builds
its matrices from scratch with dense linear algebra.
"""
import math

import numpy as np
from scipy.linalg import expm


def stieltjes(nodes, weights, m):
    """Jacobi coefficients (a, b) of a discrete measure by the Stieltjes procedure."""
    x = np.asarray(nodes, float)
    w = np.asarray(weights, float)
    w = w / w.sum()
    a, b = [], []
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    b_prev = 0.0
    for _ in range(m):
        nrm = np.sum(w * p * p)
        ak = np.sum(w * x * p * p) / nrm
        a.append(ak)
        p_next = (x - ak) * p - b_prev * p_prev
        nrm_next = np.sum(w * p_next * p_next)
        bk = nrm_next / nrm
        b.append(math.sqrt(bk))
        p_prev, p, b_prev = p, p_next, bk
    return np.array(a), np.array(b)


def arrowhead(omegas, couplings, delta=0.0):
    """Dense single-excitation Tavis-Cummings matrix in the g^2-weighted mean frame."""
    w = np.asarray(omegas, float)
    g = np.asarray(couplings, float)
    wbar = np.sum(g * g * w) / np.sum(g * g)
    n = w.size
    H = np.zeros((n + 1, n + 1))
    H[0, 0] = delta
    H[np.arange(1, n + 1), np.arange(1, n + 1)] = w - wbar
    H[0, 1:] = g
    H[1:, 0] = g
    return H


def dense_survival(omegas, couplings, times, delta=0.0):
    H = arrowhead(omegas, couplings, delta)
    g = np.asarray(couplings, float)
    b = np.concatenate([[0.0], g / np.linalg.norm(g)])
    w, v = np.linalg.eigh(H)
    c = v.T @ b
    return np.array([np.sum(c * c * np.exp(-1j * w * t)) for t in times])


def chain_matrix(beta, delta=0.0, coupled=True):
    H = np.diag(beta, 1) + np.diag(beta, -1)
    H = H.astype(float)
    H[0, 0] = delta
    if not coupled:
        H[0, 1] = H[1, 0] = 0.0
    return H


def gaussian_beta(g, sigma, m):
    return np.concatenate([[g], sigma * np.sqrt(np.arange(1, m - 1))])


def segment_matrix(beta, delta):
    if math.isinf(delta):
        return chain_matrix(beta, 0.0, coupled=False)
    return chain_matrix(beta, delta)


def liouvillian(H, gamma):
    """Column-stacked superoperator of the sector master equation.

    H acts on {Phi_0..}; the sector adds |G> at index 0 and A = |G><Phi_0|.
    """
    m = H.shape[0]
    d = m + 1
    Hs = np.zeros((d, d), complex)
    Hs[1:, 1:] = H
    A = np.zeros((d, d))
    A[0, 1] = 1.0
    I = np.eye(d)
    AdA = A.T @ A
    L = -1j * (np.kron(I, Hs) - np.kron(Hs.T, I))
    L += gamma * (np.kron(A.conj(), A) - 0.5 * np.kron(I, AdA) - 0.5 * np.kron(AdA.T, I))
    return L


def lindblad_dense(beta, segments, gamma, rho0, n_periods):
    """Density matrices at the end of each period via exact superoperator exponentials."""
    d = rho0.shape[0]
    P = np.eye(d * d, dtype=complex)
    for dur, delta in segments:
        P = expm(liouvillian(segment_matrix(beta, delta), gamma) * dur) @ P
    vec = rho0.reshape(-1, order="F")
    out = [rho0]
    for _ in range(n_periods):
        vec = P @ vec
        out.append(vec.reshape(d, d, order="F"))
    return out


def unitary_dense(beta, segments, psi0, n_periods):
    U = np.eye(len(psi0), dtype=complex)
    for dur, delta in segments:
        U = expm(-1j * dur * segment_matrix(beta, delta)) @ U
    out = [psi0]
    psi = psi0
    for _ in range(n_periods):
        psi = U @ psi
        out.append(psi)
    return out


def magnus_first_order_quadrature(h_s, x_op, coupling, period, n_quad=20000):
    """(1 / 2iT^2) * int_0^T dt1 int_0^t1 dt2 [H(t1), H(t2)] by midpoint quadrature.

    H(t) = h_s + coupling(t) * x_op. The inner integral is carried as a
    running sum, so the cost is linear in ``n_quad``.
    """
    dt = period / n_quad
    ts = (np.arange(n_quad) + 0.5) * dt
    c = np.array([coupling(t) for t in ts])
    # [H(t1), S(t1)] with S(t1) = int_0^t1 H = t1 h_s + C(t1) x_op
    # = C(t1) [h_s, x] + c(t1) t1 [x, h_s]
    C = np.cumsum(c) * dt - 0.5 * c * dt
    comm = h_s @ x_op - x_op @ h_s
    weight = np.sum((C - c * ts) * dt)
    return weight * comm / (2j * period ** 2)


def trace_distance(a, b):
    w = np.linalg.eigvalsh(0.5 * ((a - b) + (a - b).conj().T))
    return 0.5 * float(np.sum(np.abs(w)))
