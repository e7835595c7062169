"""Closed-form oscillatory integrals over the unit square and the unit triangle.

All functions are vectorized over numpy arrays of real phases and stay
accurate near the removable singularities at vanishing phase.
"""
from __future__ import annotations

from math import comb, factorial

import numpy as np
from scipy.linalg import expm

SMALL_PHASE = 1e-4


def phase_mean(g):
    """``E(g) = int_0^1 exp(i g s) ds = (exp(i g) - 1) / (i g)``."""
    g = np.asarray(g, dtype=float)
    out = np.empty(g.shape, dtype=complex)
    small = np.abs(g) < SMALL_PHASE
    gs = g[small]
    ig = 1j * gs
    # five Taylor terms: the truncation error is below 1e-21 at |g| < 1e-4
    out[small] = 1 + ig / 2 + ig**2 / 6 + ig**3 / 24 + ig**4 / 120
    gl = g[~small]
    out[~small] = np.expm1(1j * gl) / (1j * gl)
    return out


def power_moment(p: int, a):
    """``M_p(a) = int_0^1 s^p exp(i a s) ds`` for a nonnegative integer ``p``."""
    a = np.asarray(a, dtype=float)
    out = np.empty(a.shape, dtype=complex)
    near = np.abs(a) <= p + 2.0
    an = a[near]
    # power series: sum_j (i a)^j / (j! (p + j + 1)); 60 terms cover |a| <= p + 2 for p <= 8
    term = np.ones(an.shape, dtype=complex)
    acc = term / (p + 1)
    for j in range(1, 60):
        term = term * (1j * an) / j
        acc = acc + term / (p + j + 1)
    out[near] = acc
    af = a[~near]
    if af.size:
        # upward recurrence is stable for |a| > p
        m = phase_mean(af)
        e = np.exp(1j * af)
        for q in range(1, p + 1):
            m = (e - q * m) / (1j * af)
        out[~near] = m
    return out


def square_weight(alpha, beta):
    """``J(alpha, beta) = int_0^1 ds s int_0^1 dt exp(i(s alpha + s t beta))``."""
    alpha, beta = np.broadcast_arrays(np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float))
    out = np.empty(alpha.shape, dtype=complex)
    small = np.abs(beta) < SMALL_PHASE
    ab, bb = alpha[~small], beta[~small]
    out[~small] = (phase_mean(ab + bb) - phase_mean(ab)) / (1j * bb)
    a_s, b_s = alpha[small], beta[small]
    acc = np.zeros(a_s.shape, dtype=complex)
    for k in range(6):
        acc = acc + (1j * b_s) ** k / factorial(k + 1) * power_moment(k + 1, a_s)
    out[small] = acc
    return out


def exp_divided_difference(nodes):
    """Divided difference of ``exp`` on repeated nodes.

    Parameters
    ----------
    nodes : (..., r) complex array
        Nodes in order; repeated values are allowed.

    Returns
    -------
    (...) complex array
        ``exp[z_0, ..., z_{r-1}]``, read off the top-right entry of the
        exponential of the bidiagonal matrix with the nodes on the diagonal.
    """
    nodes = np.asarray(nodes, dtype=complex)
    r = nodes.shape[-1]
    batch = nodes.shape[:-1]
    mat = np.zeros(batch + (r, r), dtype=complex)
    idx = np.arange(r)
    mat[..., idx, idx] = nodes
    mat[..., idx[:-1], idx[1:]] = 1.0
    flat = mat.reshape((-1, r, r))
    if flat.shape[0] == 0:
        return np.zeros(batch, dtype=complex)
    return expm(flat)[:, 0, r - 1].reshape(batch)


def _simplex_moment(b1: int, b2: int, z1, z2):
    """``int lambda_1^b1 lambda_2^b2 exp(lambda_1 z1 + lambda_2 z2)`` over the unit 2-simplex."""
    z1, z2 = np.broadcast_arrays(np.asarray(z1, dtype=complex), np.asarray(z2, dtype=complex))
    nodes = np.concatenate(
        [np.zeros(z1.shape + (1,), dtype=complex),
         np.repeat(z1[..., None], 1 + b1, axis=-1),
         np.repeat(z2[..., None], 1 + b2, axis=-1)], axis=-1)
    return factorial(b1) * factorial(b2) * exp_divided_difference(nodes)


def triangle_moment(p: int, q: int, A, B):
    """``T(p, q) = int_{0 <= s <= t <= 1} s^p t^q exp(i(A s + B t)) ds dt``.

    With ``s = l2`` and ``t = l1 + l2`` the triangle becomes the standard
    simplex and the exponent ``l1 (iB) + l2 (i(A + B))``.
    """
    A, B = np.broadcast_arrays(np.asarray(A, dtype=float), np.asarray(B, dtype=float))
    z1 = 1j * B
    z2 = 1j * (A + B)
    total = np.zeros(A.shape, dtype=complex)
    for r in range(q + 1):
        total = total + comb(q, r) * _simplex_moment(r, p + q - r, z1, z2)
    return total


def triangle_phase_derivatives(order: int, a, b, c, eps):
    """``int_T (i(s a + t b + c))^order exp(i eps (s a + t b + c)) ds dt`` over ``0 <= s <= t <= 1``.

    This is the ``order``-th derivative in ``eps`` of the triangle average of
    ``exp(i eps (s a + t b + c))``.
    """
    a, b, c = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(c, float))
    A, B = eps * a, eps * b
    pref = np.exp(1j * eps * c)
    if order == 0:
        return pref * triangle_moment(0, 0, A, B)
    if order == 1:
        val = a * triangle_moment(1, 0, A, B) + b * triangle_moment(0, 1, A, B) \
            + c * triangle_moment(0, 0, A, B)
        return 1j * pref * val
    if order == 2:
        val = (a**2 * triangle_moment(2, 0, A, B) + b**2 * triangle_moment(0, 2, A, B)
               + 2 * a * b * triangle_moment(1, 1, A, B)
               + 2 * a * c * triangle_moment(1, 0, A, B) + 2 * b * c * triangle_moment(0, 1, A, B)
               + c**2 * triangle_moment(0, 0, A, B))
        return -pref * val
    raise ValueError("order must be 0, 1 or 2")
