"""Discrete-time LQR via fixed-point Riccati iteration."""

from __future__ import annotations

import numpy as np

from .policy import LinearPolicy


class RiccatiError(RuntimeError):
    pass


def riccati_gain(A, B, Q, R, tol: float = 1e-9, max_iter: int = 10_000):
    """Iterate the discrete Riccati map to a fixed point; return (K, P).

    Raises :class:`RiccatiError` when the iteration diverges (unstabilizable
    pair) or fails to reach ``tol`` within ``max_iter`` sweeps.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise RiccatiError(f"incompatible shapes A{A.shape} B{B.shape}")
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        gain = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ (A - B @ gain)
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)) or np.max(np.abs(P_next)) > 1e14:
            raise RiccatiError("Riccati iteration diverged; (A, B) is likely "
                               "not stabilizable")
        if np.max(np.abs(P_next - P)) < tol:
            P = P_next
            BtP = B.T @ P
            K = np.linalg.solve(R + BtP @ B, BtP @ A)
            return K, P
        P = P_next
    raise RiccatiError(f"Riccati iteration did not converge in {max_iter} steps")


def make_lqr_policy(env, Q=None, R_cost=None, name: str = "lqr") -> LinearPolicy:
    """Origin-regulating LQR policy for an environment with linear dynamics."""
    if "A" not in env.metadata or "B" not in env.metadata:
        raise RiccatiError(f"environment {env.name!r} does not expose linear "
                           "dynamics matrices")
    A = np.asarray(env.metadata["A"], dtype=float)
    B = np.asarray(env.metadata["B"], dtype=float)
    if Q is None:
        Q = np.eye(env.state_dim)
    if R_cost is None:
        R_cost = np.eye(env.action_dim)
    K, _ = riccati_gain(A, B, Q, R_cost)
    return LinearPolicy(K, action_limit=env.action_limit, name=name)
