"""Diagonal splits ``Q = (Q - D) + D`` with ``Q - D`` negative semidefinite.

For binary ``x``, ``x'Qx = x'(Q - D)x + sum_i D_ii x_i``; the right-hand
side is concave in ``x``, which makes the box relaxation of the bound
problem a concave program.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LAMBDA_TOL = 1e-8
_CHOL_EPS = 1e-9
METHODS = ("gershgorin", "eig-shift", "sdp-lite")


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SplitVerification:
    lambda_max: float
    passed: bool
    trace: float


@dataclass(frozen=True, eq=False)
class SplitCertificate:
    D: np.ndarray
    method: str
    lambda_max: float
    trace: float

    @property
    def passed(self) -> bool:
        return self.lambda_max <= LAMBDA_TOL

    def to_dict(self) -> dict:
        return {"D": self.D.tolist(), "method": self.method,
                "lambda_max": self.lambda_max, "trace": self.trace}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitCertificate":
        return cls(np.asarray(d["D"], dtype=float), d["method"], float(d["lambda_max"]), float(d["trace"]))


def _check_symmetric(Q) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise SplitError("Q must be square")
    scale = max(1.0, float(np.abs(Q).max(initial=0.0)))
    if np.abs(Q - Q.T).max(initial=0.0) > 1e-10 * scale:
        raise SplitError("Q is not symmetric")
    return 0.5 * (Q + Q.T)


def verify_split(Q, D) -> SplitVerification:
    """Largest eigenvalue of ``Q - diag(D)``; passes when at most 1e-8."""
    Q = np.asarray(Q, dtype=float)
    D = np.asarray(D, dtype=float)
    if Q.shape != (D.size, D.size):
        raise SplitError("shape mismatch between Q and D")
    if D.size == 0:
        return SplitVerification(0.0, True, 0.0)
    lam = float(np.linalg.eigvalsh(0.5 * (Q + Q.T) - np.diag(D))[-1])
    return SplitVerification(lam, lam <= LAMBDA_TOL, float(D.sum()))


def _certificate(Q, D, method) -> SplitCertificate:
    v = verify_split(Q, D)
    return SplitCertificate(np.asarray(D, dtype=float), method, v.lambda_max, v.trace)


def gershgorin_split(Q) -> SplitCertificate:
    """Row absolute sums: ``Q - D`` is diagonally dominant with nonpositive diagonal."""
    Q = _check_symmetric(Q)
    return _certificate(Q, np.abs(Q).sum(axis=1), "gershgorin")


def eig_shift_split(Q) -> SplitCertificate:
    """``D = lambda_max(Q) I``, slightly inflated against eigensolver round-off."""
    Q = _check_symmetric(Q)
    n = Q.shape[0]
    if n == 0:
        return _certificate(Q, np.zeros(0), "eig-shift")
    try:
        lam = float(np.linalg.eigvalsh(Q)[-1])
    except np.linalg.LinAlgError as exc:
        raise SplitError(f"eigensolve failed: {exc}") from None
    lam = max(lam, 0.0)
    return _certificate(Q, np.full(n, lam + 1e-9 * (1.0 + lam)), "eig-shift")


def _is_pd(A) -> bool:
    try:
        np.linalg.cholesky(A)
        return True
    except np.linalg.LinAlgError:
        return False


def sdp_lite_split(Q, iter_budget: int = 20) -> SplitCertificate:
    """Reduce ``trace(D)`` by coordinate descent from the better seed.

    Each coordinate is lowered to the smallest value keeping
    ``D - Q + eps*I`` positive definite given the others (a Schur
    complement), and the step is kept only if a Cholesky factorization
    confirms it. ``iter_budget`` caps the number of sweeps. The result
    never has a larger trace than either seed.
    """
    Q = _check_symmetric(Q)
    n = Q.shape[0]
    seeds = [gershgorin_split(Q), eig_shift_split(Q)]
    seed = min((s for s in seeds if s.passed), key=lambda s: s.trace, default=seeds[1])
    if n == 0:
        return SplitCertificate(seed.D, "sdp-lite", seed.lambda_max, seed.trace)
    D = seed.D.copy()
    eye = _CHOL_EPS * np.eye(n)
    A = np.diag(D) - Q + eye
    if not _is_pd(A):
        return SplitCertificate(D, "sdp-lite", seed.lambda_max, seed.trace)
    per_step = n <= 400
    Ainv = np.linalg.inv(A)
    for _ in range(iter_budget):
        before = D.sum()
        D_sweep = D.copy()
        for i in range(n):
            h = Ainv[i, i]
            if h <= 0:
                continue
            # Schur complement of the other coordinates, from the full inverse
            others = np.arange(n) != i
            u = Ainv[others, i]
            Ainv_sub = Ainv[np.ix_(others, others)] - np.outer(u, u) / h
            q = Q[others, i]
            target = max(Q[i, i] + float(q @ Ainv_sub @ q), 0.0)
            if target >= D[i]:
                continue
            old = D[i]
            D[i] = target
            if per_step:
                A = np.diag(D) - Q + eye
                if _is_pd(A):
                    Ainv = np.linalg.inv(A)
                else:
                    D[i] = old
        if not per_step:
            A = np.diag(D) - Q + eye
            if not _is_pd(A):
                D = D_sweep
                break
            Ainv = np.linalg.inv(A)
        if before - D.sum() <= 1e-12 * max(before, 1e-300):
            break
    cert = _certificate(Q, D, "sdp-lite")
    if not cert.passed or cert.trace > seed.trace:
        return SplitCertificate(seed.D, "sdp-lite", seed.lambda_max, seed.trace)
    return cert


def compute_split(Q, method: str = "sdp-lite", **kw) -> SplitCertificate:
    if method == "gershgorin":
        return gershgorin_split(Q)
    if method == "eig-shift":
        return eig_shift_split(Q)
    if method == "sdp-lite":
        return sdp_lite_split(Q, **kw)
    raise SplitError(f"unknown split method {method!r}; expected one of {METHODS}")
