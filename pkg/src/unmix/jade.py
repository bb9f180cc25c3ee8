"""Instantaneous complex ICA at one frequency bin: whitening, cumulant
matrices and joint approximate diagonalization by complex Givens rotations.

Whitening happens after the cumulants are estimated from the raw spectra, so
that the cumulants can be tracked with a sliding window; they are then mapped
to the whitened coordinates by multilinearity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .stats import CumulantSet

RANK_EPS = 1e-12
MAX_SWEEPS = 100


class RankDeficientError(np.linalg.LinAlgError):
    """The mixture covariance is (numerically) singular."""


@dataclass
class WhiteningResult:
    W: np.ndarray
    R_X: np.ndarray
    eigenvalues: np.ndarray


@dataclass
class JointDiagonalization:
    U: np.ndarray
    sweeps: int
    converged: bool
    objective: list = field(default_factory=list)
    off_norm: float = 0.0


@dataclass
class MixingEstimate:
    H: np.ndarray
    U: np.ndarray
    W: np.ndarray
    diagnostics: dict


def whiten(R_X: np.ndarray, eps: float = RANK_EPS) -> WhiteningResult:
    """Whitening matrix ``W = Lambda^{-1/2} E'`` from ``R_X = E Lambda E'``.

    Eigenvectors are ordered to keep ``E`` as close to diagonal as possible and
    phased so that each diagonal entry of ``E`` is real positive, which makes
    ``W`` deterministic (``R_X = I`` gives ``W = I``).
    """
    R = np.asarray(R_X)
    R = 0.5 * (R + R.conj().T)
    lam, E = np.linalg.eigh(R)
    n = len(lam)
    top = lam.max()
    if not top > 0 or lam.min() <= eps * top:
        raise RankDeficientError(
            f"covariance is rank deficient: eigenvalues {lam.min():.3g} .. {top:.3g}"
        )
    if n <= 6:
        best = max(itertools.permutations(range(n)),
                   key=lambda p: sum(abs(E[i, p[i]]) for i in range(n)))
        order = list(best)
        lam, E = lam[order], E[:, order]
    d = np.diag(E).copy()
    d[np.abs(d) == 0] = 1.0
    E = E * (np.conj(d) / np.abs(d))[None, :]
    W = (E / np.sqrt(lam)[None, :]).conj().T
    return WhiteningResult(W, R, lam)


def transform_cumulants(c: CumulantSet, W: np.ndarray) -> CumulantSet:
    """Cumulants of ``Z = W y`` from those of ``y``.

    One factor of ``W`` enters per non-conjugated argument and ``conj(W)``
    per conjugated one, following ``Cum(y_i, y_j*, y_k*, y_l)``.
    """
    W = np.asarray(W)
    if W.shape[-2:] != (2, 2):
        raise ValueError(f"W must be 2x2, got {W.shape}")
    Wc = np.conj(W)
    K = np.einsum("...ai,...bj,...ck,...dl,...ijkl->...abcd", W, Wc, Wc, W, c.tensor())
    R = W @ c.R @ np.conj(np.swapaxes(W, -1, -2))
    return CumulantSet.from_tensor(R, K, c.n)


def cumulant_matrices(c: CumulantSet) -> np.ndarray:
    """Hermitian basis of the cumulant matrix set of whitened data.

    ``Q(e_l e_k')`` has entries ``Cum(Z_i, Z_j*, Z_k, Z_l*)``. Diagonal choices
    ``l = k`` are Hermitian already; each off-diagonal pair is replaced by
    ``(Q_lk + Q_kl)/sqrt2`` and ``1j (Q_lk - Q_kl)/sqrt2``, which span the same
    set and keep the basis orthonormal. Returns an ``(n*n, n, n)`` array.
    """
    K = c.tensor()
    n = K.shape[-1]
    base = {(l, k): K[..., :, :, l, k] for l in range(n) for k in range(n)}
    mats = [base[(l, l)] for l in range(n)]
    s = np.sqrt(0.5)
    for l in range(n):
        for k in range(l + 1, n):
            mats.append(s * (base[(l, k)] + base[(k, l)]))
            mats.append(1j * s * (base[(l, k)] - base[(k, l)]))
    out = np.stack(mats, axis=-3)
    return 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))


def _diag_energy(A):
    return float(np.sum(np.abs(np.diagonal(A, axis1=-2, axis2=-1)) ** 2))


def off_norm(A) -> float:
    n = A.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return float(np.sqrt(np.sum(np.abs(A[..., mask]) ** 2)))


def _phase_columns(U):
    idx = np.argmax(np.abs(U), axis=0)
    lead = U[idx, np.arange(U.shape[1])]
    return U * (np.conj(lead) / np.abs(lead))[None, :]


def joint_diagonalize(matrices, threshold: float = 1e-8,
                      max_sweeps: int = MAX_SWEEPS) -> JointDiagonalization:
    """Unitary ``U`` maximizing ``sum_r |diag(U' B_r U)|^2`` by Givens sweeps.

    Each pair ``(p, q)`` gets the closed-form complex Jacobi rotation of
    Cardoso and Souloumiac. Sweeps stop once every rotation sine is below
    ``threshold``; hitting ``max_sweeps`` returns the current ``U`` with
    ``converged=False``.
    """
    A = np.array(matrices, dtype=complex)
    if A.ndim == 2:
        A = A[np.newaxis]
    if A.shape[0] == 0:
        raise ValueError("need at least one matrix")
    herm_err = np.max(np.abs(A - np.conj(np.swapaxes(A, -1, -2))))
    if herm_err > 1e-8 * max(1.0, np.max(np.abs(A))):
        raise ValueError(f"matrices must be Hermitian (deviation {herm_err:.3g})")
    n = A.shape[-1]
    V = np.eye(n, dtype=complex)
    history = [_diag_energy(A)]
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        sweeps += 1
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                g = np.stack([
                    A[:, p, p] - A[:, q, q],
                    A[:, p, q] + A[:, q, p],
                    1j * (A[:, q, p] - A[:, p, q]),
                ]).real
                if not np.any(g[1:]):
                    continue
                _, vecs = np.linalg.eigh(g @ g.T)
                x, y, z = vecs[:, -1]
                if x < 0:
                    x, y, z = -x, -y, -z
                c = np.sqrt(0.5 + x / 2)
                s = 0.5 * (y - 1j * z) / c
                # sub-threshold rotations are still applied; only they do not
                # request another sweep
                if abs(s) > threshold:
                    rotated = True
                elif s == 0:
                    continue
                G = np.array([[c, -np.conj(s)], [s, c]])
                V[:, [p, q]] = V[:, [p, q]] @ G
                A[:, [p, q], :] = np.einsum("ab,rbk->rak", G.conj().T, A[:, [p, q], :])
                A[:, :, [p, q]] = np.einsum("rkb,ba->rka", A[:, :, [p, q]], G)
        history.append(_diag_energy(A))
        if not rotated:
            converged = True
            break
    U = _phase_columns(V)
    final = np.conj(U.T) @ np.array(matrices, dtype=complex).reshape(-1, n, n) @ U
    return JointDiagonalization(U, sweeps, converged, history, off_norm(final))


def estimate_mixing(c: CumulantSet, R: np.ndarray | None = None,
                    threshold: float | None = None) -> MixingEstimate:
    """Mixing matrix ``H = W^-1 U`` at one bin from raw-data cumulants.

    Sources are identifiable only if at most one of them has zero kurtosis;
    this cannot be checked exactly, so ``diagnostics['poorly_identified']``
    flags a large joint-diagonalization residual or near-zero estimated
    kurtoses.
    """
    R = c.R if R is None else R
    wr = whiten(R)
    cz = transform_cumulants(c, wr.W)
    mats = cumulant_matrices(cz)
    if threshold is None:
        threshold = 1e-8 / np.sqrt(max(c.n, 1))
    jd = joint_diagonalize(mats, threshold=threshold)
    U = jd.U
    H = np.linalg.solve(wr.W, U)

    total = float(np.sqrt(np.sum(np.abs(mats) ** 2)))
    off_ratio = jd.off_norm / total if total > 0 else 1.0
    Kz = cz.tensor()
    kurt = np.real(np.einsum("ip,jp,kp,lp,ijkl->p", np.conj(U), U, U, np.conj(U), Kz))
    floor = 5.0 / np.sqrt(max(c.n, 1))
    diagnostics = {
        "sweeps": jd.sweeps,
        "converged": jd.converged,
        "off_norm": jd.off_norm,
        "off_ratio": off_ratio,
        "kurtosis": kurt.tolist(),
        "poorly_identified": bool(off_ratio > 0.1 or np.min(np.abs(kurt)) < floor),
    }
    return MixingEstimate(H, U, wr.W, diagnostics)
