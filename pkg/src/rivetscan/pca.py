"""Principal-component damage fingerprints, computed from scratch.

Log-magnitude FRFs are compressed channel by channel: each measurement
channel gets its own basis of covariance eigenvectors, fitted on the
training split only, and a fingerprint is the concatenation of every
channel's leading projections (default 12 accelerance channels x 7
components + 4 strain channels x 4 components = 100 entries).

The eigensolvers here are deliberately self-contained: cyclic Jacobi
rotations for small matrices, Householder tridiagonalization plus
implicit-shift QL for larger ones. No library eigenroutine is involved
anywhere in the fingerprint path.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .signals import FrfMatrix

JACOBI_MAX_DIM = 48
JACOBI_MAX_SWEEPS = 100
DEFAULT_REL_FLOOR = 1e-6


class PcaError(ValueError):
    """Contract violation in fingerprint extraction."""


def covariance(data: np.ndarray) -> np.ndarray:
    """Sample covariance of row observations, divisor n - 1."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise PcaError(f"need a 2-D matrix with >= 2 samples, got shape {data.shape}")
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered / (data.shape[0] - 1)
    return (cov + cov.T) / 2.0


def _jacobi(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi rotations; returns (eigenvalues, eigenvector columns).

    Convergence: off-diagonal Frobenius norm below 1e-12 times the input
    norm, capped at 100 sweeps.
    """
    a = a.copy()
    n = a.shape[0]
    v = np.eye(n)
    norm0 = float(np.linalg.norm(a))
    if norm0 == 0.0:
        return np.zeros(n), v
    for _ in range(JACOBI_MAX_SWEEPS):
        off = a - np.diag(np.diag(a))
        if float(np.linalg.norm(off)) < 1e-12 * norm0:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    raise PcaError(f"Jacobi sweep cap ({JACOBI_MAX_SWEEPS}) exceeded")


def _tridiagonalize(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Householder reduction A = Q T Q^T; returns (diag, subdiag, Q)."""
    t = a.copy()
    n = t.shape[0]
    q = np.eye(n)
    for k in range(n - 2):
        x = t[k + 1:, k]
        norm_x = float(np.linalg.norm(x))
        if norm_x == 0.0:
            continue
        v = x.copy()
        v[0] += np.sign(x[0]) * norm_x if x[0] != 0 else norm_x
        vnorm = float(np.linalg.norm(v))
        if vnorm == 0.0:
            continue
        v /= vnorm
        t[k + 1:, :] -= 2.0 * np.outer(v, v @ t[k + 1:, :])
        t[:, k + 1:] -= 2.0 * np.outer(t[:, k + 1:] @ v, v)
        q[:, k + 1:] -= 2.0 * np.outer(q[:, k + 1:] @ v, v)
    d = np.diag(t).copy()
    e = np.zeros(n)
    if n > 1:
        e[1:] = np.diag(t, -1)
    return d, e, q


def _tql2(d: np.ndarray, e: np.ndarray, z: np.ndarray,
          max_iter: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Implicit-shift QL iteration on a symmetric tridiagonal matrix.

    ``d`` diagonal, ``e`` subdiagonal (e[0] unused), ``z`` the accumulated
    orthogonal transform; follows the classic EISPACK/JAMA recurrence.
    """
    n = d.size
    d = d.copy()
    e = np.roll(e.copy(), -1)
    e[n - 1] = 0.0
    eps = np.finfo(np.float64).eps
    f = 0.0
    tst1 = 0.0
    for l in range(n):
        tst1 = max(tst1, abs(d[l]) + abs(e[l]))
        m = l
        while m < n:
            if abs(e[m]) <= eps * tst1:
                break
            m += 1
        if m > l:
            for iteration in range(max_iter + 1):
                if iteration == max_iter:
                    raise PcaError("QL iteration cap exceeded")
                g = d[l]
                p = (d[l + 1] - g) / (2.0 * e[l])
                r = np.hypot(p, 1.0)
                if p < 0:
                    r = -r
                d[l] = e[l] / (p + r)
                d[l + 1] = e[l] * (p + r)
                dl1 = d[l + 1]
                h = g - d[l]
                d[l + 2:] -= h
                f += h
                p = d[m]
                c = c2 = c3 = 1.0
                el1 = e[l + 1]
                s = s2 = 0.0
                for i in range(m - 1, l - 1, -1):
                    c3, c2, s2 = c2, c, s
                    g = c * e[i]
                    h = c * p
                    r = np.hypot(p, e[i])
                    e[i + 1] = s * r
                    s = e[i] / r
                    c = p / r
                    p = c * d[i] - s * g
                    d[i + 1] = h + s * (c * g + s * d[i])
                    zi = z[:, i].copy()
                    z[:, i] = c * zi - s * z[:, i + 1]
                    z[:, i + 1] = s * zi + c * z[:, i + 1]
                p = -s * s2 * c3 * el1 * e[l] / dl1
                e[l] = s * p
                d[l] = c * p
                if abs(e[l]) <= eps * tst1:
                    break
        d[l] += f
        e[l] = 0.0
    return d, z


def eig_sym(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues descending, eigenvector columns). Column signs
    follow a fixed convention: the largest-magnitude entry of each vector
    is positive, so repeated fits reproduce identical bases. Small
    matrices go through cyclic Jacobi, larger ones through Householder +
    implicit-shift QL; either path satisfies |A v - lambda v| < 1e-8 |A|.
    """
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise PcaError(f"matrix must be square, got shape {a.shape}")
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if np.max(np.abs(a - a.T)) > 1e-10 * max(scale, 1e-300):
        raise PcaError("matrix is not symmetric")
    a = (a + a.T) / 2.0
    if a.shape[0] <= JACOBI_MAX_DIM:
        lam, vec = _jacobi(a)
    else:
        d, e, q = _tridiagonalize(a)
        lam, vec = _tql2(d, e, q)
    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    vec = vec[:, order]
    anchor = np.argmax(np.abs(vec), axis=0)
    signs = np.sign(vec[anchor, np.arange(vec.shape[1])])
    signs[signs == 0] = 1.0
    return lam, vec * signs


@dataclass(frozen=True)
class ChannelPca:
    """Covariance eigenbasis of one channel's log-magnitude features."""
    mean: np.ndarray           # (n_features,)
    components: np.ndarray     # (n_features, n_keep), orthonormal columns
    eigenvalues: np.ndarray    # descending, full resolvable spectrum
    total_variance: float
    floor: float               # magnitude floor applied before log10
    degenerate: bool


@dataclass(frozen=True)
class PcaBasis:
    """Per-channel PCA bases for one channel block of the FRF matrix."""
    block: str
    channel_indices: tuple[int, ...]
    channels: tuple[ChannelPca, ...]
    n_keep: int
    basis_id: str

    @property
    def degenerate(self) -> bool:
        return any(ch.degenerate for ch in self.channels)

    @property
    def n_features_out(self) -> int:
        return self.n_keep * len(self.channels)


@dataclass(frozen=True)
class FeatureVector:
    """Fixed-length damage fingerprint: accelerance projections first,
    strain projections last."""
    values: np.ndarray
    basis_id: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise PcaError("feature vector must be 1-D")
        if not np.all(np.isfinite(values)):
            raise PcaError("feature vector has non-finite entries")


def log_magnitude(rows: np.ndarray, floor: float) -> np.ndarray:
    """Feature transform: log10 of FRF magnitude, floored to keep the
    out-of-band and exact-zero bins finite."""
    return np.log10(np.maximum(np.abs(rows), floor))


def _fit_channel(features: np.ndarray, n_keep: int, floor: float) -> ChannelPca:
    n, p = features.shape
    mean = features.mean(axis=0)
    centered = features - mean
    rank_tol = 1e-12

    if n - 1 >= p:
        lam, vec = eig_sym(covariance(features))
        lam = np.clip(lam, 0.0, None)
    else:
        # snapshot route: the n x n Gram matrix shares the covariance's
        # nonzero spectrum; feature-space components follow by projection
        gram = centered @ centered.T / (n - 1)
        lam, u = _eig_gram(gram)
        cols = []
        lam_pos = []
        for i in range(lam.size):
            if lam[i] > rank_tol * max(lam[0], 1e-300):
                w = centered.T @ u[:, i]
                norm_w = float(np.linalg.norm(w))
                if norm_w > 0:
                    cols.append(w / norm_w)
                    lam_pos.append(lam[i])
        if cols:
            vec = np.stack(cols, axis=1)
            anchor = np.argmax(np.abs(vec), axis=0)
            signs = np.sign(vec[anchor, np.arange(vec.shape[1])])
            signs[signs == 0] = 1.0
            vec = vec * signs
        else:
            vec = np.zeros((p, 0))
        lam = np.array(lam_pos + [0.0] * (lam.size - len(lam_pos)))

    total = float(np.sum(lam))
    degenerate = total <= rank_tol
    kept = vec[:, :n_keep]
    if kept.shape[1] < n_keep:
        kept = _pad_orthonormal(kept, n_keep)
    return ChannelPca(mean=mean, components=kept, eigenvalues=lam,
                      total_variance=total, floor=floor, degenerate=degenerate)


def _eig_gram(gram: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lam, u = eig_sym(gram)
    return np.clip(lam, 0.0, None), u


def _pad_orthonormal(cols: np.ndarray, n_keep: int) -> np.ndarray:
    """Deterministically extend a rank-deficient basis to n_keep columns."""
    p = cols.shape[0]
    out = [cols[:, i] for i in range(cols.shape[1])]
    for j in range(p):
        if len(out) == n_keep:
            break
        cand = np.zeros(p)
        cand[j] = 1.0
        for b in out:
            cand -= (b @ cand) * b
        norm = float(np.linalg.norm(cand))
        if norm > 1e-8:
            out.append(cand / norm)
    return np.stack(out, axis=1)


def fit_basis(training_frfs: list[FrfMatrix], block: str, n_keep: int,
              rel_floor: float = DEFAULT_REL_FLOOR) -> PcaBasis:
    """Fit per-channel component bases for one block on training FRFs only.

    The magnitude floor is resolved per channel as ``rel_floor`` times the
    channel's maximum training magnitude and is stored with the basis, so
    projection applies the identical transform later.
    """
    if len(training_frfs) < 2:
        raise PcaError("need at least 2 training FRFs")
    first = training_frfs[0]
    channel_indices = tuple(i for i, k in enumerate(first.channel_kinds) if k == block)
    if not channel_indices:
        raise PcaError(f"no channels of kind {block!r} in the FRF matrix")
    if not 1 <= n_keep <= first.n_bins:
        raise PcaError(f"n_keep {n_keep} outside [1, {first.n_bins}]")
    for frf in training_frfs:
        if frf.values.shape != first.values.shape or frf.channel_kinds != first.channel_kinds:
            raise PcaError("training FRFs must share shape and channel kinds")

    channels = []
    for ch in channel_indices:
        rows = np.stack([frf.values[ch] for frf in training_frfs])
        peak = float(np.max(np.abs(rows)))
        floor = max(rel_floor * peak, 1e-300)
        channels.append(_fit_channel(log_magnitude(rows, floor), n_keep, floor))

    digest = hashlib.sha256()
    digest.update(json.dumps({"block": block, "n_keep": n_keep,
                              "channels": list(channel_indices)},
                             sort_keys=True).encode())
    for ch in channels:
        digest.update(ch.mean.tobytes())
        digest.update(ch.components.tobytes())
        digest.update(np.float64(ch.floor).tobytes())
    return PcaBasis(block=block, channel_indices=channel_indices,
                    channels=tuple(channels), n_keep=n_keep,
                    basis_id=digest.hexdigest())


def combine_basis_ids(accel_id: str, strain_id: str) -> str:
    """Identifier of a basis pair, recorded on fingerprints and models."""
    return hashlib.sha256(f"{accel_id}:{strain_id}".encode()).hexdigest()


def project_block(frf: FrfMatrix, basis: PcaBasis) -> np.ndarray:
    if max(basis.channel_indices) >= frf.n_channels:
        raise PcaError("FRF has fewer channels than the basis expects")
    parts = []
    for idx, ch in zip(basis.channel_indices, basis.channels):
        if frf.values.shape[1] != ch.mean.size:
            raise PcaError(
                f"FRF bin count {frf.values.shape[1]} does not match basis "
                f"feature dimension {ch.mean.size}")
        feats = log_magnitude(frf.values[idx], ch.floor)
        parts.append((feats - ch.mean) @ ch.components)
    return np.concatenate(parts)


def project(frf: FrfMatrix, accel_basis: PcaBasis, strain_basis: PcaBasis) -> FeatureVector:
    """Fingerprint of one FRF matrix: accelerance projections then strain."""
    if accel_basis.block != "accelerance" or strain_basis.block != "strain":
        raise PcaError("basis blocks passed in the wrong order")
    values = np.concatenate([project_block(frf, accel_basis),
                             project_block(frf, strain_basis)])
    return FeatureVector(values=values,
                         basis_id=combine_basis_ids(accel_basis.basis_id,
                                                    strain_basis.basis_id))


def variance_explained(basis: PcaBasis | ChannelPca, k: int) -> float:
    """Fraction of training variance captured by the first k components.

    For a block basis the fraction aggregates over its channels. Monotone
    non-decreasing in k; defined as 1 for a degenerate (zero-variance) fit.
    """
    channels = basis.channels if isinstance(basis, PcaBasis) else (basis,)
    num = 0.0
    den = 0.0
    for ch in channels:
        if k > ch.eigenvalues.size:
            raise PcaError(f"k {k} exceeds stored eigenvalue count {ch.eigenvalues.size}")
        num += float(np.sum(ch.eigenvalues[:k]))
        den += ch.total_variance
    if den <= 0.0:
        return 1.0
    return num / den


def variance_explained_per_channel(basis: PcaBasis, k: int) -> np.ndarray:
    """Per-channel cumulative variance fractions at k components."""
    return np.array([variance_explained(ch, k) for ch in basis.channels])
