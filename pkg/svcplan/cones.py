"""
Vectorized operations on a product cone R+^l x SOC x ... x SOC.

Slack vectors are laid out as [nonnegative part | SOC blocks]; SOC blocks of
equal size are processed together as rows of a 2-D array.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp


class ConeLayout:
    def __init__(self, n_nonneg: int, soc_sizes: Sequence[int]):
        self.n_nonneg = int(n_nonneg)
        self.soc_sizes = tuple(int(m) for m in soc_sizes)
        self.dim = self.n_nonneg + sum(self.soc_sizes)
        starts = np.cumsum((self.n_nonneg,) + self.soc_sizes[:-1]) if self.soc_sizes else np.zeros(0, int)
        groups: dict[int, list[int]] = {}
        for start, size in zip(starts, self.soc_sizes):
            groups.setdefault(size, []).append(int(start))
        # size -> (blocks, size) index matrix into the slack vector
        self.groups = {
            size: np.asarray(group, dtype=int)[:, None] + np.arange(size)[None, :] for size, group in sorted(groups.items())
        }

    def __repr__(self) -> str:
        return f"ConeLayout(nonneg={self.n_nonneg}, soc={len(self.soc_sizes)})"

    @property
    def degree(self) -> int:
        return self.n_nonneg + len(self.soc_sizes)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[: self.n_nonneg] = 1.0
        for idx in self.groups.values():
            e[idx[:, 0]] = 1.0
        return e

    def product(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Jordan product u o v."""
        out = np.empty(self.dim)
        l = self.n_nonneg
        out[:l] = u[:l] * v[:l]
        for idx in self.groups.values():
            ub, vb = u[idx], v[idx]
            out[idx[:, 0]] = np.sum(ub * vb, axis=1)
            out[idx[:, 1:]] = ub[:, :1] * vb[:, 1:] + vb[:, :1] * ub[:, 1:]
        return out

    def inverse_product(self, lam: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Solve lam o x = w for x (lam strictly interior)."""
        out = np.empty(self.dim)
        l = self.n_nonneg
        out[:l] = w[:l] / lam[:l]
        for idx in self.groups.values():
            lb, wb = lam[idx], w[idx]
            det = lb[:, 0] ** 2 - np.sum(lb[:, 1:] ** 2, axis=1)
            x0 = (lb[:, 0] * wb[:, 0] - np.sum(lb[:, 1:] * wb[:, 1:], axis=1)) / det
            out[idx[:, 0]] = x0
            out[idx[:, 1:]] = (wb[:, 1:] - x0[:, None] * lb[:, 1:]) / lb[:, :1]
        return out

    def boundary_shift(self, v: np.ndarray) -> float:
        """Smallest t with v + t e on the cone boundary; negative when v is interior."""
        shift = -math.inf
        l = self.n_nonneg
        if l:
            shift = max(shift, float(np.max(-v[:l])))
        for idx in self.groups.values():
            vb = v[idx]
            shift = max(shift, float(np.max(np.linalg.norm(vb[:, 1:], axis=1) - vb[:, 0])))
        return shift

    def contains(self, v: np.ndarray, tol: float = 0.0) -> bool:
        return self.boundary_shift(v) <= tol

    def max_step(self, v: np.ndarray, d: np.ndarray) -> float:
        """Largest alpha with v + alpha d in the cone, for v strictly interior."""
        alpha = math.inf
        l = self.n_nonneg
        if l:
            neg = d[:l] < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-v[:l][neg] / d[:l][neg])))
        for idx in self.groups.values():
            vb, db = v[idx], d[idx]
            # q(a) = qa a^2 + 2 qb a + qc; first positive root leaves the cone
            qa = db[:, 0] ** 2 - np.sum(db[:, 1:] ** 2, axis=1)
            qb = vb[:, 0] * db[:, 0] - np.sum(vb[:, 1:] * db[:, 1:], axis=1)
            qc = np.maximum(vb[:, 0] ** 2 - np.sum(vb[:, 1:] ** 2, axis=1), 0.0)
            disc = qb * qb - qa * qc
            hits = (qa < 0) | ((qb < 0) & (disc >= 0))
            if np.any(hits):
                denom = -qb[hits] + np.sqrt(np.maximum(disc[hits], 0.0))
                with np.errstate(divide="ignore"):
                    roots = np.where(denom > 0, qc[hits] / denom, 0.0)
                alpha = min(alpha, float(np.min(roots)))
        return alpha

    def nt_scaling(self, s: np.ndarray, z: np.ndarray) -> "NtScaling":
        """Nesterov-Todd scaling W with W z = W^-1 s = lambda."""
        l = self.n_nonneg
        d = np.sqrt(s[:l] / z[:l])
        socs = {}
        for size, idx in self.groups.items():
            sb, zb = s[idx], z[idx]
            ns = np.sqrt(np.maximum(sb[:, 0] ** 2 - np.sum(sb[:, 1:] ** 2, axis=1), 1e-300))
            nz = np.sqrt(np.maximum(zb[:, 0] ** 2 - np.sum(zb[:, 1:] ** 2, axis=1), 1e-300))
            sbar = sb / ns[:, None]
            zbar = zb / nz[:, None]
            gamma = np.sqrt((1.0 + np.sum(sbar * zbar, axis=1)) / 2.0)
            wbar = sbar.copy()
            wbar[:, 0] += zbar[:, 0]
            wbar[:, 1:] -= zbar[:, 1:]
            wbar /= 2.0 * gamma[:, None]
            socs[size] = (wbar, np.sqrt(ns / nz))
        scaling = NtScaling(self, d, socs)
        scaling.lam = scaling.apply(z)
        return scaling


@dataclass(eq=False)
class NtScaling:
    layout: ConeLayout
    d: np.ndarray
    socs: dict
    lam: np.ndarray = None

    def _apply(self, v: np.ndarray, inverse: bool) -> np.ndarray:
        out = np.empty_like(v)
        l = self.layout.n_nonneg
        out[:l] = v[:l] / self.d if inverse else v[:l] * self.d
        for size, idx in self.layout.groups.items():
            wbar, beta = self.socs[size]
            vb = v[idx]
            w0, w1 = wbar[:, 0], wbar[:, 1:]
            v0, v1 = vb[:, 0], vb[:, 1:]
            dot = np.sum(w1 * v1, axis=1)
            sign = -1.0 if inverse else 1.0
            scale = 1.0 / beta if inverse else beta
            out[idx[:, 0]] = scale * (w0 * v0 + sign * dot)
            out[idx[:, 1:]] = scale[:, None] * (
                sign * v0[:, None] * w1 + v1 + (dot / (1.0 + w0))[:, None] * w1
            )
        return out

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self._apply(v, inverse=False)

    def apply_inverse(self, v: np.ndarray) -> np.ndarray:
        return self._apply(v, inverse=True)

    def squared(self) -> sp.csc_matrix:
        """W^2 as a sparse block-diagonal matrix."""
        l = self.layout.n_nonneg
        rows = [np.arange(l)]
        cols = [np.arange(l)]
        vals = [self.d**2]
        for size, idx in self.layout.groups.items():
            wbar, beta = self.socs[size]
            w0, w1 = wbar[:, 0], wbar[:, 1:]
            nb = len(w0)
            b = np.zeros((nb, size, size))
            b[:, 0, 0] = w0
            b[:, 0, 1:] = w1
            b[:, 1:, 0] = w1
            b[:, 1:, 1:] = np.eye(size - 1)[None, :, :] + np.einsum("ki,kj->kij", w1, w1) / (1.0 + w0)[:, None, None]
            w2 = np.einsum("kij,kjl->kil", b, b) * (beta**2)[:, None, None]
            rows.append(np.repeat(idx, size, axis=1).ravel())
            cols.append(np.tile(idx, (1, size)).ravel())
            vals.append(w2.ravel())
        dim = self.layout.dim
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
        ).tocsc()
