"""Palm-calculus estimators, the information operator and its inverse,
optimal variance, the efficient estimator and the projection bias term.

All Palm quantities are reduced to a handful of batched tensors built
once from an anchor ensemble (or supplied analytically for the Poisson
model), after which operator application and inversion are deterministic
linear algebra.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .grids import Direction
from .likelihood import LanEstimator, _window, w_statistic
from .model import ModelParams, stationary_rates
from .simulate import simulate_thinning
from .stream import EventStream

# an operator image (xi', g') has the same shape as a direction
OperatorImage = Direction


@dataclass(frozen=True)
class PalmEstimates:
    """Batched ergodic Palm tensors at a fixed truth.

    For B batches, K marks and m operator-grid cells:
      a_b[b, k]              E[1 / lambda^k] at a stationary time
      D_b[b, l, k, c]        E[(window count of mark l in age-cell c)
                             / lambda^k] at a stationary time
      p_b[b, l, k, c]        Palm mean of 1/lambda^k at lag-cell c after
                             a mark-l point
      C_b[b, l, j, k, c, c'] Palm mean of (count of mark-j points at
                             lag-cell c', anchor excluded) / lambda^k
    so zeta_{l,j,k}(g)(c) = sum_c' C[l,j,k,c,c'] g[c'].
    """

    support_end: float
    mu: np.ndarray
    a_b: np.ndarray
    D_b: np.ndarray
    p_b: np.ndarray
    C_b: np.ndarray

    @property
    def K(self) -> int:
        return self.mu.size

    @property
    def n_cells(self) -> int:
        return self.p_b.shape[3]

    @property
    def n_batches(self) -> int:
        return self.a_b.shape[0]

    @property
    def a(self) -> np.ndarray:
        return self.a_b.mean(axis=0)

    @property
    def D(self) -> np.ndarray:
        return self.D_b.mean(axis=0)

    @property
    def p(self) -> np.ndarray:
        return self.p_b.mean(axis=0)

    @property
    def C(self) -> np.ndarray:
        return self.C_b.mean(axis=0)

    @property
    def p_se(self) -> np.ndarray:
        if self.n_batches < 2:
            return np.zeros_like(self.p)
        return self.p_b.std(axis=0, ddof=1) / np.sqrt(self.n_batches)

    @classmethod
    def poisson(cls, nu: np.ndarray, support_end: float,
                n_cells: int) -> "PalmEstimates":
        """Closed-form Palm tensors of the Poisson model (h = 0)."""
        nu = np.asarray(nu, dtype=float)
        K = nu.size
        w = support_end / n_cells
        a = (1.0 / nu)[None, :]
        D = np.empty((1, K, K, n_cells))
        p = np.empty((1, K, K, n_cells))
        C = np.empty((1, K, K, K, n_cells, n_cells))
        for l in range(K):
            for k in range(K):
                D[0, l, k, :] = nu[l] * w / nu[k]
                p[0, l, k, :] = 1.0 / nu[k]
                for j in range(K):
                    C[0, l, j, k, :, :] = nu[j] * w / nu[k]
        return cls(support_end, nu.copy(), a, D, p, C)

    def to_json(self) -> str:
        return json.dumps({
            "A": self.support_end,
            "mu": self.mu.tolist(),
            "a_b": self.a_b.tolist(),
            "D_b": self.D_b.tolist(),
            "p_b": self.p_b.tolist(),
            "C_b": self.C_b.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "PalmEstimates":
        doc = json.loads(text)
        return cls(float(doc["A"]), np.array(doc["mu"]),
                   np.array(doc["a_b"]), np.array(doc["D_b"]),
                   np.array(doc["p_b"]), np.array(doc["C_b"]))


def palm_cache_key(f0: ModelParams, n_cells: int, horizon: float,
                   n_anchors: int, seed: int) -> str:
    blob = f"{f0.to_json()}|{n_cells}|{horizon}|{n_anchors}|{seed}"
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_palm(palm: PalmEstimates, path: str) -> None:
    tmp = tempfile.NamedTemporaryFile(
        "w", dir=os.path.dirname(os.path.abspath(path)), delete=False)
    try:
        tmp.write(palm.to_json())
        tmp.close()
        os.replace(tmp.name, path)
    except BaseException:
        os.unlink(tmp.name)
        raise


def load_palm(path: str) -> PalmEstimates:
    with open(path) as fh:
        return PalmEstimates.from_json(fh.read())


def _intensity_many(f0: ModelParams, win_t: np.ndarray, win_k: np.ndarray,
                    ts: np.ndarray) -> np.ndarray:
    """Intensities (len(ts), K) from a local event window."""
    A, m0, w0 = f0.support_end, f0.n_cells, f0.cell_width
    lam = np.tile(f0.nu, (ts.size, 1))
    for t_ev, mk in zip(win_t, win_k):
        ages = ts - t_ev
        mask = (ages > 0) & (ages <= A)
        if mask.any():
            cells = np.minimum((ages[mask] / w0).astype(int), m0 - 1)
            lam[mask] += f0.h[mk - 1, :, cells]
    return lam


def estimate_palm(f0: ModelParams, n_cells: int,
                  n_anchors: int = 2000, n_points: int = 4000,
                  n_batches: int = 20,
                  seed: int | np.random.SeedSequence = 0,
                  stream: EventStream | None = None,
                  horizon: float | None = None) -> PalmEstimates:
    """Ergodic Palm tensors from one long path at f0.

    Anchors are observed points; each contributes the inverse intensity
    and lag-cell counts of its forward window of width A, evaluated at
    the operator-grid midpoints. Batches are contiguous in time.
    """
    if f0.kind != "linear":
        raise ValueError("Palm estimation requires the linear model")
    A, K = f0.support_end, f0.K
    mu = stationary_rates(f0)
    rng = np.random.default_rng(seed)
    if stream is None:
        if horizon is None:
            horizon = max(4.0 * A, 1.3 * n_anchors / float(mu.min())) + A
        stream = simulate_thinning(f0, horizon, seed=rng.integers(2**63))
    else:
        horizon = stream.horizon
    w = A / n_cells
    mids = (np.arange(n_cells) + 0.5) * w
    times, marks = stream.times, stream.marks

    # stationary-time tensors a and D
    if n_points % n_batches:
        n_points += n_batches - n_points % n_batches
    strat = horizon / n_points
    pts = (np.arange(n_points) + rng.uniform(size=n_points)) * strat
    a_b = np.zeros((n_batches, K))
    D_b = np.zeros((n_batches, K, K, n_cells))
    per_batch_pts = n_points // n_batches
    for i, t in enumerate(pts):
        b = i // per_batch_pts
        lo, hi = _window(times, t, A)
        lam = _intensity_many(f0, times[lo:hi], marks[lo:hi],
                              np.array([t]))[0]
        inv = 1.0 / lam
        a_b[b] += inv
        for j in range(lo, hi):
            c = min(int((t - times[j]) / w), n_cells - 1)
            D_b[b, marks[j] - 1, :, c] += inv
    a_b /= per_batch_pts
    D_b /= per_batch_pts

    # anchored Palm tensors p and C
    p_b = np.zeros((n_batches, K, K, n_cells))
    C_b = np.zeros((n_batches, K, K, K, n_cells, n_cells))
    for l in range(K):
        anchors = times[(marks == l + 1) & (times >= 0)
                        & (times <= horizon - A)]
        if anchors.size < 200:
            raise ValueError(
                f"too few anchors for mark {l + 1}: {anchors.size}")
        if anchors.size > n_anchors:
            idx = np.linspace(0, anchors.size - 1, n_anchors).astype(int)
            anchors = anchors[np.unique(idx)]
        n = anchors.size
        per_batch = np.array_split(np.arange(n), n_batches)
        for b, idxs in enumerate(per_batch):
            cnt = len(idxs)
            for i in idxs:
                t0 = anchors[i]
                lo = np.searchsorted(times, t0 - A, "left")
                hi = np.searchsorted(times, t0 + A, "right")
                wt, wk = times[lo:hi], marks[lo:hi]
                ts = t0 + mids
                lam = _intensity_many(f0, wt, wk, ts)
                inv = 1.0 / lam  # (n_cells, K)
                p_b[b, l] += inv.T
                for t_ev, mk in zip(wt, wk):
                    if t_ev == t0:
                        continue
                    lags = ts - t_ev
                    mask = (lags > 0) & (lags <= A)
                    if not mask.any():
                        continue
                    cs = np.flatnonzero(mask)
                    cps = np.minimum((lags[cs] / w).astype(int),
                                     n_cells - 1)
                    np.add.at(
                        C_b[b, l, mk - 1].transpose(1, 2, 0),
                        (cs, cps), inv[cs, :])
            if cnt:
                p_b[b, l] /= cnt
                C_b[b, l] /= cnt
    return PalmEstimates(A, mu, a_b, D_b, p_b, C_b)


def apply_palm_zeta(palm: PalmEstimates, g: np.ndarray) -> np.ndarray:
    """zeta_{l,j,k}(g) on the grid for a single function g (m values)."""
    g = np.asarray(g, dtype=float)
    if g.shape != (palm.n_cells,):
        raise ValueError("g must live on the operator grid")
    return np.einsum("ljkcd,d->ljkc", palm.C, g)


def _apply_tensors(mu, a, D, p, C, d: Direction) -> Direction:
    xi_out = d.xi * a + np.einsum("lkc,lkc->k", D, d.g)
    zeta = np.einsum("ljkcd,jkd->lkc", C, d.g)
    g_out = mu[:, None, None] * (
        d.xi[None, :, None] * p + d.g * p + zeta)
    return Direction(xi_out, g_out, d.support_end)


def info_operator_apply(palm: PalmEstimates,
                        d: Direction) -> OperatorImage:
    """The information operator Gamma at the truth: (xi, g) -> (xi', g')."""
    if d.n_cells != palm.n_cells or d.K != palm.K:
        raise ValueError("direction does not match the Palm grid")
    return _apply_tensors(palm.mu, palm.a, palm.D, palm.p, palm.C, d)


def info_operator_apply_batched(palm: PalmEstimates, d: Direction
                                ) -> tuple[OperatorImage, OperatorImage]:
    """Gamma(d) plus a batch-means SE image."""
    images = [_apply_tensors(palm.mu, palm.a_b[b], palm.D_b[b],
                             palm.p_b[b], palm.C_b[b], d)
              for b in range(palm.n_batches)]
    xi_all = np.stack([im.xi for im in images])
    g_all = np.stack([im.g for im in images])
    B = palm.n_batches
    mean = Direction(xi_all.mean(axis=0), g_all.mean(axis=0),
                     d.support_end)
    if B < 2:
        return mean, Direction.zero(d.K, d.support_end, d.n_cells)
    se = Direction(xi_all.std(axis=0, ddof=1) / np.sqrt(B),
                   g_all.std(axis=0, ddof=1) / np.sqrt(B), d.support_end)
    return mean, se


def info_operator_invert(palm: PalmEstimates, target: OperatorImage,
                         tol: float = 1e-8, max_iter: int = 10_000,
                         omega: float = 0.5
                         ) -> tuple[Direction, float, bool]:
    """Invert Gamma by the displayed fixed point with under-relaxation.

    Returns (direction, sup-norm residual of Gamma(result) - target,
    converged flag). The relaxation factor is halved when the sup-change
    increases twice in a row.
    """
    if target.n_cells != palm.n_cells or target.K != palm.K:
        raise ValueError("target does not match the Palm grid")
    K, m, A = palm.K, palm.n_cells, palm.support_end
    mu, a, D, p, C = palm.mu, palm.a, palm.D, palm.p, palm.C
    xi = np.zeros(K)
    g = np.zeros((K, K, m))
    prev_change = np.inf
    n_increase = 0
    converged = False
    for _ in range(max_iter):
        zeta = np.einsum("ljkcd,jkd->lkc", C, g)
        g_new = ((target.g - mu[:, None, None] * zeta)
                 / (mu[:, None, None] * p) - xi[None, :, None])
        xi_new = (target.xi - np.einsum("lkc,lkc->k", D, g_new)) / a
        g_next = (1 - omega) * g + omega * g_new
        xi_next = (1 - omega) * xi + omega * xi_new
        change = max(float(np.max(np.abs(g_next - g))),
                     float(np.max(np.abs(xi_next - xi))))
        g, xi = g_next, xi_next
        if change > prev_change:
            n_increase += 1
            if n_increase >= 2:
                omega = max(omega / 2.0, 1e-3)
                n_increase = 0
        else:
            n_increase = 0
        prev_change = change
        if change < tol:
            converged = True
            break
    result = Direction(xi, g, A)
    image = info_operator_apply(palm, result)
    residual = max(float(np.max(np.abs(image.xi - target.xi))),
                   float(np.max(np.abs(image.g - target.g))))
    return result, residual, converged


def optimal_variance(psi_L: Direction, psi_2: Direction) -> float:
    """V0 = <psi_L, psi_2>_2, the efficient asymptotic variance."""
    return psi_L.l2_inner(psi_2)


def efficient_estimate(psi_at_f0: float, f0: ModelParams,
                       psi_L: Direction, stream: EventStream,
                       horizon: float) -> float:
    """Oracle efficient estimator: psi(f0) + W_T(psi_L)/sqrt(T)."""
    return psi_at_f0 + w_statistic(psi_L, f0, stream, horizon) / np.sqrt(
        horizon)


def bias_term(basis_dirs: list[Direction], f_dir: Direction,
              psi_L: Direction, lan: LanEstimator,
              ridge: float = 1e-10
              ) -> tuple[float, float, bool]:
    """Projection bias B_J = -<f - Pf, psi_L - P psi_L>_L with the
    LAN-orthogonal projection P onto span(basis_dirs).

    Returns (B_J, batch-means SE, ridge flag). Projection coefficients
    come from the pooled Gram; the SE propagates per-batch Gram entries
    through the fixed coefficients.
    """
    dirs = list(basis_dirs) + [f_dir, psi_L]
    nb = len(basis_dirs)
    gram_b = lan.gram_batches(dirs)  # (B, D, D)
    G = gram_b.mean(axis=0)
    G_bb = G[:nb, :nb]
    flagged = False
    if np.linalg.cond(G_bb) > 1e12:
        G_bb = G_bb + ridge * np.eye(nb)
        flagged = True
    g_bf = G[:nb, nb]
    g_bp = G[:nb, nb + 1]
    alpha = np.linalg.solve(G_bb, g_bf)
    beta = np.linalg.solve(G_bb, g_bp)
    B = gram_b.shape[0]
    vals = np.empty(B)
    for b in range(B):
        Gb = gram_b[b]
        vals[b] = (Gb[nb, nb + 1] - alpha @ Gb[:nb, nb + 1]
                   - beta @ Gb[:nb, nb] + alpha @ Gb[:nb, :nb] @ beta)
    bj = -float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(B)) if B > 1 else 0.0
    return bj, se, flagged
