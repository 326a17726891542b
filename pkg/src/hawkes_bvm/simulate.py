"""Exact simulation of stationary multivariate Hawkes processes.

Two independent simulators: Ogata thinning (works for linear and ReLU
kinds) and the branching / cluster representation (linear only). Both
return events on [-A, T] and are reproducible given a seed.
"""

from __future__ import annotations

import numpy as np

from .model import ModelParams, spectral_radius, stationary_rates
from .stream import EventStream

_MAX_EVENTS = 50_000_000


def _dominating_kernels(params: ModelParams) -> np.ndarray:
    """Nonincreasing upper envelopes of h^+ (suffix max along the grid),
    so the thinning bound is valid until the next candidate."""
    hplus = np.maximum(params.h, 0.0)
    return np.maximum.accumulate(hplus[:, :, ::-1], axis=2)[:, :, ::-1]


def simulate_thinning(params: ModelParams, horizon: float,
                      burn_in: float | None = None,
                      seed: int | np.random.SeedSequence = 0) -> EventStream:
    """Ogata thinning on [-A - burn_in, horizon], keeping [-A, horizon].

    burn_in defaults to 50*A; the finite-memory process forgets its
    initial (empty) condition exponentially fast.
    """
    A = params.support_end
    if burn_in is None:
        burn_in = 50.0 * A
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    rng = np.random.default_rng(seed)
    K, m, w = params.K, params.n_cells, params.cell_width
    hbar = _dominating_kernels(params)
    h = params.h
    nu = params.nu
    nu_total = float(nu.sum())

    t = -A - burn_in
    times: list[float] = []
    marks: list[int] = []
    # rolling window of events within A of the current time; head is the
    # index of the oldest event still in memory
    win_t: list[float] = []
    win_k: list[int] = []
    head = 0

    while True:
        while head < len(win_t) and win_t[head] < t - A:
            head += 1
        if head > 4096:
            del win_t[:head]
            del win_k[:head]
            head = 0
        bound = nu_total
        for i in range(head, len(win_t)):
            age = t - win_t[i]
            cell = int(age / w)
            if cell < m:
                bound += float(hbar[win_k[i], :, cell].sum())
        if not np.isfinite(bound) or bound > 1e12:
            raise OverflowError("thinning bound overflow; model unstable?")
        t = t + rng.exponential(1.0 / bound)
        if t > horizon:
            break
        # intensities at the candidate time
        lam = nu.copy()
        for i in range(head, len(win_t)):
            age = t - win_t[i]
            if 0.0 < age <= A:
                lam = lam + h[win_k[i], :, min(int(age / w), m - 1)]
        if params.kind == "relu":
            lam = np.maximum(lam, 0.0)
        lam_tot = float(lam.sum())
        if rng.uniform() * bound <= lam_tot:
            k = int(rng.choice(K, p=lam / lam_tot))
            win_t.append(t)
            win_k.append(k)
            if t >= -A:
                times.append(t)
                marks.append(k + 1)
            if len(times) > _MAX_EVENTS:
                raise OverflowError("event budget exceeded")
    return EventStream(np.array(times), np.array(marks), -A, horizon)


def simulate_cluster(params: ModelParams, horizon: float,
                     seed: int | np.random.SeedSequence = 0) -> EventStream:
    """Branching (immigrant/offspring) construction, linear model only.

    Immigrants are Poisson(nu) on an enlarged window; each point of mark j
    spawns Poisson(rho[j, k]) children of mark k with displacement density
    h[j, k] / rho[j, k] on (0, A].
    """
    if params.kind != "linear":
        raise ValueError("cluster representation requires the linear model")
    A = params.support_end
    rho = params.rho()
    r = spectral_radius(rho)
    if r >= 1.0:
        raise ValueError("subcritical model required")
    rng = np.random.default_rng(seed)
    K, m, w = params.K, params.n_cells, params.cell_width

    # immigrants far enough in the past that clusters overlapping [-A, T]
    # are (essentially) all represented
    t_lo = -A - 10.0 * A / (1.0 - r)
    span = horizon - t_lo
    all_t: list[np.ndarray] = []
    all_k: list[np.ndarray] = []
    # per-(parent mark j, child mark k) displacement samplers: cell choice
    # proportional to h values, uniform within the cell
    cell_probs = np.empty((K, K, m))
    for j in range(K):
        for k in range(K):
            if rho[j, k] > 0:
                cell_probs[j, k] = params.h[j, k] / params.h[j, k].sum()
            else:
                cell_probs[j, k] = 0.0

    gen_t: list[np.ndarray] = []
    gen_k: list[np.ndarray] = []
    for k in range(K):
        n_imm = rng.poisson(params.nu[k] * span)
        tt = rng.uniform(t_lo, horizon, n_imm)
        gen_t.append(tt)
        gen_k.append(np.full(n_imm, k))
    total = 0
    while gen_t:
        pt = np.concatenate(gen_t)
        pk = np.concatenate(gen_k)
        all_t.append(pt)
        all_k.append(pk)
        total += pt.size
        if total > _MAX_EVENTS:
            raise OverflowError("event budget exceeded")
        gen_t, gen_k = [], []
        for j in range(K):
            parents = pt[pk == j]
            if parents.size == 0:
                continue
            for k in range(K):
                if rho[j, k] <= 0:
                    continue
                counts = rng.poisson(rho[j, k], parents.size)
                n_child = int(counts.sum())
                if n_child == 0:
                    continue
                origins = np.repeat(parents, counts)
                cells = rng.choice(m, size=n_child, p=cell_probs[j, k])
                disp = (cells + rng.uniform(size=n_child)) * w
                child = origins + disp
                child = child[child <= horizon]
                if child.size:
                    gen_t.append(child)
                    gen_k.append(np.full(child.size, k))
    t_all = np.concatenate(all_t)
    k_all = np.concatenate(all_k)
    sel = t_all >= -A
    return EventStream(t_all[sel], k_all[sel] + 1, -A, horizon)
