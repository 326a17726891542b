"""Reversible-jump Metropolis-Hastings over (nu, J, theta).

One sweep updates each background rate on the log scale, each
coefficient block by a random walk, and (with probability p_J) the
dimension J. Dimension moves come in two flavours: a step move to an
adjacent dimension via bin-average projection plus Gaussian dither, and
an exactly reversible scale move (split every bin with a mirrored
innovation / merge adjacent bins by averaging).
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .likelihood import LikelihoodCache, log_likelihood
from .model import ModelParams
from .priors import PriorSpec, log_prior, sample_prior
from .stream import EventStream

_LOG_2PI = float(np.log(2.0 * np.pi))


def _log_normal(x: np.ndarray, sigma: float) -> float:
    x = np.asarray(x, dtype=float)
    return float(-0.5 * np.sum(x ** 2) / sigma ** 2
                 - x.size * (np.log(sigma) + 0.5 * _LOG_2PI))


def project_bins(theta: np.ndarray, j_new: int) -> np.ndarray:
    """Bin-average projection of histogram coefficients (K, K, j) onto
    the regular j_new-bin partition (exact L2 projection)."""
    j = theta.shape[2]
    L = int(np.lcm(j, j_new))
    fine = np.repeat(theta, L // j, axis=2)
    return fine.reshape(theta.shape[0], theta.shape[1],
                        j_new, L // j_new).mean(axis=3)


def split_coefficients(theta: np.ndarray,
                       u: np.ndarray) -> np.ndarray:
    """Split every bin: children theta_i + u_i and theta_i - u_i."""
    K, _, j = theta.shape
    out = np.empty((K, K, 2 * j))
    out[:, :, 0::2] = theta + u
    out[:, :, 1::2] = theta - u
    return out


def merge_coefficients(theta: np.ndarray
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Merge adjacent bins by averaging; returns (parent, innovation) so
    that split(merge(x)) recovers x up to floating-point rounding."""
    a = theta[:, :, 0::2]
    b = theta[:, :, 1::2]
    return 0.5 * (a + b), 0.5 * (a - b)


class PosteriorTarget:
    """Cached posterior evaluation for one data stream and prior."""

    def __init__(self, stream: EventStream, horizon: float,
                 spec: PriorSpec):
        self.stream = stream
        self.horizon = horizon
        self.spec = spec
        self._caches: dict[int, LikelihoodCache] = {}

    def log_lik(self, nu: np.ndarray, J: int,
                theta: np.ndarray) -> float:
        h = self.spec.theta_to_h(J, theta)
        n_cells = h.shape[2]
        if h.min() >= 0.0:
            cache = self._caches.get(n_cells)
            if cache is None:
                cache = LikelihoodCache(self.stream, self.spec.K, n_cells,
                                        self.spec.support_end,
                                        self.horizon)
                self._caches[n_cells] = cache
            return cache.log_likelihood(nu, h)
        try:
            params = ModelParams(nu, h, self.spec.support_end, "relu")
        except ValueError:
            return -np.inf
        return log_likelihood(params, self.stream, self.horizon)

    def log_pri(self, nu: np.ndarray, J: int,
                theta: np.ndarray) -> float:
        return log_prior(nu, J, theta, self.spec)


@dataclass
class ChainState:
    nu: np.ndarray
    J: int
    theta: np.ndarray
    log_lik: float
    log_pri: float

    @classmethod
    def initial(cls, target: PosteriorTarget,
                rng: np.random.Generator) -> "ChainState":
        nu, J, theta = sample_prior(target.spec, rng)
        return cls(nu, J, theta, target.log_lik(nu, J, theta),
                   target.log_pri(nu, J, theta))


@dataclass
class Scales:
    nu: float = 0.3
    theta: float = 0.3
    dither: float = 0.1
    innovation: float = 0.1


def _try_accept(target: PosteriorTarget, state: ChainState,
                nu, J, theta, extra: float,
                rng: np.random.Generator) -> tuple[ChainState, bool]:
    """Generic MH accept step; extra carries Hastings/Jacobian terms."""
    lp = target.log_pri(nu, J, theta)
    if lp == -np.inf:
        return state, False
    ll = target.log_lik(nu, J, theta)
    if ll == -np.inf:
        return state, False
    log_alpha = (ll + lp) - (state.log_lik + state.log_pri) + extra
    if np.log(rng.uniform()) <= log_alpha:
        return ChainState(nu, J, theta, ll, lp), True
    return state, False


def mcmc_step(state: ChainState, target: PosteriorTarget,
              rng: np.random.Generator, scales: Scales,
              p_j: float = 0.2) -> tuple[ChainState, dict]:
    """One sweep; returns the new state and per-move acceptance counts."""
    spec = target.spec
    K = spec.K
    acc = {"nu": 0, "nu_n": 0, "theta": 0, "theta_n": 0,
           "jump": 0, "jump_n": 0}

    for k in range(K):
        nu = state.nu.copy()
        step = scales.nu * rng.standard_normal()
        nu[k] = state.nu[k] * np.exp(step)
        # log-scale walk: Hastings term log(nu'/nu)
        state, ok = _try_accept(target, state, nu, state.J, state.theta,
                                step, rng)
        acc["nu"] += ok
        acc["nu_n"] += 1

    for l in range(K):
        for k in range(K):
            theta = state.theta.copy()
            theta[l, k] += scales.theta * rng.standard_normal(state.J)
            state, ok = _try_accept(target, state, state.nu, state.J,
                                    theta, 0.0, rng)
            acc["theta"] += ok
            acc["theta_n"] += 1

    if rng.uniform() < p_j:
        acc["jump_n"] += 1
        dims = set(spec.admissible_dims().tolist())
        histogram = spec.basis_kind == "histogram"
        kind = rng.choice(["step", "scale"]) if histogram else "scale"
        j = state.J
        if kind == "step":
            j_new = j + 1 if rng.uniform() < 0.5 else j - 1
            if j_new in dims:
                base = project_bins(state.theta, j_new)
                theta = base + scales.dither * rng.standard_normal(
                    base.shape)
                back = project_bins(theta, j)
                extra = (_log_normal(state.theta - back, scales.dither)
                         - _log_normal(theta - base, scales.dither))
                state, ok = _try_accept(target, state, state.nu, j_new,
                                        theta, extra, rng)
                acc["jump"] += ok
        else:
            up = rng.uniform() < 0.5
            if up and 2 * j in dims:
                if histogram:
                    u = scales.innovation * rng.standard_normal(
                        state.theta.shape)
                    theta = split_coefficients(state.theta, u)
                    extra = (-_log_normal(u, scales.innovation)
                             + u.size * np.log(2.0))
                else:
                    u = scales.innovation * rng.standard_normal(
                        (K, K, j))
                    theta = np.concatenate([state.theta, u], axis=2)
                    extra = -_log_normal(u, scales.innovation)
                state, ok = _try_accept(target, state, state.nu, 2 * j,
                                        theta, extra, rng)
                acc["jump"] += ok
            elif not up and j % 2 == 0 and j // 2 in dims:
                if histogram:
                    theta, u = merge_coefficients(state.theta)
                    extra = (_log_normal(u, scales.innovation)
                             - u.size * np.log(2.0))
                else:
                    theta = state.theta[:, :, :j // 2]
                    u = state.theta[:, :, j // 2:]
                    extra = _log_normal(u, scales.innovation)
                state, ok = _try_accept(target, state, state.nu, j // 2,
                                        theta, extra, rng)
                acc["jump"] += ok
    return state, acc


@dataclass
class PosteriorDraws:
    """Thinned post-burn-in states plus run metadata."""

    nus: list
    js: list
    thetas: list
    acceptance: dict
    seed: int
    iters: int
    burn_in: int
    thin: int
    spec: PriorSpec

    def __len__(self) -> int:
        return len(self.js)

    def h_values(self, i: int) -> np.ndarray:
        return self.spec.theta_to_h(self.js[i], self.thetas[i])

    def l2_distance(self, i: int, f0: ModelParams) -> float:
        """||f - f0||_2 of draw i: rate part plus all kernel slots."""
        h = self.h_values(i)
        m = int(np.lcm(h.shape[2], f0.n_cells))
        hf = np.repeat(h, m // h.shape[2], axis=2)
        h0 = np.repeat(f0.h, m // f0.n_cells, axis=2)
        w = self.spec.support_end / m
        return float(np.sqrt(np.sum((self.nus[i] - f0.nu) ** 2)
                             + w * np.sum((hf - h0) ** 2)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        K = self.spec.K
        nu_cols = ",".join(f"nu_{k + 1}" for k in range(K))
        buf.write(f"iter,J,{nu_cols},theta\n")
        for i in range(len(self)):
            theta_flat = ";".join(
                repr(float(v)) for v in self.thetas[i].ravel())
            nu_str = ",".join(repr(float(v)) for v in self.nus[i])
            buf.write(f"{i},{self.js[i]},{nu_str},{theta_flat}\n")
        return buf.getvalue()

    def summary_json(self) -> str:
        js = np.array(self.js)
        return json.dumps({
            "n_draws": len(self),
            "acceptance": self.acceptance,
            "seed": self.seed,
            "iters": self.iters,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "j_mean": float(js.mean()) if len(self) else None,
        })


def run_chain(stream: EventStream, horizon: float, spec: PriorSpec,
              iters: int = 20_000, burn_in: int | None = None,
              thin: int = 5, seed: int = 0, p_j: float = 0.2,
              warn: bool = True) -> PosteriorDraws:
    """Run one chain; proposal scales adapt toward 0.3 acceptance during
    burn-in only (Robbins-Monro) and are frozen afterwards."""
    import warnings as _warnings

    if burn_in is None:
        burn_in = iters // 5
    rng = np.random.default_rng(seed)
    target = PosteriorTarget(stream, horizon, spec)
    state = ChainState.initial(target, rng)
    scales = Scales()
    totals = {"nu": 0, "nu_n": 0, "theta": 0, "theta_n": 0,
              "jump": 0, "jump_n": 0}
    nus, js, thetas = [], [], []
    for it in range(iters):
        state, acc = mcmc_step(state, target, rng, scales, p_j)
        if it < burn_in:
            gamma = 1.0 / np.sqrt(it + 1.0)
            if acc["nu_n"]:
                scales.nu *= np.exp(
                    gamma * (acc["nu"] / acc["nu_n"] - 0.3))
            if acc["theta_n"]:
                scales.theta *= np.exp(
                    gamma * (acc["theta"] / acc["theta_n"] - 0.3))
        else:
            for key in totals:
                totals[key] += acc[key]
            if (it - burn_in) % thin == 0:
                nus.append(state.nu.copy())
                js.append(state.J)
                thetas.append(state.theta.copy())
    rates = {}
    for name in ("nu", "theta", "jump"):
        n = totals[name + "_n"]
        rates[name] = totals[name] / n if n else float("nan")
        if warn and n and not 0.1 <= rates[name] <= 0.6:
            _warnings.warn(
                f"{name} acceptance rate {rates[name]:.2f} outside "
                "[0.1, 0.6]", stacklevel=2)
    return PosteriorDraws(nus, js, thetas, rates, seed, iters, burn_in,
                          thin, spec)


def posterior_functional(draws: PosteriorDraws, fspec,
                         level: float = 0.90) -> dict:
    """Posterior sample of a functional with mean, sd and equal-tailed
    credible interval."""
    from .functionals import eval_functional_values

    if len(draws) == 0:
        raise ValueError("no draws")
    A = draws.spec.support_end
    samples = np.array([
        eval_functional_values(fspec, draws.nus[i], draws.h_values(i), A)
        for i in range(len(draws))])
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(samples, [alpha, 1.0 - alpha])
    return {"samples": samples, "mean": float(samples.mean()),
            "sd": float(samples.std(ddof=1)) if len(samples) > 1 else 0.0,
            "ci": (float(lo), float(hi)), "level": level}


def ess(samples: np.ndarray) -> float:
    """Effective sample size by initial-positive-sequence truncation of
    the autocorrelation function."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 10:
        raise ValueError("need at least 10 samples")
    x = x - x.mean()
    var = np.dot(x, x) / n
    if var == 0.0:
        return float(n)  # constant chain: no autocorrelation information
    nfft = int(2 ** np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]
    # sum consecutive pairs while they stay positive
    tau = 1.0
    t = 1
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        t += 2
    return float(n / tau)
