"""Random-series priors on (nu, h): basis families, link, coefficient and
dimension priors, L2 projection and the contraction-rate schedule."""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .grids import GridFunction
from .model import spectral_radius


@dataclass(frozen=True)
class BasisFamily:
    """A finite family of piecewise-constant basis functions on [0, A].

    matrix[a, c] is the value of function a on grid cell c; histogram
    bases are indicators of a regular partition, Haar bases are the
    orthonormal scaling + wavelet functions up to a resolution.
    """

    kind: str
    support_end: float
    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.ndim != 2 or not np.all(np.isfinite(M)):
            raise ValueError("matrix must be finite and 2-d")
        if np.linalg.matrix_rank(M) < M.shape[0]:
            raise ValueError("basis functions must be independent")
        M = M.copy(); M.flags.writeable = False
        object.__setattr__(self, "matrix", M)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cells(self) -> int:
        return self.matrix.shape[1]

    @property
    def cell_width(self) -> float:
        return self.support_end / self.n_cells

    def gram(self) -> np.ndarray:
        return self.cell_width * self.matrix @ self.matrix.T

    def series(self, theta: np.ndarray) -> np.ndarray:
        """Cell values of theta^T B."""
        return np.asarray(theta, dtype=float) @ self.matrix


def histogram_basis(j: int, support_end: float) -> BasisFamily:
    """Indicators of the regular j-bin partition of [0, A]."""
    if j < 1:
        raise ValueError("j must be >= 1")
    return BasisFamily("histogram", support_end, np.eye(j))


def haar_basis(resolution: int, support_end: float) -> BasisFamily:
    """Orthonormal Haar system up to the given resolution: scaling
    function plus wavelet levels 0..resolution, 2^(resolution+1)
    functions in total."""
    if resolution < 0:
        raise ValueError("resolution must be >= 0")
    n = 2 ** (resolution + 1)
    A = support_end
    rows = [np.full(n, 1.0 / np.sqrt(A))]
    for q in range(resolution + 1):
        for s in range(2 ** q):
            row = np.zeros(n)
            width = n // 2 ** q
            lo = s * width
            row[lo:lo + width // 2] = 2 ** (q / 2.0) / np.sqrt(A)
            row[lo + width // 2:lo + width] = -(2 ** (q / 2.0)) / np.sqrt(A)
            rows.append(row)
    return BasisFamily("haar", A, np.array(rows))


def project_L2(g: GridFunction, basis: BasisFamily) -> np.ndarray:
    """L2-orthogonal projection coefficients of g onto the basis span."""
    if g.support_end != basis.support_end:
        raise ValueError("support mismatch")
    if g.n_cells % basis.n_cells:
        raise ValueError("grids do not nest")
    factor = g.n_cells // basis.n_cells
    M = np.repeat(basis.matrix, factor, axis=1)
    b = g.cell_width * M @ g.values
    return np.linalg.solve(basis.gram(), b)


@functools.lru_cache(maxsize=None)
def _basis_cached(kind: str, J: int, support_end: float) -> BasisFamily:
    if kind == "histogram":
        return histogram_basis(J, support_end)
    # Haar dimension J must be a power of two >= 2
    resolution = int(np.log2(J)) - 1
    if 2 ** (resolution + 1) != J:
        raise ValueError("haar dimension must be a power of two")
    return haar_basis(resolution, support_end)


def softplus(x):
    return np.logaddexp(0.0, x)


_LINKS = {"identity": lambda x: x, "softplus": softplus}


@dataclass(frozen=True)
class PriorSpec:
    """Hierarchical random-series prior on (nu, J, theta).

    J ~ pmf proportional to exp(-c1 j log j) on 1..J_max; theta entries
    i.i.d. from the named family; nu entries i.i.d. Gamma; the draw is
    kept only inside the admissible model class.
    """

    K: int = 1
    basis_kind: str = "histogram"
    c1: float = 1.0
    J_max: int = 32
    theta_family: str = "shifted-exponential"
    kappa: float = 0.0
    rate: float = 1.0
    sigma: float = 1.0
    nu_shape: float = 2.0
    nu_rate: float = 1.0
    link: str = "identity"
    support_end: float = 1.0

    def __post_init__(self):
        if self.theta_family not in ("shifted-exponential",
                                     "truncated-gaussian", "gaussian"):
            raise ValueError("unknown coefficient family")
        if self.link not in _LINKS:
            raise ValueError("unknown link")
        if self.basis_kind not in ("histogram", "haar"):
            raise ValueError("unknown basis kind")
        if self.c1 <= 0 or self.J_max < 1:
            raise ValueError("need c1 > 0 and J_max >= 1")

    def basis(self, J: int) -> BasisFamily:
        return _basis_cached(self.basis_kind, J, self.support_end)

    def admissible_dims(self) -> np.ndarray:
        dims = np.arange(1, self.J_max + 1)
        if self.basis_kind == "haar":
            dims = dims[(dims & (dims - 1) == 0) & (dims >= 2)]
        return dims

    def j_log_pmf(self) -> tuple[np.ndarray, np.ndarray]:
        """(dims, normalized log pmf) of the dimension prior."""
        return _j_log_pmf_cached(self)

    def theta_to_h(self, J: int, theta: np.ndarray) -> np.ndarray:
        """Kernel cell values phi(theta^T B_J), shape (K, K, n_cells)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.K, self.K, J):
            raise ValueError("theta must have shape (K, K, J)")
        basis = self.basis(J)
        series = theta.reshape(-1, J) @ basis.matrix
        return _LINKS[self.link](series).reshape(
            self.K, self.K, basis.n_cells)

    def in_model_class(self, nu: np.ndarray, h: np.ndarray) -> bool:
        """Membership in the admissible class: positive rates, entrywise
        and spectrally subcritical positive part, rates dominating the
        negative-part sup."""
        if np.any(nu <= 0) or not np.all(np.isfinite(nu)):
            return False
        if not np.all(np.isfinite(h)):
            return False
        w = self.support_end / h.shape[2]
        rho_plus = w * np.maximum(h, 0.0).sum(axis=2)
        if rho_plus.max(initial=0.0) >= 1.0:
            return False
        if spectral_radius(rho_plus) >= 1.0:
            return False
        hneg_sup = np.max(np.maximum(-h, 0.0), axis=(0, 2))
        return bool(np.all(nu - hneg_sup > 0))

    def _theta_dist(self):
        if self.theta_family == "shifted-exponential":
            return stats.expon(loc=self.kappa, scale=1.0 / self.rate)
        if self.theta_family == "truncated-gaussian":
            return stats.truncnorm(self.kappa / self.sigma, np.inf,
                                   loc=0.0, scale=self.sigma)
        return stats.norm(loc=0.0, scale=self.sigma)

    def _nu_dist(self):
        return stats.gamma(self.nu_shape, scale=1.0 / self.nu_rate)

    def theta_logpdf(self, theta: np.ndarray) -> float:
        x = np.asarray(theta, dtype=float)
        if self.theta_family == "shifted-exponential":
            if x.min() < self.kappa:
                return -np.inf
            return float(x.size * np.log(self.rate)
                         - self.rate * np.sum(x - self.kappa))
        if self.theta_family == "truncated-gaussian":
            if x.min() < self.kappa:
                return -np.inf
            log_z = float(stats.norm.logsf(self.kappa / self.sigma))
            return float(-0.5 * np.sum((x / self.sigma) ** 2)
                         - x.size * (np.log(self.sigma)
                                     + 0.5 * np.log(2 * np.pi) + log_z))
        return float(-0.5 * np.sum((x / self.sigma) ** 2)
                     - x.size * (np.log(self.sigma)
                                 + 0.5 * np.log(2 * np.pi)))

    def nu_logpdf(self, nu: np.ndarray) -> float:
        x = np.asarray(nu, dtype=float)
        if x.min() <= 0:
            return -np.inf
        a, b = self.nu_shape, self.nu_rate
        return float(np.sum((a - 1) * np.log(x) - b * x)
                     + x.size * (a * np.log(b) - special.gammaln(a)))


@functools.lru_cache(maxsize=None)
def _j_log_pmf_cached(spec: "PriorSpec") -> tuple[np.ndarray, np.ndarray]:
    dims = spec.admissible_dims()
    logw = -spec.c1 * dims * np.log(dims)
    logw = logw - (np.log(np.sum(np.exp(logw - logw.max())))
                   + logw.max())
    return dims, logw


def log_prior(nu: np.ndarray, J: int, theta: np.ndarray,
              spec: PriorSpec) -> float:
    """Unnormalized log prior density; -inf outside the model class."""
    dims, logpmf = spec.j_log_pmf()
    where = np.flatnonzero(dims == J)
    if where.size == 0:
        return -np.inf
    h = spec.theta_to_h(J, theta)
    if not spec.in_model_class(np.asarray(nu, dtype=float), h):
        return -np.inf
    total = float(logpmf[where[0]])
    total += spec.nu_logpdf(np.asarray(nu, dtype=float))
    total += spec.theta_logpdf(theta)
    return total


def sample_prior(spec: PriorSpec,
                 rng: np.random.Generator | int = 0,
                 max_tries: int = 10_000
                 ) -> tuple[np.ndarray, int, np.ndarray]:
    """Rejection-sample (nu, J, theta) from the restricted prior."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    dims, logpmf = spec.j_log_pmf()
    pmf = np.exp(logpmf)
    pmf /= pmf.sum()
    nu_dist, th_dist = spec._nu_dist(), spec._theta_dist()
    for _ in range(max_tries):
        J = int(rng.choice(dims, p=pmf))
        nu = nu_dist.rvs(size=spec.K, random_state=rng)
        theta = th_dist.rvs(size=(spec.K, spec.K, J), random_state=rng)
        if spec.in_model_class(nu, spec.theta_to_h(J, theta)):
            return nu, J, theta
    raise RuntimeError("prior rejection cap exceeded; spec too aggressive")


@dataclass(frozen=True)
class RateSchedule:
    eps_bar: float
    j_bar: float
    eps: float
    j_dim: int


def rate_schedule(beta: float, T: float, c_eps: float = 1.0,
                  c_j: float = 1.0, j0: float = 1.0) -> RateSchedule:
    """Contraction-rate schedule for a beta-smooth truth at horizon T."""
    if T <= np.e:
        raise ValueError("need T > e")
    if beta <= 0.5:
        warnings.warn("beta <= 1/2: asymptotic guarantees unavailable",
                      stacklevel=2)
    lt = np.log(T)
    denom = 2.0 * beta + 1.0
    eps_bar = c_eps * T ** (-beta / denom) * lt ** (beta / denom)
    j_bar = c_j * T ** (1.0 / denom) * lt ** ((3.0 * beta + 1.0) / denom)
    return RateSchedule(float(eps_bar), float(j_bar),
                        float(lt * eps_bar),
                        int(np.ceil(j0 * j_bar)))
