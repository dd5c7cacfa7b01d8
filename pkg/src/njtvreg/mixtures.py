"""Two-class intensity mixtures fitted by EM on histograms, and the per-channel scale lambda.

lambda is the reciprocal of an intensity scale s, so lambda * |grad f| has no units:

- nonnegative images (MR): s is the mean of the foreground class of a Rician mixture;
- images with negative values (CT): s = |mu_background - mu_foreground| of a Gaussian mixture.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from njtvreg.utils.log import logger
from njtvreg.volume import Volume

DEFAULT_BINS = 1024
MAX_ITERATIONS = 10_000
RELATIVE_TOLERANCE = 1e-8


class DegenerateHistogramError(ValueError):
    """Raised when intensities are constant (or empty) so no histogram can be built."""


class UseGaussianInsteadError(ValueError):
    """Raised when a Rician fit is requested on data with negative support."""


class LambdaEstimationError(RuntimeError):
    """Raised when the fitted mixture does not yield a finite positive scale."""


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def mean(self) -> float:
        return float(np.average(self.centers, weights=self.counts))


def build_histogram(v: Volume, bins: int = DEFAULT_BINS) -> Histogram:
    if bins < 2:
        raise ValueError(f"Need at least 2 bins, got {bins}")
    values = v.valid_values
    if values.size == 0 or values.max() <= values.min():
        raise DegenerateHistogramError("Intensities are constant; cannot build a histogram")
    counts, edges = np.histogram(values, bins=bins, range=(values.min(), values.max()))
    return Histogram(edges, counts.astype(np.float64))


@dataclass
class GaussianClass:
    mu: float
    sigma2: float
    weight: float


@dataclass
class RicianClass:
    nu: float
    sigma: float
    weight: float

    @property
    def mean(self) -> float:
        return rician_mean(self.nu, self.sigma)


@dataclass
class GaussianMixture:
    background: GaussianClass
    foreground: GaussianClass
    log_likelihoods: list[float] = field(default_factory=list, repr=False)
    iterations: int = 0

    @property
    def scale(self) -> float:
        return abs(self.background.mu - self.foreground.mu)

    def to_dict(self) -> dict:
        return {"model": "gaussian", **asdict(self)}


@dataclass
class RicianMixture:
    background: RicianClass
    foreground: RicianClass
    log_likelihoods: list[float] = field(default_factory=list, repr=False)
    iterations: int = 0

    @property
    def scale(self) -> float:
        return self.foreground.mean

    def to_dict(self) -> dict:
        return {
            "model": "rician",
            **asdict(self),
            "means": [self.background.mean, self.foreground.mean],
        }


@dataclass(frozen=True)
class ChannelScale:
    lam: float
    provenance: str
    mixture: GaussianMixture | RicianMixture | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise LambdaEstimationError(f"lambda must be finite and positive, got {self.lam}")


def rician_mean(nu: float, sigma: float) -> float:
    """Mean of Rice(nu, sigma) via the Laguerre half-polynomial; sqrt(nu^2 + sigma^2) when nu/sigma > 3."""
    if nu > 3.0 * sigma:
        return float(np.hypot(nu, sigma))
    x = -(nu**2) / (2.0 * sigma**2)
    y = -x / 2.0
    # exp(x/2) I_k(-x/2) == ive(k, y) since y = -x/2 >= 0
    laguerre = (1.0 - x) * special.i0e(y) - x * special.i1e(y)
    return float(sigma * np.sqrt(np.pi / 2.0) * laguerre)


def _median_split(h: Histogram) -> np.ndarray:
    """Hard initial responsibilities of the upper class, splitting the histogram at its median."""
    cumulative = np.cumsum(h.counts)
    split = int(np.searchsorted(cumulative, 0.5 * cumulative[-1]))
    split = min(max(split, 0), h.counts.size - 2)
    upper = np.zeros(h.counts.size)
    upper[split + 1 :] = 1.0
    return upper


def _converged(history: list[float]) -> bool:
    if len(history) < 2:
        return False
    prev, cur = history[-2], history[-1]
    return abs(cur - prev) <= RELATIVE_TOLERANCE * max(abs(cur), 1e-300)


def _gaussian_log_densities(x: np.ndarray, mu: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    return -0.5 * np.log(2.0 * np.pi * sigma2) - (x[:, None] - mu) ** 2 / (2.0 * sigma2)


def fit_gaussian_mixture(h: Histogram) -> GaussianMixture:
    if h.total <= 0 or h.edges[-1] <= h.edges[0]:
        raise DegenerateHistogramError("Cannot fit a mixture to an empty or constant histogram")
    x, n = h.centers, h.counts
    floor = h.bin_width**2
    upper = _median_split(h)
    resp = np.stack([1.0 - upper, upper], axis=1) * n[:, None]
    history: list[float] = []
    iteration = 0
    while True:
        mass = np.maximum(resp.sum(axis=0), 1e-300)
        weight = mass / mass.sum()
        mu = (resp * x[:, None]).sum(axis=0) / mass
        sigma2 = np.maximum((resp * (x[:, None] - mu) ** 2).sum(axis=0) / mass, floor)
        log_joint = _gaussian_log_densities(x, mu, sigma2) + np.log(np.maximum(weight, 1e-300))
        log_norm = special.logsumexp(log_joint, axis=1)
        history.append(float((n * log_norm).sum()))
        if _converged(history) or iteration >= MAX_ITERATIONS:
            break
        resp = np.exp(log_joint - log_norm[:, None]) * n[:, None]
        iteration += 1

    # background: the class whose mean is closest to the histogram mode, ties to the lower mean
    mode = h.centers[int(np.argmax(h.counts))]
    order = np.lexsort((mu, np.abs(mu - mode)))
    bg, fg = (GaussianClass(float(mu[k]), float(sigma2[k]), float(weight[k])) for k in order)
    return GaussianMixture(bg, fg, history, iteration)


def _rician_log_densities(x: np.ndarray, nu: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    x = np.maximum(x, 1e-300)[:, None]
    z = x * nu / sigma2
    return np.log(x / sigma2) - (x**2 + nu**2) / (2.0 * sigma2) + np.log(special.i0e(z)) + z


def _bessel_ratio(z: np.ndarray) -> np.ndarray:
    return special.i1e(z) / special.i0e(z)


def fit_rician_mixture(h: Histogram) -> RicianMixture:
    if h.total <= 0 or h.edges[-1] <= h.edges[0]:
        raise DegenerateHistogramError("Cannot fit a mixture to an empty or constant histogram")
    if h.edges[0] < 0:
        raise UseGaussianInsteadError("Histogram has negative support; fit a Gaussian mixture instead")
    x, n = h.centers, h.counts
    floor = h.bin_width**2
    upper = _median_split(h)
    init = np.stack([1.0 - upper, upper], axis=1) * n[:, None]
    mass = np.maximum(init.sum(axis=0), 1e-300)
    mean = (init * x[:, None]).sum(axis=0) / mass
    second = (init * x[:, None] ** 2).sum(axis=0) / mass
    sigma2 = np.maximum(second - mean**2, floor)
    # background starts near-Rayleigh, foreground by matching E[x^2] = nu^2 + 2 sigma^2
    nu = np.array([1e-3 * np.sqrt(sigma2[0]), np.sqrt(max(second[1] - 2.0 * sigma2[1], 0.0))])
    weight = mass / mass.sum()

    history: list[float] = []
    iteration = 0
    while True:
        log_joint = _rician_log_densities(x, nu, sigma2) + np.log(np.maximum(weight, 1e-300))
        log_norm = special.logsumexp(log_joint, axis=1)
        history.append(float((n * log_norm).sum()))
        if _converged(history) or iteration >= MAX_ITERATIONS:
            break
        resp = np.exp(log_joint - log_norm[:, None]) * n[:, None]
        mass = np.maximum(resp.sum(axis=0), 1e-300)
        weight = mass / mass.sum()
        ratio = _bessel_ratio(x[:, None] * nu / sigma2)
        nu = (resp * x[:, None] * ratio).sum(axis=0) / mass
        sigma2 = np.maximum(0.5 * (resp * x[:, None] ** 2).sum(axis=0) / mass - 0.5 * nu**2, floor)
        iteration += 1

    classes = [RicianClass(float(nu[k]), float(np.sqrt(sigma2[k])), float(weight[k])) for k in range(2)]
    bg, fg = sorted(classes, key=lambda c: c.mean)
    return RicianMixture(bg, fg, history, iteration)


def estimate_lambda(v: Volume, bins: int = DEFAULT_BINS) -> ChannelScale:
    h = build_histogram(v, bins)
    mixture: GaussianMixture | RicianMixture
    if h.edges[0] >= 0:
        mixture = fit_rician_mixture(h)
    else:
        mixture = fit_gaussian_mixture(h)
    scale = mixture.scale
    if not np.isfinite(scale) or scale <= 0:
        raise LambdaEstimationError(f"Mixture fit gave a non-positive intensity scale {scale}: {mixture}")
    provenance = "rician" if isinstance(mixture, RicianMixture) else "gaussian"
    logger.debug(f"lambda = {1.0 / scale:.6g} from {provenance} mixture (scale {scale:.6g}, {mixture.iterations} it)")
    return ChannelScale(1.0 / scale, provenance, mixture)
