"""One-parameter exponential families with canonical links.

Every family is written as

    log f(y | theta) = [y * theta - b(theta)] / a_i(phi) + log f0(y, phi)

with ``a_i(phi) = phi / m_i``.  ``m_i`` is the number of trials for the
binomial family and 1 otherwise; binomial responses are stored as success
counts and mapped to the proportion ``y / m`` before entering the formulas.

The dispersion ``phi`` is sigma^2 for the Gaussian family, ``1 / kappa`` for
the gamma and inverse Gaussian families, and 1 for the rest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, gammaln, xlogy

FAMILY_NAMES = (
    "binomial",
    "poisson",
    "geometric",
    "negbin",
    "gaussian",
    "exponential",
    "gamma",
    "invgaussian",
)

# Families whose natural parameter lives on (-inf, 0).
_NEGATIVE_DOMAIN = {"geometric", "negbin", "exponential", "gamma", "invgaussian"}
_SHAPED = {"negbin", "gaussian", "gamma", "invgaussian"}

DOMAIN_MARGIN = 1e-10
# logit(1 - 1e-10): fitted probabilities are kept inside [1e-10, 1 - 1e-10].
BINOMIAL_THETA_MAX = float(np.log1p(-1e-10) - np.log(1e-10))
POISSON_THETA_MAX = 700.0


class DomainError(ValueError):
    """Natural parameter outside the family's domain."""


class SupportError(ValueError):
    """Response value outside the family's support."""


@dataclass(frozen=True)
class ObsContext:
    """Per-observation context: binomial trials, offset and dispersion.

    ``trials`` and ``offset`` may be scalars or arrays broadcastable against
    the response.  ``dispersion=None`` means "use the family default".
    """

    trials: object = 1
    offset: object = 0.0
    dispersion: Optional[float] = None


@dataclass(frozen=True)
class Family:
    """Exponential family descriptor.

    Parameters
    ----------
    name : str
        One of :data:`FAMILY_NAMES`.
    shape : float, optional
        Known shape parameter: kappa for ``negbin``, ``gamma`` and
        ``invgaussian``; sigma^2 for ``gaussian``.  Defaults to 1.
    """

    name: str
    shape: Optional[float] = None

    def __post_init__(self):
        name = self.name.lower()
        if name not in FAMILY_NAMES:
            raise ValueError(f"unknown family {self.name!r}; expected one of {FAMILY_NAMES}")
        object.__setattr__(self, "name", name)
        if self.shape is not None:
            if name not in _SHAPED:
                raise ValueError(f"family {name!r} takes no shape parameter")
            if not self.shape > 0:
                raise ValueError(f"shape must be positive, got {self.shape}")

    # -- basic properties -------------------------------------------------

    @property
    def kappa(self) -> float:
        return 1.0 if self.shape is None else float(self.shape)

    @property
    def supports_offset(self) -> bool:
        return True

    @property
    def default_dispersion(self) -> float:
        if self.name == "gaussian":
            return self.kappa
        if self.name in ("gamma", "invgaussian"):
            return 1.0 / self.kappa
        return 1.0

    @property
    def theta_bounds(self) -> tuple[float, float]:
        """Interval inside which optimizers keep the natural parameter."""
        if self.name == "binomial":
            return -BINOMIAL_THETA_MAX, BINOMIAL_THETA_MAX
        if self.name == "poisson":
            return -np.inf, POISSON_THETA_MAX
        if self.name in _NEGATIVE_DOMAIN:
            return -np.inf, -DOMAIN_MARGIN
        return -np.inf, np.inf

    def in_domain(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.name in _NEGATIVE_DOMAIN:
            return theta < 0
        return np.isfinite(theta) | (theta == -np.inf)

    def check_domain(self, theta):
        theta = np.asarray(theta, dtype=float)
        if not np.all(self.in_domain(theta)):
            raise DomainError(f"{self.name}: natural parameter must be < 0, got {theta}"
                              if self.name in _NEGATIVE_DOMAIN
                              else f"{self.name}: natural parameter must be finite, got {theta}")
        return theta

    def clamp(self, theta):
        """Clamp ``theta`` into :attr:`theta_bounds`; return (theta, clamped_flag)."""
        lo, hi = self.theta_bounds
        theta = np.asarray(theta, dtype=float)
        out = np.clip(theta, lo, hi)
        return out, bool(np.any(out != theta))

    # -- cumulant function and derivatives -------------------------------

    def b(self, theta):
        t = np.asarray(theta, dtype=float)
        k = self.kappa
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.name == "binomial":
                return np.logaddexp(0.0, t)
            if self.name == "poisson":
                return np.exp(t)
            if self.name == "geometric":
                return -np.log(-np.expm1(t))
            if self.name == "negbin":
                return -np.log(-np.expm1(t)) / k
            if self.name == "gaussian":
                return 0.5 * t * t
            if self.name in ("exponential", "gamma"):
                return -np.log(-t)
            return -np.sqrt(-2.0 * t)  # invgaussian

    def mean(self, theta):
        """b'(theta), the inverse canonical link."""
        t = np.asarray(theta, dtype=float)
        k = self.kappa
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.name == "binomial":
                return expit(t)
            if self.name == "poisson":
                return np.exp(t)
            if self.name == "geometric":
                return 1.0 / np.expm1(-t)
            if self.name == "negbin":
                return 1.0 / (k * np.expm1(-t))
            if self.name == "gaussian":
                return t + 0.0
            if self.name in ("exponential", "gamma"):
                return -1.0 / t
            return 1.0 / np.sqrt(-2.0 * t)

    def variance(self, theta):
        """b''(theta)."""
        t = np.asarray(theta, dtype=float)
        k = self.kappa
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.name == "binomial":
                return expit(t) * expit(-t)
            if self.name == "poisson":
                return np.exp(t)
            if self.name in ("geometric", "negbin"):
                e = np.expm1(-t)
                # e^t / (1 - e^t)^2 == (1 + e) / e^2 with e = e^{-t} - 1
                v = (1.0 + e) / (e * e)
                return v if self.name == "geometric" else v / k
            if self.name == "gaussian":
                return np.ones_like(t)
            if self.name in ("exponential", "gamma"):
                return 1.0 / (t * t)
            return (-2.0 * t) ** -1.5

    def link(self, mu):
        """Canonical link g(mu) = theta."""
        m = np.asarray(mu, dtype=float)
        k = self.kappa
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.name == "binomial":
                return np.log(m) - np.log1p(-m)
            if self.name == "poisson":
                return np.log(m)
            if self.name == "geometric":
                return np.log(m) - np.log1p(m)
            if self.name == "negbin":
                return np.log(k * m) - np.log1p(k * m)
            if self.name == "gaussian":
                return m + 0.0
            if self.name in ("exponential", "gamma"):
                return -1.0 / m
            return -0.5 / (m * m)

    def mean_bounds(self) -> tuple[float, float]:
        """Range of b' over :attr:`theta_bounds`, used to seed fits."""
        lo, hi = self.theta_bounds
        mlo = float(self.mean(lo)) if np.isfinite(lo) else -np.inf
        mhi = float(self.mean(hi)) if np.isfinite(hi) else np.inf
        if self.name in ("poisson", "geometric", "negbin", "exponential", "gamma", "invgaussian"):
            mlo = max(mlo, 1e-10) if np.isfinite(mlo) else 1e-10
        return mlo, mhi

    # -- response handling ------------------------------------------------

    def scale_response(self, y, trials=1):
        """Map stored responses to the model scale (proportions for binomial)."""
        y = np.asarray(y, dtype=float)
        if self.name == "binomial":
            return y / np.asarray(trials, dtype=float)
        return y

    def check_support(self, y, trials=1):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise SupportError(f"{self.name}: non-finite response")
        if self.name == "binomial":
            m = np.asarray(trials, dtype=float)
            if np.any(m <= 0) or np.any(y < 0) or np.any(y > m):
                raise SupportError("binomial: need 0 <= y <= trials with trials > 0")
        elif self.name in ("poisson", "geometric", "negbin"):
            if np.any(y < 0):
                raise SupportError(f"{self.name}: response must be nonnegative")
        elif self.name in ("exponential", "gamma", "invgaussian"):
            if np.any(y <= 0):
                raise SupportError(f"{self.name}: response must be positive")
        return y

    def log_base(self, ys, phi=None, trials=1):
        """log f0 for model-scale responses ``ys``."""
        phi = self.default_dispersion if phi is None else phi
        ys = np.asarray(ys, dtype=float)
        k = self.kappa
        if self.name == "binomial":
            m = np.asarray(trials, dtype=float)
            s = ys * m
            return gammaln(m + 1) - gammaln(s + 1) - gammaln(m - s + 1)
        if self.name == "poisson":
            return -gammaln(ys + 1)
        if self.name == "geometric":
            return np.zeros_like(ys)
        if self.name == "negbin":
            return gammaln(ys + 1 / k) - gammaln(ys + 1) - gammaln(1 / k)
        if self.name == "gaussian":
            return -ys * ys / (2 * phi) - 0.5 * np.log(2 * np.pi * phi)
        if self.name == "exponential":
            return np.zeros_like(ys)
        if self.name == "gamma":
            kap = 1.0 / phi
            return kap * np.log(kap) + (kap - 1) * np.log(ys) - gammaln(kap)
        kap = 1.0 / phi
        return -kap / (2 * ys) + 0.5 * np.log(kap / (2 * np.pi * ys ** 3))

    def dispersion_scale(self, phi=None, trials=1):
        """a_i(phi) = phi / m_i."""
        phi = self.default_dispersion if phi is None else phi
        if self.name == "binomial":
            return phi / np.asarray(trials, dtype=float)
        return np.broadcast_to(np.asarray(phi, dtype=float), np.shape(trials)) + 0.0

    def loglik(self, ys, theta, phi=None, trials=1):
        """Per-observation log-likelihood on model-scale responses."""
        theta = np.asarray(theta, dtype=float)
        a = self.dispersion_scale(phi, trials)
        with np.errstate(invalid="ignore"):
            core = (xlogy_safe(ys, theta) - self.b(theta)) / a
        return core + self.log_base(ys, phi, trials)

    def saturated_core(self, ys):
        """sup over theta of y*theta - b(theta), with 0 log 0 = 0."""
        y = np.asarray(ys, dtype=float)
        k = self.kappa
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.name == "binomial":
                return xlogy(y, y) + xlogy(1 - y, 1 - y)
            if self.name == "poisson":
                return xlogy(y, y) - y
            if self.name == "geometric":
                return xlogy(y, y) - xlogy(y + 1, y + 1)
            if self.name == "negbin":
                ky = k * y
                return xlogy(y, ky) - xlogy(y, 1 + ky) - np.log1p(ky) / k
            if self.name == "gaussian":
                return 0.5 * y * y
            if self.name in ("exponential", "gamma"):
                return -1.0 - np.log(y)
            return 0.5 / y

    def saturated_loglik(self, ys, phi=None, trials=1):
        a = self.dispersion_scale(phi, trials)
        return self.saturated_core(ys) / a + self.log_base(ys, phi, trials)

    def deviance(self, ys, theta, phi=None, trials=1):
        """2 [saturated - fitted]; f0 cancels."""
        theta = np.asarray(theta, dtype=float)
        a = self.dispersion_scale(phi, trials)
        with np.errstate(invalid="ignore"):
            core = xlogy_safe(ys, theta) - self.b(theta)
        dev = 2.0 * (self.saturated_core(ys) - core) / a
        # Rounding can leave tiny negatives when the fit is exact.
        return np.maximum(dev, 0.0)

    # -- sampling ---------------------------------------------------------

    def sample(self, theta, rng: np.random.Generator, phi=None, trials=1):
        """Draw responses on the stored scale (success counts for binomial)."""
        theta = self.check_domain(theta)
        phi = self.default_dispersion if phi is None else phi
        return np.asarray(self._draw(theta, rng, phi, trials), dtype=float)

    def _draw(self, theta, rng, phi, trials):
        mu = self.mean(theta)
        k = self.kappa
        if self.name == "binomial":
            m = np.broadcast_to(np.asarray(trials), mu.shape).astype(np.int64)
            return rng.binomial(m, mu)
        if self.name == "poisson":
            return rng.poisson(mu)
        if self.name == "geometric":
            # numpy counts trials; shift to failures before the first success
            return rng.geometric(-np.expm1(theta)) - 1
        if self.name == "negbin":
            return rng.negative_binomial(1.0 / k, 1.0 / (1.0 + k * mu))
        if self.name == "gaussian":
            return mu if phi == 0 else rng.normal(mu, np.sqrt(phi))
        if self.name == "exponential":
            return rng.exponential(mu)
        if self.name == "gamma":
            return rng.gamma(1.0 / phi, mu * phi)
        return rng.wald(mu, 1.0 / phi)


def xlogy_safe(y, theta):
    """y * theta with 0 * (-inf) = 0."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    with np.errstate(invalid="ignore"):
        out = y * theta
    return np.where(y == 0, 0.0, out)


def get_family(name: str, shape: Optional[float] = None) -> Family:
    return Family(name, shape)


# -- functional interface -------------------------------------------------

def _dispersion(family: Family, ctx: Optional[ObsContext]):
    if ctx is None or ctx.dispersion is None:
        return family.default_dispersion
    return ctx.dispersion


def _trials(ctx: Optional[ObsContext]):
    return 1 if ctx is None else ctx.trials


def b_value(family: Family, theta):
    return family.b(family.check_domain(theta))


def mean_value(family: Family, theta):
    return family.mean(family.check_domain(theta))


def variance_scale(family: Family, theta):
    return family.variance(family.check_domain(theta))


def loglik_term(family: Family, ctx: Optional[ObsContext], y, theta):
    """Log-likelihood of stored response ``y`` at natural parameter ``theta``.

    ``theta`` must already include any offset.
    """
    m = _trials(ctx)
    family.check_support(y, m)
    theta = family.check_domain(theta)
    return family.loglik(family.scale_response(y, m), theta, _dispersion(family, ctx), m)


def saturated_loglik(family: Family, ctx: Optional[ObsContext], y):
    m = _trials(ctx)
    family.check_support(y, m)
    return family.saturated_loglik(family.scale_response(y, m), _dispersion(family, ctx), m)


def deviance(family: Family, ctx: Optional[ObsContext], y, theta):
    m = _trials(ctx)
    family.check_support(y, m)
    theta = family.check_domain(theta)
    return family.deviance(family.scale_response(y, m), theta, _dispersion(family, ctx), m)


def sample(family: Family, ctx: Optional[ObsContext], theta, rng: np.random.Generator):
    return family.sample(theta, rng, _dispersion(family, ctx), _trials(ctx))
