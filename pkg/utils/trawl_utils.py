"""
trawl_utils.py
Description: Trawl functions and Levy seed laws with their closed-form quantities
(trawl-set measures, autocovariance, seed cumulants, asymptotic variance).
"""

import logging
import math
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, model_validator
from scipy import integrate

from utils.utils import ConfigurationError, TrawlDomainError

logger = logging.getLogger(__name__)

VARIANCE_TOL = 1e-9


def _check_nonnegative(x, what):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise TrawlDomainError(f"{what} must be >= 0, got {x}")
    return arr


def _as_output(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


class ExponentialTrawl(BaseModel):
    """a(s) = exp(-lambda * s)."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    kind: Literal["exp"] = "exp"
    lam: float = Field(alias="lambda", gt=0)

    def a(self, t):
        return np.exp(-self.lam * t)

    def phi(self, t):
        return self.lam * np.exp(-self.lam * t)

    def leb_a(self):
        return 1.0 / self.lam

    def tail(self, h):
        """Integral of a over [h, inf)."""
        return np.exp(-self.lam * h) / self.lam

    def strip(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        width = np.asarray(hi, dtype=float) - lo
        return np.exp(-self.lam * lo) * -np.expm1(-self.lam * width) / self.lam

    def tail_time(self, tol):
        return -math.log(tol) / self.lam

    def integral_a_squared(self):
        return 0.5 / self.lam

    def sigma2(self, c4, t):
        lam = self.lam
        decay = np.exp(-2.0 * lam * t)
        return c4 * np.exp(-lam * t) + 1.0 / lam + 2.0 * t * decay - decay / lam


class SupGammaTrawl(BaseModel):
    """a(s) = (1 + s/alpha)^(-H); long memory for H in (1, 2]."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    kind: Literal["supgamma"] = "supgamma"
    alpha: float = Field(gt=0)
    H: float = Field(gt=1)

    def a(self, t):
        return (1.0 + t / self.alpha) ** (-self.H)

    def phi(self, t):
        return (self.H / self.alpha) * (1.0 + t / self.alpha) ** (-self.H - 1.0)

    def leb_a(self):
        return self.alpha / (self.H - 1.0)

    def tail(self, h):
        return self.leb_a() * (1.0 + h / self.alpha) ** (1.0 - self.H)

    def strip(self, lo, hi):
        return self.tail(lo) - self.tail(hi)

    def tail_time(self, tol):
        with np.errstate(over='ignore'):
            grow = np.power(tol, 1.0 / (1.0 - self.H))
        return float(self.alpha * (grow - 1.0))

    def integral_a_squared(self):
        return self.alpha / (2.0 * self.H - 1.0)

    def sigma2(self, c4, t):
        def one(tt):
            inner, _ = integrate.quad(lambda s: self.a(tt - s) * self.a(tt + s), 0.0, tt,
                                      epsabs=1e-12, epsrel=1e-10, limit=200)
            outer, _ = integrate.quad(lambda u: self.a(u) * self.a(u + 2.0 * tt), 0.0, np.inf,
                                      epsabs=1e-12, epsrel=1e-10, limit=200)
            return c4 * self.a(tt) + 2.0 * (self.integral_a_squared() + inner - outer)

        if np.ndim(t) == 0:
            return one(float(t))
        return np.array([one(float(tt)) for tt in np.ravel(t)]).reshape(np.shape(t))


TrawlSpec = Annotated[Union[ExponentialTrawl, SupGammaTrawl], Field(discriminator="kind")]
_TRAWL_ADAPTER = TypeAdapter(TrawlSpec)


def _seed_variance_check(seed, variance):
    if not seed.unchecked and abs(variance - 1.0) > VARIANCE_TOL:
        raise ValueError(
            f"{seed.kind} seed must have unit variance, got {variance:.6g}; "
            "use the unchecked constructor to relax this"
        )


class NegBinSeed(BaseModel):
    """P(x) = Gamma(m+x)/(Gamma(m) x!) (1-theta)^m theta^x."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["negbin"] = "negbin"
    theta: float = Field(gt=0, lt=1)
    m: float = Field(gt=0)
    unchecked: bool = Field(default=False, exclude=True)

    @model_validator(mode="before")
    @classmethod
    def _derive_shape(cls, data):
        if isinstance(data, dict) and data.get("m") is None and data.get("theta") is not None:
            theta = float(data["theta"])
            if 0 < theta < 1:
                data = {**data, "m": (1.0 - theta) ** 2 / theta}
        return data

    @model_validator(mode="after")
    def _unit_variance(self):
        _seed_variance_check(self, self.moments()[1])
        return self

    @classmethod
    def normalized(cls, theta):
        return cls(theta=theta)

    def moments(self):
        m, th = self.m, self.theta
        mean = m * th / (1.0 - th)
        var = m * th / (1.0 - th) ** 2
        c4 = m * th * (th ** 2 + 4.0 * th + 1.0) / (th - 1.0) ** 4
        return mean, var, c4


class GammaSeed(BaseModel):
    """Gamma(shape, scale); scale = 1/sqrt(shape) under unit variance."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["gamma"] = "gamma"
    shape: float = Field(gt=0)
    scale: float = Field(gt=0)
    unchecked: bool = Field(default=False, exclude=True)

    @model_validator(mode="before")
    @classmethod
    def _derive_scale(cls, data):
        if isinstance(data, dict) and data.get("scale") is None and data.get("shape") is not None:
            shape = float(data["shape"])
            if shape > 0:
                data = {**data, "scale": 1.0 / math.sqrt(shape)}
        return data

    @model_validator(mode="after")
    def _unit_variance(self):
        _seed_variance_check(self, self.moments()[1])
        return self

    @classmethod
    def normalized(cls, shape):
        return cls(shape=shape)

    def moments(self):
        a, s = self.shape, self.scale
        return a * s, a * s ** 2, 6.0 * a * s ** 4


class GaussianSeed(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["gaussian"] = "gaussian"
    mu: float = 0.0
    sigma2: float = Field(default=1.0, gt=0)
    unchecked: bool = Field(default=False, exclude=True)

    @model_validator(mode="after")
    def _unit_variance(self):
        _seed_variance_check(self, self.sigma2)
        return self

    @classmethod
    def normalized(cls, mu=0.0):
        return cls(mu=mu)

    def moments(self):
        return self.mu, self.sigma2, 0.0


SeedSpec = Annotated[Union[NegBinSeed, GammaSeed, GaussianSeed], Field(discriminator="kind")]
_SEED_ADAPTER = TypeAdapter(SeedSpec)

_SEED_CLASSES = {"negbin": NegBinSeed, "gamma": GammaSeed, "gaussian": GaussianSeed}


def normalized_seed(kind, **params):
    """Seed with its free parameter derived from Var(L') = 1, e.g. normalized_seed('negbin', theta=0.2)."""
    if kind not in _SEED_CLASSES:
        raise TrawlDomainError(f"Unknown seed kind {kind!r}; choose from {sorted(_SEED_CLASSES)}")
    return _SEED_CLASSES[kind].normalized(**params)


def unchecked_seed(kind, **params):
    """Seed taken as given, without the unit-variance identification check."""
    if kind not in _SEED_CLASSES:
        raise TrawlDomainError(f"Unknown seed kind {kind!r}; choose from {sorted(_SEED_CLASSES)}")
    return _SEED_CLASSES[kind](unchecked=True, **params)


def parse_trawl(obj):
    """Build a TrawlSpec from its JSON form, e.g. {"kind": "exp", "lambda": 1.0}."""
    if isinstance(obj, (ExponentialTrawl, SupGammaTrawl)):
        return obj
    try:
        return _TRAWL_ADAPTER.validate_python(obj)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid trawl specification {obj!r}: {e}") from e


def parse_seed(obj):
    """Build a SeedSpec from its JSON form, e.g. {"kind": "negbin", "theta": 0.2}."""
    if isinstance(obj, (NegBinSeed, GammaSeed, GaussianSeed)):
        return obj
    try:
        return _SEED_ADAPTER.validate_python(obj)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid seed specification {obj!r}: {e}") from e


def eval_trawl(spec, t):
    """a(t) for t >= 0 (scalar or array)."""
    arr = _check_nonnegative(t, "time")
    return _as_output(spec.a(arr), t)


def eval_phi(spec, t):
    """phi(t) = -a'(t) for t >= 0."""
    arr = _check_nonnegative(t, "time")
    return _as_output(spec.phi(arr), t)


def leb_A(spec):
    return float(spec.leb_a())


def leb_intersection(spec, h):
    """Leb(A ∩ A_h) = integral of a over [h, inf)."""
    arr = _check_nonnegative(h, "lag")
    return _as_output(spec.tail(arr), h)


def leb_setminus(spec, h):
    """Leb(A \\ A_h) = Leb(A) - Leb(A ∩ A_h)."""
    return leb_A(spec) - leb_intersection(spec, h)


def theoretical_acf(spec, h):
    """Autocovariance at lag h under Var(L') = 1; symmetric in h."""
    arr = np.abs(np.asarray(h, dtype=float))
    return _as_output(spec.tail(arr), h)


def strip_integral(spec, lo, hi):
    """Integral of a over [lo, hi]; hi may be inf."""
    _check_nonnegative(lo, "lower bound")
    if np.any(np.asarray(hi, dtype=float) < np.asarray(lo, dtype=float)):
        raise TrawlDomainError(f"Strip bounds reversed: [{lo}, {hi}]")
    out = spec.strip(lo, hi)
    return float(out) if np.ndim(out) == 0 else out


def tail_time(spec, tol):
    """Smallest T with integral of a over [T, inf) <= tol * Leb(A)."""
    if not 0 < tol < 1:
        raise TrawlDomainError(f"Tail tolerance must lie in (0, 1), got {tol}")
    return float(spec.tail_time(tol))


def integral_a_squared(spec):
    return float(spec.integral_a_squared())


def seed_moments(seed):
    """(mean, variance, c4) of the seed L'."""
    return tuple(float(v) for v in seed.moments())


def closed_form_sigma2(trawl, c4, t):
    """
    Asymptotic variance of the trawl estimator at time t:
    c4 a(t) + 2 { int a^2 + int_0^t a(t-s) a(t+s) ds - int_t^inf a(s-t) a(s+t) ds }.
    Closed form for the exponential trawl, adaptive quadrature otherwise.
    """
    arr = _check_nonnegative(t, "time")
    return _as_output(trawl.sigma2(c4, arr), t)
