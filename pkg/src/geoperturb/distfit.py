"""Maximum-likelihood fits of five continuous families to distance samples.

Normal, lognormal and exponential fits are closed form. Gamma and Weibull
shapes are found by safeguarded Newton iteration on the profile score
equations; the remaining parameter then follows in closed form.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, polygamma

from .errors import ConvergenceError, InsufficientDataError, ValidationError

FAMILIES = ("normal", "lognormal", "exponential", "gamma", "weibull")
PARAM_NAMES = {
    "normal": ("mu", "sigma"),
    "lognormal": ("mu_log", "sigma_log"),
    "exponential": ("rate",),
    "gamma": ("shape", "rate"),
    "weibull": ("shape", "scale"),
    # planar-uniform disc of the given radius; only used as an attack prior
    "disc": ("radius",),
}
REPORT_HEADER = ["method", "family", "param1", "param2", "log_likelihood", "n", "dropped"]
TABLE_COLUMNS = ("normal", "exponential", "weibull", "gamma", "lognormal")

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 200
_LOG_2PI = math.log(2 * math.pi)


def logpdf(family: str, params, x) -> np.ndarray:
    """Log-density of ``family`` at ``x`` (``-inf`` outside the support)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if family == "normal":
            mu, sigma = params
            return -0.5 * _LOG_2PI - math.log(sigma) - 0.5 * ((x - mu) / sigma) ** 2
        pos = x > 0
        lx = np.log(np.where(pos, x, 1.0))
        if family == "lognormal":
            mu, sigma = params
            out = -lx - 0.5 * _LOG_2PI - math.log(sigma) - 0.5 * ((lx - mu) / sigma) ** 2
        elif family == "exponential":
            (rate,) = params
            out = math.log(rate) - rate * x
            pos = x >= 0
        elif family == "gamma":
            shape, rate = params
            out = shape * math.log(rate) - gammaln(shape) + (shape - 1) * lx - rate * x
        elif family == "weibull":
            shape, scale = params
            out = (math.log(shape) - shape * math.log(scale) + (shape - 1) * lx
                   - (np.where(pos, x, 0.0) / scale) ** shape)
        elif family == "disc":
            (radius,) = params
            out = math.log(2.0) + lx - 2 * math.log(radius)
            pos = pos & (x <= radius)
        else:
            raise ValidationError(f"unknown family {family!r}")
        return np.where(pos, out, -np.inf)


@dataclass(frozen=True)
class FitResult:
    family: str
    params: tuple[float, ...]
    log_likelihood: float
    n: int
    dropped_nonpositive: int = 0
    iterations: int = 0

    @property
    def param_dict(self) -> dict[str, float]:
        return dict(zip(PARAM_NAMES[self.family], self.params))

    @property
    def aic(self) -> float:
        return 2 * len(self.params) - 2 * self.log_likelihood

    def logpdf(self, x) -> np.ndarray:
        return logpdf(self.family, self.params, x)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def is_valid(self) -> bool:
        return (self.family in PARAM_NAMES
                and all(math.isfinite(p) for p in self.params)
                and all(p > 0 for p in self.params[1 if self.family == "normal" else 0:]))


@dataclass(frozen=True)
class FitFailure:
    """A family that could not be fitted; kept so reports stay complete."""

    family: str
    error: str
    n: int
    dropped_nonpositive: int = 0
    log_likelihood: float = field(default=float("nan"))


def usable_samples(samples) -> tuple[np.ndarray, int]:
    """Drop non-positive values; return ``(kept, n_dropped)``."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    if np.any(~np.isfinite(x)):
        raise ValidationError("samples must be finite")
    keep = x > 0
    return x[keep], int((~keep).sum())


def log_likelihood(family: str, params, x) -> float:
    return math.fsum(logpdf(family, params, x))


def _newton(g, dg, x0, what, lower=0.0):
    """1-D Newton with a bisection-style guard keeping iterates above ``lower``."""
    x = x0
    trace = [x]
    for it in range(1, NEWTON_MAX_ITER + 1):
        gx = g(x)
        step = gx / dg(x)
        nxt = x - step
        while nxt <= lower:
            step /= 2
            nxt = x - step
        trace.append(nxt)
        if abs(nxt - x) <= NEWTON_TOL * abs(nxt) and abs(g(nxt)) < NEWTON_TOL:
            return nxt, it
        x = nxt
    raise ConvergenceError(f"{what} Newton iteration did not converge", trace)


def gamma_score(shape: float, log_mean_minus_mean_log: float) -> float:
    return math.log(shape) - float(digamma(shape)) - log_mean_minus_mean_log


def weibull_score(shape: float, log_x) -> float:
    y = np.asarray(log_x) - np.max(log_x)
    w = np.exp(shape * y)
    return float(np.dot(w, y) / w.sum() - 1.0 / shape - y.mean())


def _fit_gamma(x):
    s = math.log(x.mean()) - np.log(x).mean()
    if not s > 0:
        raise ConvergenceError("gamma shape diverges for constant samples", [s])
    # Stirling-series approximation to the root of ln k - digamma(k) = s
    k0 = (3 - s + math.sqrt((s - 3) ** 2 + 24 * s)) / (12 * s)
    k, it = _newton(lambda k: gamma_score(k, s),
                    lambda k: 1.0 / k - float(polygamma(1, k)), k0, "gamma shape")
    return (k, k / x.mean()), it


def _fit_weibull(x):
    lx = np.log(x)
    sd = lx.std()
    if not sd > 0:
        raise ConvergenceError("weibull shape diverges for constant samples", [sd])
    y = lx - lx.max()
    ybar = y.mean()

    def g(k):
        w = np.exp(k * y)
        return float(np.dot(w, y) / w.sum() - 1.0 / k - ybar)

    def dg(k):
        w = np.exp(k * y)
        sw = w.sum()
        m1 = np.dot(w, y) / sw
        return float(np.dot(w, y * y) / sw - m1 * m1 + 1.0 / (k * k))

    # log of a Weibull variate is Gumbel with sd pi / (k sqrt 6)
    k0 = math.pi / (math.sqrt(6) * sd)
    k, it = _newton(g, dg, k0, "weibull shape")
    scale = math.exp(lx.max()) * float(np.mean(np.exp(k * y))) ** (1.0 / k)
    return (k, scale), it


def fit(family: str, samples) -> FitResult:
    """MLE fit of one family to the positive part of ``samples``."""
    if family not in FAMILIES:
        raise ValidationError(f"unknown family {family!r}")
    x, dropped = usable_samples(samples)
    if x.size < 2:
        raise InsufficientDataError(
            f"need at least 2 positive samples, got {x.size} ({dropped} dropped)"
        )
    it = 0
    if family == "normal":
        params = (float(x.mean()), float(x.std()))
    elif family == "lognormal":
        lx = np.log(x)
        params = (float(lx.mean()), float(lx.std()))
    elif family == "exponential":
        params = (1.0 / float(x.mean()),)
    elif family == "gamma":
        params, it = _fit_gamma(x)
    else:
        params, it = _fit_weibull(x)
    # normal's location may be any real; every other parameter is positive
    positive = params[1:] if family == "normal" else params
    if not all(math.isfinite(p) for p in params) or not all(p > 0 for p in positive):
        raise ConvergenceError(f"{family} fit produced invalid parameters", params)
    ll = log_likelihood(family, params, x)
    if not math.isfinite(ll):
        raise ConvergenceError(f"{family} log-likelihood is not finite", [ll])
    return FitResult(family, tuple(float(p) for p in params), ll, int(x.size), dropped, it)


def fit_all(samples) -> list[FitResult | FitFailure]:
    """Fit every family on the same usable samples, best log-likelihood first.

    Families that fail are returned as :class:`FitFailure` entries after the
    successful fits, in family-name order.
    """
    x, dropped = usable_samples(samples)
    ok, failed = [], []
    for fam in FAMILIES:
        try:
            r = fit(fam, x)
            ok.append(FitResult(r.family, r.params, r.log_likelihood, r.n, dropped, r.iterations))
        except (ConvergenceError, InsufficientDataError) as exc:
            failed.append(FitFailure(fam, str(exc), int(x.size), dropped))
    ok.sort(key=lambda r: (-r.log_likelihood, r.family))
    failed.sort(key=lambda r: r.family)
    return ok + failed


def best_fit(fits) -> FitResult:
    for f in fits:
        if isinstance(f, FitResult):
            return f
    raise InsufficientDataError("no family could be fitted")


def disc_law(radius: float) -> FitResult:
    """Uninformative radial law: location uniform over a disc of ``radius``."""
    return FitResult("disc", (float(radius),), 0.0, 0)


def _fmt(v) -> str:
    return repr(float(v))


def report_rows(method: str, fits):
    for f in fits:
        if isinstance(f, FitResult):
            p = list(f.params) + [None]
            yield [method, f.family, _fmt(p[0]), "" if p[1] is None else _fmt(p[1]),
                   _fmt(f.log_likelihood), f.n, f.dropped_nonpositive]
        else:
            yield [method, f.family, "", "", "", f.n, f.dropped_nonpositive]


def write_report(path, rows_by_method) -> None:
    """Write the long-format fit report.

    Args:
        rows_by_method: iterable of ``(method, fits)`` pairs.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for method, fits in rows_by_method:
            w.writerows(report_rows(method, fits))
