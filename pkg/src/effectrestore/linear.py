"""Identification of the treatment coefficient under a noisy linear proxy.

Structural model (zero-mean, no intercepts):

    X = c1 Z + e_X
    Y = c2 Z + c0 X + e_Y
    W = c3 Z + e_W          (the proxy; c3 and var(e_W) describe its error)
    V = c_v Z + e_V         (optional second indicator)

The pivotal quantity is lam = c3^2 var(Z), the squared-loading-times-
variance of the proxy.  It is never identified together with c3
separately, but it is all the adjustment needs:

    c0 = [cov(XY) - cov(XW) cov(WY) / lam] / [var(X) - cov^2(XW) / lam]

lam itself comes from one of two sources: an external assessment of the
error variance (lam = var(W) - var(e_W)), or a second independent
indicator V of Z, which identifies it from data alone as
lam = cov(XW) cov(WV) / cov(XV) (the covariance of the two W-edges over
the one that skips W).  In the noiseless limit lam = var(W) and the
formula collapses to the ordinary partial regression coefficient of X
adjusting for W; with noise there is no rescaling of W that makes plain
adjustment unbiased, which is why the lam-corrected form is needed.

All estimators accept either population moments (path-traced, n = 0) or
sample moments; standard errors for sample inputs come from a seeded
nonparametric bootstrap, since no closed-form variances are assumed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import (
    InvalidErrorVarianceError,
    UnidentifiableError,
    ValidationError,
)
from .rng import make_rng

#: relative tolerance certifying a denominator as nonvanishing
TOL_DEN = 1e-9
#: default number of bootstrap resamples
DEFAULT_BOOTSTRAP = 1000

_PAIRS = (
    ("cov_xy", "var_x", "var_y"),
    ("cov_xw", "var_x", "var_w"),
    ("cov_yw", "var_y", "var_w"),
    ("cov_xv", "var_x", "var_v"),
    ("cov_yv", "var_y", "var_v"),
    ("cov_wv", "var_w", "var_v"),
)


@dataclass(frozen=True)
class CovStats:
    """Second moments of the observed variables X, Y, W and optionally V.

    ``n`` is the sample count behind the moments; 0 marks exact
    population values.  Only one triangle is stored; symmetry is by
    construction.
    """

    var_x: float
    var_y: float
    var_w: float
    cov_xy: float
    cov_xw: float
    cov_yw: float
    var_v: float | None = None
    cov_xv: float | None = None
    cov_yv: float | None = None
    cov_wv: float | None = None
    n: int = 0

    def __post_init__(self) -> None:
        for name in ("var_x", "var_y", "var_w", "var_v"):
            v = getattr(self, name)
            if v is None:
                continue
            if not math.isfinite(v) or v < 0.0:
                raise ValidationError(f"{name} must be a finite nonnegative real, got {v!r}")
        v_fields = (self.var_v, self.cov_xv, self.cov_yv, self.cov_wv)
        if any(f is not None for f in v_fields) and any(f is None for f in v_fields):
            raise ValidationError("either supply all V moments or none")
        for cov_name, va_name, vb_name in _PAIRS:
            cov = getattr(self, cov_name)
            if cov is None:
                continue
            if not math.isfinite(cov):
                raise ValidationError(f"{cov_name} must be finite")
            bound = getattr(self, va_name) * getattr(self, vb_name)
            if cov * cov > bound * (1.0 + 3e-9) + 1e-300:
                raise ValidationError(
                    f"|{cov_name}| = {abs(cov):.6g} exceeds the Cauchy-Schwarz bound "
                    f"{math.sqrt(max(bound, 0.0)):.6g}"
                )
        if self.n < 0:
            raise ValidationError("n must be >= 0")

    @property
    def has_v(self) -> bool:
        return self.var_v is not None

    def to_json_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_json_dict(cls, data: dict) -> "CovStats":
        try:
            return cls(**{k: data[k] for k in data})
        except (TypeError, KeyError) as exc:
            raise ValidationError(f"malformed covariance-stats JSON: {exc}") from exc


@dataclass(frozen=True)
class LinearSemSpec:
    """Ground-truth linear model used by the simulator and as an oracle.

    Path coefficients: c0 (X->Y), c1 (Z->X), c2 (Z->Y), c3 (Z->W) and
    optionally c_v (Z->V).  Exogenous variances: var_z, var_ex, var_ey
    must be strictly positive; the measurement noises var_ew / var_ev may
    be zero (a noiseless proxy).
    """

    c0: float
    c1: float
    c2: float
    c3: float
    var_z: float
    var_ex: float
    var_ey: float
    var_ew: float
    c_v: float | None = None
    var_ev: float | None = None

    def __post_init__(self) -> None:
        for name in ("c0", "c1", "c2", "c3", "c_v"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ValidationError(f"{name} must be finite")
        for name, strict in (
            ("var_z", True),
            ("var_ex", True),
            ("var_ey", True),
            ("var_ew", False),
            ("var_ev", False),
        ):
            v = getattr(self, name)
            if v is None:
                continue
            if not math.isfinite(v) or v < 0.0 or (strict and v <= 0.0):
                kind = "positive" if strict else "nonnegative"
                raise ValidationError(f"{name} must be a finite {kind} real, got {v!r}")
        if (self.c_v is None) != (self.var_ev is None):
            raise ValidationError("c_v and var_ev must be supplied together")

    @property
    def has_v(self) -> bool:
        return self.c_v is not None

    def population_cov(self) -> CovStats:
        """Exact population moments by path tracing (sums of products of
        path coefficients and variances along connecting paths)."""
        vz = self.var_z
        total_zy = self.c2 + self.c0 * self.c1  # total Z->Y effect
        var_x = self.c1**2 * vz + self.var_ex
        kwargs: dict = {}
        if self.has_v:
            kwargs = {
                "var_v": self.c_v**2 * vz + self.var_ev,
                "cov_xv": self.c1 * self.c_v * vz,
                "cov_yv": total_zy * self.c_v * vz,
                "cov_wv": self.c3 * self.c_v * vz,
            }
        return CovStats(
            var_x=var_x,
            var_y=total_zy**2 * vz + self.c0**2 * self.var_ex + self.var_ey,
            var_w=self.c3**2 * vz + self.var_ew,
            cov_xy=self.c0 * var_x + self.c1 * self.c2 * vz,
            cov_xw=self.c1 * self.c3 * vz,
            cov_yw=total_zy * self.c3 * vz,
            n=0,
            **kwargs,
        )

    def to_json_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_json_dict(cls, data: dict) -> "LinearSemSpec":
        try:
            return cls(**{k: data[k] for k in data})
        except (TypeError, KeyError) as exc:
            raise ValidationError(f"malformed linear-model JSON: {exc}") from exc


def _require_v(s: CovStats, what: str) -> None:
    if not s.has_v:
        raise ValidationError(f"{what} requires the second-indicator moments (V fields)")


def _check_den(den: float, scale: float, what: str) -> None:
    if abs(den) < TOL_DEN * max(scale, 1e-300):
        raise UnidentifiableError(f"{what} = {den:.3e} vanishes (relative to scale {scale:.3g})")


def lambda_from_two_indicators(s: CovStats) -> float:
    """c3^2 var(Z) from a second indicator: cov(XW) cov(WV) / cov(XV).

    The proxy W appears in both numerator covariances, so its loading
    enters squared while the other loadings cancel.
    """
    _require_v(s, "lambda_from_two_indicators")
    scale = math.sqrt(max(s.var_x * s.var_v, 0.0))
    _check_den(s.cov_xv, scale, "cov(XV)")
    return s.cov_xw * s.cov_wv / s.cov_xv


def lambda_from_error_variance(var_w: float, var_ew: float) -> float:
    """c3^2 var(Z) from an externally assessed error variance: var(W) - var(e_W)."""
    if not math.isfinite(var_w) or var_w <= 0.0:
        raise ValidationError(f"var_w must be positive, got {var_w!r}")
    if not math.isfinite(var_ew) or var_ew < 0.0:
        raise InvalidErrorVarianceError(f"var_ew must be >= 0, got {var_ew!r}")
    if var_ew >= var_w:
        raise InvalidErrorVarianceError(
            f"var_ew = {var_ew:.6g} >= var_w = {var_w:.6g}: the postulated error "
            "variance leaves the proxy no signal"
        )
    return var_w - var_ew


def c0_from_lambda(s: CovStats, lam: float) -> float:
    """Treatment coefficient corrected for proxy error, given lam = c3^2 var(Z)."""
    if not math.isfinite(lam) or lam <= 0.0:
        raise ValidationError(f"lam must be positive, got {lam!r}")
    num = s.cov_xy - s.cov_xw * s.cov_yw / lam
    den = s.var_x - s.cov_xw**2 / lam
    _check_den(den, max(abs(s.var_x), s.cov_xw**2 / lam), "var(X) - cov^2(XW)/lam")
    return num / den


def c0_two_indicator(s: CovStats) -> float:
    """Treatment coefficient with lam estimated from the second indicator.

    Algebraically identical to composing :func:`c0_from_lambda` with
    :func:`lambda_from_two_indicators` (both sides multiplied through by
    cov(WV)):

        c0 = [cov(XY) cov(WV) - cov(YW) cov(XV)]
           / [var(X) cov(WV) - cov(XW) cov(XV)]
    """
    _require_v(s, "c0_two_indicator")
    num = s.cov_xy * s.cov_wv - s.cov_yw * s.cov_xv
    den = s.var_x * s.cov_wv - s.cov_xw * s.cov_xv
    _check_den(den, max(abs(s.var_x * s.cov_wv), abs(s.cov_xw * s.cov_xv)), "denominator")
    return num / den


def c0_noiseless(s: CovStats) -> float:
    """Partial regression coefficient of X adjusting for W (valid when the
    proxy is noiseless, i.e. lam = var(W))."""
    if s.var_x <= 0.0 or s.var_w <= 0.0:
        raise ValidationError("var_x and var_w must be positive")
    beta_yx = s.cov_xy / s.var_x
    beta_yw = s.cov_yw / s.var_w
    beta_wx = s.cov_xw / s.var_x
    beta_xw = s.cov_xw / s.var_w
    den = 1.0 - beta_xw * beta_wx
    if abs(den) < TOL_DEN * max(1.0, abs(beta_xw * beta_wx)):
        raise UnidentifiableError("X and W are collinear; the partial coefficient is undefined")
    return (beta_yx - beta_yw * beta_wx) / den


def c0_error_prone_k(
    beta_yx: float, beta_yw: float, beta_wx: float, beta_xw: float, k: float
) -> float:
    """Error-prone form of the partial coefficient, written in regression
    slopes and the reliability ratio k = 1 - var(e_W)/var(W).

    k = 1 reproduces the noiseless partial regression coefficient; the
    general form equals :func:`c0_from_lambda` with lam = k var(W).
    """
    if not math.isfinite(k) or not 0.0 < k <= 1.0:
        raise ValidationError(f"k must lie in (0, 1], got {k!r}")
    den = 1.0 - beta_xw * beta_wx / k
    if abs(den) < TOL_DEN * max(1.0, abs(beta_xw * beta_wx / k)):
        raise UnidentifiableError("denominator 1 - beta_xw beta_wx / k vanishes")
    return (beta_yx - beta_yw * beta_wx / k) / den


def surrogate_slope(s: CovStats, lam: float) -> float:
    """Identifiable part of the best-linear-estimate slope of Z given W.

    The raw slope cov(ZW)/var(W) involves the unidentified loading c3;
    what the data pin down is lam / var(W), the reliability-type ratio
    equal to k = 1 - var(e_W)/var(W) when lam comes from the error
    variance.
    """
    if s.var_w <= 0.0:
        raise ValidationError("var_w must be positive")
    if not math.isfinite(lam):
        raise ValidationError("lam must be finite")
    return lam / s.var_w


def cov_from_samples(rows: np.ndarray) -> CovStats:
    """Unbiased sample moments (divisor n-1) for columns (x, y, w[, v])."""
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (3, 4):
        raise ValidationError(f"rows must have shape (n, 3) or (n, 4), got {arr.shape}")
    n = arr.shape[0]
    if n < 2:
        raise ValidationError(f"need at least 2 rows to estimate covariances, got {n}")
    cov = np.cov(arr.T, ddof=1)
    if np.any(np.diag(cov) == 0.0):
        which = [("x", "y", "w", "v")[i] for i in np.nonzero(np.diag(cov) == 0.0)[0]]
        warnings.warn(
            f"column(s) {which} are constant: zero variance", RuntimeWarning, stacklevel=2
        )
    kwargs: dict = {}
    if arr.shape[1] == 4:
        kwargs = {
            "var_v": float(cov[3, 3]),
            "cov_xv": float(cov[0, 3]),
            "cov_yv": float(cov[1, 3]),
            "cov_wv": float(cov[2, 3]),
        }
    return CovStats(
        var_x=float(cov[0, 0]),
        var_y=float(cov[1, 1]),
        var_w=float(cov[2, 2]),
        cov_xy=float(cov[0, 1]),
        cov_xw=float(cov[0, 2]),
        cov_yw=float(cov[1, 2]),
        n=n,
        **kwargs,
    )


def bootstrap_se(
    rows: np.ndarray,
    statistic: Callable[[CovStats], float],
    *,
    n_boot: int = DEFAULT_BOOTSTRAP,
    seed: int = 0,
) -> float:
    """Nonparametric bootstrap standard error of a moment statistic.

    Resamples rows with replacement ``n_boot`` times (stream k of
    ``seed`` drives resample k) and returns the standard deviation of
    the statistic across resamples.  Resamples on which the statistic is
    undefined (degenerate denominators) are skipped.
    """
    arr = np.asarray(rows, dtype=float)
    if n_boot < 2:
        raise ValidationError("n_boot must be >= 2")
    n, k = arr.shape
    cols = [arr[:, i] for i in range(k)]
    prods = np.stack(
        [cols[i] * cols[j] for i in range(k) for j in range(i, k)], axis=1
    )
    pair_index = {(i, j): m for m, (i, j) in enumerate(
        (i, j) for i in range(k) for j in range(i, k)
    )}
    values = []
    for b in range(n_boot):
        counts = np.bincount(make_rng(seed, b).integers(0, n, size=n), minlength=n)
        cf = counts.astype(float)
        means = cf @ arr / n
        raw = cf @ prods
        cov = np.empty((k, k))
        for (i, j), m in pair_index.items():
            cov[i, j] = cov[j, i] = (raw[m] - n * means[i] * means[j]) / (n - 1)
        kwargs: dict = {}
        if k == 4:
            kwargs = {
                "var_v": cov[3, 3], "cov_xv": cov[0, 3],
                "cov_yv": cov[1, 3], "cov_wv": cov[2, 3],
            }
        stats = CovStats(
            var_x=cov[0, 0], var_y=cov[1, 1], var_w=cov[2, 2],
            cov_xy=cov[0, 1], cov_xw=cov[0, 2], cov_yw=cov[1, 2],
            n=n, **kwargs,
        )
        try:
            values.append(statistic(stats))
        except UnidentifiableError:
            continue
    if len(values) < 2:
        raise UnidentifiableError("statistic undefined on nearly all bootstrap resamples")
    return float(np.std(values, ddof=1))
