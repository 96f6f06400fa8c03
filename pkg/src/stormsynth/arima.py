"""
ARIMA(p, d, q) for short annual count series.

Estimation is by conditional sum of squares (CSS) on the d-times differenced,
mean-adjusted series: residuals before index ``max(p, q)`` are fixed at zero
and the AR/MA coefficients minimize the sum of the remaining squared one-step
residuals. The optimizer is Nelder-Mead simplex descent started from zero.

The MA polynomial is kept invertible during the search (the objective is
infinite outside that region). Without this wall the conditional residual
recursion turns explosive and the simplex drifts along a ridge of
near-cancelling AR/MA factors instead of converging. AR stationarity is not
enforced; a warning is issued after fitting if it fails.

Sign conventions::

    z_t = w_t - mu,          w = difference(x, d)
    z_t = sum_i phi_i z_{t-i} + e_t + sum_j theta_j e_{t-j}
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

LOGGER = logging.getLogger(__name__)

MAX_ORDER = 6
MAX_ITER = 2000
REL_TOL = 1e-8
VARIANCE_FLOOR = 1e-12


class ArimaFitError(RuntimeError):
    """The optimizer did not converge. ``best_objective`` holds the best CSS seen."""

    def __init__(self, message: str, best_objective: float):
        self.best_objective = best_objective
        super().__init__(f"{message} (best objective {best_objective:.6g})")


@dataclass(frozen=True, order=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self):
        for name in ("p", "d", "q"):
            v = getattr(self, name)
            if not 0 <= v <= MAX_ORDER:
                raise ValueError(f"{name}={v} outside [0, {MAX_ORDER}]")
        if self.d == 0 and self.p + self.q == 0:
            raise ValueError("ARIMA(0,0,0) has no stochastic term")

    @classmethod
    def parse(cls, text: str) -> "ArimaOrder":
        parts = [int(v) for v in text.replace("(", "").replace(")", "").split(",")]
        if len(parts) != 3:
            raise ValueError(f"order must be 'p,d,q', got {text!r}")
        return cls(*parts)

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})"

    @property
    def size(self) -> int:
        return self.p + self.d + self.q


@dataclass(frozen=True)
class ArimaModel:
    order: ArimaOrder
    intercept: float
    ar_coeffs: np.ndarray
    ma_coeffs: np.ndarray
    residual_variance: float
    # state needed to forecast: last p centred values, last q residuals and the
    # last value of each differencing level 0..d-1
    tail_values: np.ndarray = field(repr=False)
    tail_residuals: np.ndarray = field(repr=False)
    tail_levels: np.ndarray = field(repr=False)
    css: float = float("nan")
    n_obs: int = 0

    def to_text(self) -> str:
        def vec(a):
            return ",".join(repr(float(v)) for v in a)
        lines = [
            "# arima model v1",
            f"order = {self.order.p},{self.order.d},{self.order.q}",
            f"intercept = {float(self.intercept)!r}",
            f"ar = {vec(self.ar_coeffs)}",
            f"ma = {vec(self.ma_coeffs)}",
            f"residual_variance = {float(self.residual_variance)!r}",
            f"css = {float(self.css)!r}",
            f"n_obs = {self.n_obs}",
            f"tail_values = {vec(self.tail_values)}",
            f"tail_residuals = {vec(self.tail_residuals)}",
            f"tail_levels = {vec(self.tail_levels)}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ArimaModel":
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                k, _, v = line.partition("=")
                kv[k.strip()] = v.strip()

        def vec(key):
            return np.array([float(v) for v in kv[key].split(",") if v], dtype=float)
        return cls(
            order=ArimaOrder.parse(kv["order"]),
            intercept=float(kv["intercept"]),
            ar_coeffs=vec("ar"),
            ma_coeffs=vec("ma"),
            residual_variance=float(kv["residual_variance"]),
            tail_values=vec("tail_values"),
            tail_residuals=vec("tail_residuals"),
            tail_levels=vec("tail_levels"),
            css=float(kv.get("css", "nan")),
            n_obs=int(kv.get("n_obs", 0)),
        )


def difference(series: Sequence[float], d: int) -> np.ndarray:
    """Apply the first-difference operator ``d`` times."""
    x = np.asarray(series)
    if d < 0:
        raise ValueError("d must be non-negative")
    if len(x) <= d:
        raise ValueError(f"series of length {len(x)} too short for d={d}")
    for _ in range(d):
        x = np.diff(x)
    return x


def undifference(diffed: Sequence[float], heads: Sequence[float]) -> np.ndarray:
    """Invert :func:`difference`; ``heads[k]`` is the first value of level ``k``.

    Integer inputs give integer outputs, so the round trip is exact.
    """
    x = np.asarray(diffed)
    for head in reversed(list(heads)):
        x = np.concatenate([[head], head + np.cumsum(x)])
    return x


def difference_heads(series: Sequence[float], d: int) -> list:
    """First value of each differencing level 0..d-1 (the anchors for :func:`undifference`)."""
    x = np.asarray(series)
    heads = []
    for _ in range(d):
        heads.append(x[0])
        x = np.diff(x)
    return heads


def css_residuals(z: np.ndarray, ar: np.ndarray, ma: np.ndarray) -> np.ndarray:
    """One-step residuals with the pre-sample (indices < max(p, q)) fixed at zero."""
    p, q = len(ar), len(ma)
    m = max(p, q)
    n = len(z)
    e = np.zeros(n)
    if m >= n:
        return e
    u = z[m:].copy()
    for i in range(p):
        u -= ar[i] * z[m - 1 - i:n - 1 - i]
    if q:
        e[m:] = lfilter([1.0], np.concatenate([[1.0], ma]), u)
    else:
        e[m:] = u
    return e


def css_objective(z: np.ndarray, ar: np.ndarray, ma: np.ndarray) -> float:
    m = max(len(ar), len(ma))
    e = css_residuals(z, ar, ma)
    return float(np.dot(e[m:], e[m:]))


def ma_invertible(ma: np.ndarray) -> bool:
    """True when every root of ``1 + sum_j theta_j B^j`` lies outside the unit circle."""
    if len(ma) == 0 or not np.any(ma):
        return True
    return bool(np.all(np.abs(np.roots(np.concatenate([ma[::-1], [1.0]]))) > 1.0))


def _check_roots(order: ArimaOrder, ar: np.ndarray, ma: np.ndarray) -> None:
    if order.p:
        roots = np.roots(np.concatenate([-ar[::-1], [1.0]]))
        if np.any(np.abs(roots) <= 1.0):
            warnings.warn(f"ARIMA{order}: AR polynomial has roots inside the unit circle "
                          "(non-stationary)", RuntimeWarning, stacklevel=3)
    if order.q:
        roots = np.roots(np.concatenate([ma[::-1], [1.0]]))
        if np.any(np.abs(roots) <= 1.0):
            warnings.warn(f"ARIMA{order}: MA polynomial has roots inside the unit circle "
                          "(non-invertible)", RuntimeWarning, stacklevel=3)


def fit(series: Sequence[float], order: ArimaOrder, max_iter: int = MAX_ITER,
        rel_tol: float = REL_TOL) -> ArimaModel:
    """Fit ARIMA(p, d, q) by conditional sum of squares.

    Parameters
    ----------
    series : sequence of float
        Observations in time order.
    order : ArimaOrder
    max_iter : int
        Simplex iteration cap.
    rel_tol : float
        Convergence tolerance on the objective, relative to its value at the
        zero-coefficient start.

    Raises
    ------
    ValueError
        If the differenced series is shorter than ``p + q + 2``.
    ArimaFitError
        If the simplex does not converge within ``max_iter`` iterations.
    """
    x = np.asarray(series, dtype=float)
    p, d, q = order.p, order.d, order.q
    if len(x) <= d:
        raise ValueError(f"series of length {len(x)} too short for d={d}")
    w = difference(x, d)
    if len(w) < p + q + 2:
        raise ValueError(f"differenced series has {len(w)} points; ARIMA{order} needs "
                         f"at least {p + q + 2}")
    if len(w) < 10 * (p + q + 1):
        LOGGER.debug("ARIMA%s on %d points: fewer than the recommended %d",
                     order, len(w), 10 * (p + q + 1))
    mu = float(w.mean())
    z = w - mu

    def objective(theta):
        if q and not ma_invertible(theta[p:]):
            return np.inf
        return css_objective(z, theta[:p], theta[p:])

    x0 = np.zeros(p + q)
    f0 = objective(x0)
    if p + q == 0 or f0 == 0.0:
        params = x0
    else:
        res = minimize(objective, x0, method="Nelder-Mead",
                       options={"maxiter": max_iter, "maxfev": 50 * max_iter,
                                "xatol": 1e-6, "fatol": rel_tol * f0})
        if not res.success:
            raise ArimaFitError(f"ARIMA{order}: {res.message}", float(res.fun))
        params = res.x
        # the simplex only ever keeps its best vertex, but guard the invariant
        if res.fun > f0:
            params = x0
    ar, ma = params[:p].copy(), params[p:].copy()
    _check_roots(order, ar, ma)

    e = css_residuals(z, ar, ma)
    m = max(p, q)
    css = float(np.dot(e[m:], e[m:]))
    variance = max(css / max(len(z) - m, 1), VARIANCE_FLOOR)

    levels = []
    level = x
    for _ in range(d):
        levels.append(level[-1])
        level = np.diff(level)
    return ArimaModel(
        order=order, intercept=mu, ar_coeffs=ar, ma_coeffs=ma,
        residual_variance=variance,
        tail_values=z[len(z) - p:] if p else np.zeros(0),
        tail_residuals=e[len(e) - q:] if q else np.zeros(0),
        tail_levels=np.array(levels, dtype=float),
        css=css, n_obs=len(x),
    )


def forecast(model: ArimaModel, h: int) -> np.ndarray:
    """Point forecasts ``h`` steps ahead with future shocks set to zero."""
    if h < 1:
        raise ValueError("horizon must be >= 1")
    p, q = model.order.p, model.order.q
    zhist = list(model.tail_values)
    ehist = list(model.tail_residuals)
    zf = np.empty(h)
    for step in range(h):
        val = 0.0
        for i in range(1, p + 1):
            val += model.ar_coeffs[i - 1] * zhist[-i]
        for j in range(1, q + 1):
            # residuals beyond the sample are zero
            val += model.ma_coeffs[j - 1] * (ehist[-j] if len(ehist) >= j else 0.0)
        zf[step] = val
        zhist.append(val)
        ehist.append(0.0)
    level = zf + model.intercept
    for anchor in reversed(model.tail_levels):
        level = anchor + np.cumsum(level)
    return level


def forecast_counts(model: ArimaModel, h: int) -> np.ndarray:
    """Forecast rounded to the nearest non-negative integer, per step."""
    return np.maximum(np.rint(forecast(model, h)), 0).astype(np.int64)


def admissible_orders(p_max: int, d_max: int, q_max: int) -> list[ArimaOrder]:
    out = []
    for p, d, q in itertools.product(range(p_max + 1), range(d_max + 1), range(q_max + 1)):
        if d == 0 and p + q == 0:
            continue
        out.append(ArimaOrder(p, d, q))
    return out


def evaluate_orders(series: Sequence[float], p_max: int, d_max: int, q_max: int,
                    holdout: int) -> dict:
    """Holdout RMSE for every admissible order; failed fits map to ``nan``.

    Each order is fitted on ``series[:-holdout]`` and scored on its
    ``holdout``-step forecast of the remaining values.
    """
    x = np.asarray(series, dtype=float)
    if not 1 <= holdout < len(x) / 3:
        raise ValueError(f"holdout must be in [1, {len(x) / 3:.1f}), got {holdout}")
    train, test = x[:-holdout], x[-holdout:]
    table = {}
    for order in admissible_orders(p_max, d_max, q_max):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                model = fit(train, order)
            pred = forecast(model, holdout)
            rmse = float(np.sqrt(np.mean((pred - test) ** 2)))
            if not math.isfinite(rmse):
                rmse = float("nan")
        except (ValueError, ArimaFitError) as exc:
            LOGGER.debug("ARIMA%s skipped: %s", order, exc)
            rmse = float("nan")
        table[order] = rmse
    return table


def select_order(table: dict) -> ArimaOrder:
    """Lowest RMSE; ties go to smaller p+d+q, then lexicographic (p, d, q)."""
    scored = [(rmse, o.size, (o.p, o.d, o.q), o) for o, rmse in table.items()
              if not math.isnan(rmse)]
    if not scored:
        raise ArimaFitError("no admissible order could be fitted", float("nan"))
    return min(scored, key=lambda t: t[:3])[3]


def grid_search(series: Sequence[float], p_max: int, d_max: int, q_max: int,
                holdout: int, reference: Optional[ArimaOrder] = None) -> ArimaOrder:
    """Choose the order with the smallest holdout RMSE.

    The full RMSE table is logged at INFO level, along with ``reference``
    (e.g. a published order) when given.
    """
    table = evaluate_orders(series, p_max, d_max, q_max, holdout)
    best = select_order(table)
    for order, rmse in sorted(table.items()):
        LOGGER.info("ARIMA%s holdout RMSE %.6g", order, rmse)
    LOGGER.info("selected ARIMA%s (RMSE %.6g)", best, table[best])
    if reference is not None and reference in table:
        LOGGER.info("reference ARIMA%s RMSE %.6g", reference, table[reference])
    return best
