# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from cachetools import LRUCache
from scipy import linalg, stats

from .errors import ConfigError, ConvergenceFailure, DegenerateDataError, InsufficientObservations
from .models import ModelFit, SelectionResult, Stage, TraceEntry

__all__ = ('StandardizationParams', 'drop_constant_columns', 'CvPlan', 'fit_stats', 'fit_ols', 'JarqueBera', 'jarque_bera',
           'stepwise_aic', 'default_ridge_grid', 'RidgeCvResult', 'fit_ridge_cv', 'lasso_coordinate_descent',
           'default_lasso_grid', 'fit_lasso', 'LassoCvResult', 'fit_lasso_cv', 'VarianceTarget', 'FixedCount',
           'PcaResult', 'pca_components')
__log__ = logging.getLogger(__name__)

# rss at or below this fraction of tss counts as a perfect fit (AIC/BIC undefined)
PERFECT_FIT_RTOL = 1e-24
LASSO_TOL = 1e-7
LASSO_MAX_SWEEPS = 10_000


def _as_design(X, y) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float).reshape(y.shape[0], -1)
    return X, y


def _columns(columns: Optional[Sequence[str]], p: int) -> Tuple[str, ...]:
    if columns is None:
        return tuple(f"x{i}" for i in range(p))
    columns = tuple(columns)
    if len(columns) != p:
        raise ValueError(f"{len(columns)} column ids for {p} columns")
    if len(set(columns)) != p:
        raise ValueError("column ids must be distinct")
    return columns


def _centered_ss(y: np.ndarray) -> float:
    d = y - y.mean()
    return float(d @ d)


@dataclass(frozen=True, eq=False)
class StandardizationParams:
    columns: Tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray
    y_center: float = 0.0

    @classmethod
    def fit(cls, X: np.ndarray, columns: Sequence[str], y: Optional[np.ndarray] = None) -> StandardizationParams:

        X = np.asarray(X, dtype=float)
        means = X.mean(axis=0)
        sds = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])

        if zero := [c for c, s in zip(columns, sds) if not s > 0]:
            raise DegenerateDataError(f"zero-variance columns cannot be standardized: {', '.join(zero)}")

        return cls(columns=tuple(columns), means=means, sds=sds,
                   y_center=0.0 if y is None else float(np.mean(y)))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.means) / self.sds

    def destandardize(self, beta: np.ndarray) -> Tuple[float, np.ndarray]:
        raw = np.asarray(beta, dtype=float) / self.sds
        return float(self.y_center - raw @ self.means), raw

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "means": [float(v) for v in self.means],
            "sds": [float(v) for v in self.sds],
            "y_center": float(self.y_center),
        }


def drop_constant_columns(X: np.ndarray, columns: Sequence[str]) -> Tuple[np.ndarray, Tuple[str, ...], Tuple[str, ...]]:
    """Split off zero-variance columns, which can be neither standardized nor selected."""

    X = np.asarray(X, dtype=float)
    columns = tuple(columns)

    if not columns:
        return X, columns, ()

    constant = np.ptp(X, axis=0) == 0 if X.shape[0] else np.ones(len(columns), dtype=bool)
    dropped = tuple(c for c, flag in zip(columns, constant) if flag)

    if dropped:
        __log__.warning(f"REGRESS | Excluding zero-variance columns:: {', '.join(dropped)}")

    return X[:, ~constant], tuple(c for c, flag in zip(columns, constant) if not flag), dropped


@dataclass(frozen=True)
class CvPlan:
    n_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if int(self.n_folds) < 2:
            raise ConfigError(f"n_folds must be at least 2, got {self.n_folds}")

    def assign(self, n_rows: int) -> np.ndarray:
        """Fold index per row; folds partition the rows and differ in size by at most one."""
        order = np.random.default_rng(self.seed).permutation(n_rows)
        folds = np.empty(n_rows, dtype=int)
        folds[order] = np.arange(n_rows) % self.n_folds
        return folds

    def to_dict(self) -> dict:
        return {"n_folds": self.n_folds, "seed": self.seed}


def fit_stats(fit: ModelFit) -> ModelFit:
    """Populate r2, adj_r2, aic, bic and pct_dev from rss, tss, n and k."""

    if not fit.tss > 0:
        raise DegenerateDataError("total sum of squares is zero; fit statistics are undefined")

    n, k = fit.n, fit.k

    r2 = min(max(1.0 - fit.rss / fit.tss, 0.0), 1.0)
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / (n - k) if n > k else np.nan

    if fit.rss <= PERFECT_FIT_RTOL * fit.tss:
        aic = bic = None
    else:
        loglik_term = n * np.log(fit.rss / n)
        aic = float(loglik_term + 2 * k)
        bic = float(loglik_term + k * np.log(n))

    if fit.penalized:
        null_rss = fit.null_rss if fit.null_rss is not None else fit.tss
        pct_dev = 1.0 - fit.rss / null_rss
    else:
        pct_dev = r2

    return replace(fit, r2=r2, adj_r2=adj_r2, aic=aic, bic=bic, pct_dev=pct_dev)


def _with_stats(fit: ModelFit) -> ModelFit:
    if fit.tss > 0:
        return fit_stats(fit)
    __log__.debug("REGRESS | Constant response:: statistics left undefined")
    return fit


def fit_ols(X, y, columns: Optional[Sequence[str]] = None, with_intercept: bool = True,
            min_norm: bool = False) -> ModelFit:
    """Least squares through a column-pivoted QR decomposition.

    Columns found numerically dependent on earlier pivots get a zero
    coefficient and are listed in ``ModelFit.deficient``. With ``min_norm``
    an underdetermined system is solved for the minimum-norm coefficients
    instead of raising.
    """

    X, y = _as_design(X, y)
    n, p = X.shape
    columns = _columns(columns, p)

    if n <= p + int(with_intercept) and not min_norm:
        raise InsufficientObservations(f"{n} rows for {p + int(with_intercept)} coefficients")

    if with_intercept:
        x_mean, y_mean = X.mean(axis=0), float(y.mean())
        Xc, yc = X - x_mean, y - y_mean
    else:
        x_mean, y_mean = np.zeros(p), 0.0
        Xc, yc = X, y

    beta = np.zeros(p)
    deficient: Tuple[str, ...] = ()
    rank = 0

    if p and n <= p + int(with_intercept):
        beta = linalg.lstsq(Xc, yc)[0]
        rank = int(np.linalg.matrix_rank(Xc))

    elif p:
        Q, R, piv = linalg.qr(Xc, mode='economic', pivoting=True)
        diag = np.abs(np.diag(R))
        tol = max(n, p) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
        rank = int(np.sum(diag > tol))
        if rank:
            beta[piv[:rank]] = linalg.solve_triangular(R[:rank, :rank], Q[:, :rank].T @ yc)
        deficient = tuple(columns[i] for i in sorted(piv[rank:]))

    intercept = y_mean - float(x_mean @ beta) if with_intercept else 0.0
    residuals = y - (intercept + X @ beta)

    fit = ModelFit(
        intercept=intercept,
        coefficients=dict(zip(columns, (float(b) for b in beta))),
        residuals=residuals,
        n=n,
        k=rank + int(with_intercept),
        rss=float(residuals @ residuals),
        tss=_centered_ss(y) if with_intercept else float(y @ y),
        deficient=deficient,
    )

    return _with_stats(replace(fit, null_rss=fit.tss))


class JarqueBera(NamedTuple):
    statistic: float
    p_value: float


def jarque_bera(residuals) -> JarqueBera:

    residuals = np.asarray(residuals, dtype=float).reshape(-1)

    if residuals.size < 8:
        raise InsufficientObservations(f"Jarque-Bera needs at least 8 residuals, got {residuals.size}")

    if not np.var(residuals) > 0:
        raise DegenerateDataError("Jarque-Bera is undefined for zero-variance residuals")

    result = stats.jarque_bera(residuals)
    return JarqueBera(float(result.statistic), float(result.pvalue))


def _criterion(fit: ModelFit) -> float:
    return -np.inf if fit.aic is None else fit.aic


def _may_add(n: int, n_selected: int, max_terms: Optional[int]) -> bool:
    # k counts the intercept; adding is allowed while n > k + 2
    if max_terms is not None and n_selected >= max_terms:
        return False
    return n > (n_selected + 1) + 2


def _add_criteria(X: np.ndarray, y: np.ndarray, chosen: List[int], rest: List[int], current: ModelFit) -> np.ndarray:
    """AIC of each single-column addition, from the rss drop of the column residualized on the current design."""

    n = X.shape[0]
    design = np.column_stack([np.ones(n), X[:, chosen]])
    Q, R, _ = linalg.qr(design, mode='economic', pivoting=True)
    diag = np.abs(np.diag(R))
    Q = Q[:, :int(np.sum(diag > max(design.shape) * np.finfo(float).eps * diag[0]))]

    cand = X[:, rest]
    Z = cand - Q @ (Q.T @ cand)
    z_norm = np.einsum('ij,ij->j', Z, Z)
    scale = np.einsum('ij,ij->j', cand - cand.mean(axis=0), cand - cand.mean(axis=0))

    # columns already in the span of the design cannot lower rss
    usable = z_norm > 1e-10 * np.maximum(scale, np.finfo(float).tiny)

    gains = np.zeros(len(rest))
    gains[usable] = (Z[:, usable].T @ current.residuals) ** 2 / z_norm[usable]
    rss = np.maximum(current.rss - gains, 0.0)

    k = current.k + 1
    with np.errstate(divide='ignore'):
        aic = n * np.log(rss / n) + 2 * k

    aic[~usable] = np.inf
    return aic


def stepwise_aic(X, y, columns: Sequence[str], direction: str = "bidirectional",
                 max_terms: Optional[int] = None, start: str = "null",
                 stage: Stage = Stage.STEP1, category_id: Optional[str] = None) -> SelectionResult:
    """Bidirectional stepwise selection driven by AIC.

    Every iteration scores all single additions and all single drops and
    applies the move with the lowest resulting AIC, provided it is strictly
    lower than the current AIC. Equal criteria resolve to the lowest
    variable id. Additions are only offered while ``n > k + 2``.
    """

    X, y = _as_design(X, y)
    n, p = X.shape
    columns = _columns(columns, p)

    if n <= 2:
        raise InsufficientObservations(f"stepwise selection needs more than 2 rows, got {n}")

    if direction != "bidirectional":
        raise ConfigError(f"unsupported stepwise direction: {direction}")

    if start not in ("null", "full"):
        raise ConfigError(f"unsupported stepwise start: {start}")

    index = {c: i for i, c in enumerate(columns)}
    cache = LRUCache(maxsize=4096)

    def fit_subset(subset: Sequence[str]) -> ModelFit:
        key = frozenset(subset)
        if (fit := cache.get(key)) is None:
            fit = fit_ols(X[:, [index[c] for c in subset]], y, columns=list(subset))
            cache[key] = fit
        return fit

    if start == "full":
        if n <= p + 3:
            raise InsufficientObservations(f"full-model start needs n > p + 3 ({n} rows, {p} candidates)")
        selected = list(columns)
    else:
        selected = []

    current = fit_subset(selected)
    current_aic = _criterion(current)
    trace: List[TraceEntry] = []
    truncated = False

    while True:

        moves = []
        rest = [c for c in columns if c not in selected]

        if rest:
            add_aic = _add_criteria(X, y, [index[c] for c in selected], [index[c] for c in rest], current)
            if _may_add(n, len(selected), max_terms):
                moves.extend((float(a), c, "add") for a, c in zip(add_aic, rest))
            elif np.min(add_aic) < current_aic:
                truncated = True

        for c in selected:
            moves.append((_criterion(fit_subset([s for s in selected if s != c])), c, "drop"))

        if not moves:
            break

        best_aic, variable, action = min(moves, key=lambda m: (m[0], m[1], m[2]))

        if not best_aic < current_aic:
            break

        proposal = selected + [variable] if action == "add" else [s for s in selected if s != variable]
        proposed = fit_subset(proposal)
        proposed_aic = _criterion(proposed)

        if not proposed_aic < current_aic:
            break

        __log__.debug(f"STEPWISE | Accepted {action}:: {variable} (AIC {current_aic:.4f} -> {proposed_aic:.4f})")

        trace.append(TraceEntry(action=action, variable=variable, before=current_aic, after=proposed_aic))
        selected, current, current_aic = proposal, proposed, proposed_aic

        if np.isneginf(current_aic):
            break

    if truncated:
        __log__.warning(f"STEPWISE | Additions blocked by the term guard:: {category_id or stage.value} "
                        f"({len(selected)} selected, n={n})")

    return SelectionResult(
        stage=stage,
        selected=tuple(selected),
        fit=fit_ols(X[:, [index[c] for c in selected]], y, columns=selected),
        trace=tuple(trace),
        category_id=category_id,
        truncated=truncated,
    )


def default_ridge_grid(Z: np.ndarray, yc: np.ndarray, n_lambdas: int = 100, ratio: float = 1e-4) -> np.ndarray:
    """Log-spaced ridge penalties over [ratio * lambda_max, lambda_max], ascending, with lambda_max = max|Z'yc| / n."""

    lambda_max = float(np.max(np.abs(Z.T @ yc))) / Z.shape[0] if Z.size else 0.0
    if not lambda_max > 0:
        lambda_max = 1.0
    return np.geomspace(ratio * lambda_max, lambda_max, n_lambdas)


def _ridge_path(Z: np.ndarray, yc: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """Ridge coefficients for each penalty (rows) on centered data, through one SVD."""

    U, d, Vt = linalg.svd(Z, full_matrices=False)
    uty = U.T @ yc
    denom = d[None, :] ** 2 + np.asarray(lambdas, dtype=float)[:, None]
    shrink = np.divide(d[None, :], denom, out=np.zeros_like(denom), where=denom > 0)
    return (shrink * uty[None, :]) @ Vt


def _effective_df(Z: np.ndarray, penalty: float) -> float:
    d = linalg.svd(Z, compute_uv=False)
    denom = d ** 2 + penalty
    return float(np.sum(np.divide(d ** 2, denom, out=np.zeros_like(d), where=denom > 0)))


def _fold_transform(X_train: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    means = X_train.mean(axis=0)
    sds = X_train.std(axis=0, ddof=1)
    # a column constant inside one training fold contributes nothing to that fold's fit
    sds = np.where(sds > 0, sds, 1.0)
    return means, sds


def _check_folds(plan: CvPlan, n: int) -> np.ndarray:
    folds = plan.assign(n)
    if np.bincount(folds, minlength=plan.n_folds).min() < 2:
        raise InsufficientObservations(f"{n} rows cannot fill {plan.n_folds} folds with at least 2 rows each")
    return folds


def _select_lambda(lambdas: np.ndarray, cv_mse: np.ndarray) -> int:
    # ties resolve to the larger penalty
    best = np.flatnonzero(cv_mse == cv_mse.min())
    return int(best[np.argmax(lambdas[best])])


def _intercept_only(y: np.ndarray, scaling: StandardizationParams) -> ModelFit:
    fit = fit_ols(np.empty((y.shape[0], 0)), y, columns=[])
    return replace(fit, standardized=True, raw_intercept=fit.intercept, raw_coefficients={})


@dataclass(frozen=True, eq=False)
class RidgeCvResult:
    fit: ModelFit
    lambda_star: float
    lambdas: np.ndarray
    cv_mse: np.ndarray
    cv_se: np.ndarray
    scaling: StandardizationParams

    def to_dict(self) -> dict:
        return {
            "lambda_star": float(self.lambda_star),
            "cv_curve": [
                {"lambda": float(l), "mse": float(m), "se": float(s)}
                for l, m, s in zip(self.lambdas, self.cv_mse, self.cv_se)
            ],
            "scaling": self.scaling.to_dict(),
        }


def fit_ridge_cv(X, y, columns: Sequence[str], lambda_grid: Optional[Sequence[float]] = None,
                 plan: CvPlan = CvPlan(), effective_df: bool = False) -> RidgeCvResult:
    """Ridge regression with the penalty chosen by k-fold cross validation.

    Predictors are standardized and the response centered; the intercept is
    not penalized. Coefficients are reported per standard deviation in
    ``fit.coefficients`` and in original units in ``fit.raw_coefficients``.
    ``fit.k`` is the selected count plus one unless ``effective_df`` asks for
    the trace of the hat matrix instead.
    """

    X, y = _as_design(X, y)
    n, p = X.shape
    columns = _columns(columns, p)
    folds = _check_folds(plan, n)

    scaling = StandardizationParams.fit(X, columns, y)

    if p == 0:
        fit = _intercept_only(y, scaling)
        return RidgeCvResult(fit=fit, lambda_star=0.0, lambdas=np.zeros(0), cv_mse=np.zeros(0),
                             cv_se=np.zeros(0), scaling=scaling)

    Z = scaling.transform(X)
    yc = y - scaling.y_center

    if lambda_grid is None:
        lambdas = default_ridge_grid(Z, yc)
    else:
        lambdas = np.sort(np.asarray(lambda_grid, dtype=float).reshape(-1))
        if not lambdas.size or lambdas[0] < 0:
            raise ConfigError("ridge lambda grid must be non-empty and non-negative")

    errors = np.zeros((plan.n_folds, lambdas.size))

    for f in range(plan.n_folds):
        train = folds != f
        means, sds = _fold_transform(X[train])
        y_mean = float(y[train].mean())
        betas = _ridge_path((X[train] - means) / sds, y[train] - y_mean, lambdas)
        predictions = y_mean + ((X[~train] - means) / sds) @ betas.T
        errors[f] = ((y[~train, None] - predictions) ** 2).mean(axis=0)

    cv_mse = errors.mean(axis=0)
    cv_se = errors.std(axis=0, ddof=1) / np.sqrt(plan.n_folds)
    lambda_star = float(lambdas[_select_lambda(lambdas, cv_mse)])

    beta = _ridge_path(Z, yc, np.array([lambda_star]))[0]
    residuals = y - (scaling.y_center + Z @ beta)
    raw_intercept, raw = scaling.destandardize(beta)
    tss = _centered_ss(y)

    fit = ModelFit(
        intercept=scaling.y_center,
        coefficients=dict(zip(columns, (float(b) for b in beta))),
        residuals=residuals,
        n=n,
        k=(_effective_df(Z, lambda_star) if effective_df else p) + 1,
        rss=float(residuals @ residuals),
        tss=tss,
        standardized=True,
        penalized=lambda_star > 0,
        null_rss=tss,
        penalty=lambda_star,
        raw_intercept=raw_intercept,
        raw_coefficients=dict(zip(columns, (float(b) for b in raw))),
    )

    __log__.debug(f"RIDGE | Penalty selected:: {lambda_star:.6g} over {lambdas.size} values, {plan.n_folds} folds")

    return RidgeCvResult(fit=_with_stats(fit), lambda_star=lambda_star, lambdas=lambdas,
                         cv_mse=cv_mse, cv_se=cv_se, scaling=scaling)


def _soft_threshold(value: float, threshold: float) -> float:
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


class LassoSolution(NamedTuple):
    beta: np.ndarray
    sweeps: int
    max_change: float
    converged: bool


def lasso_coordinate_descent(Z: np.ndarray, yc: np.ndarray, penalty: float, beta0: Optional[np.ndarray] = None,
                             tol: float = LASSO_TOL, max_sweeps: int = LASSO_MAX_SWEEPS) -> LassoSolution:
    """Minimize ``rss / (2n) + penalty * sum(|beta|)`` on centered data.

    Full sweeps alternate with sweeps over the nonzero coefficients until a
    full sweep moves no coefficient by ``tol`` or more.
    """

    n, p = Z.shape
    col_sq = np.einsum('ij,ij->j', Z, Z) / n
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    residual = yc - Z @ beta
    sweeps = 0
    max_change = np.inf

    def sweep(indices) -> float:
        largest = 0.0
        for j in indices:
            if col_sq[j] == 0:
                continue
            old = beta[j]
            rho = float(Z[:, j] @ residual) / n + col_sq[j] * old
            new = _soft_threshold(rho, penalty) / col_sq[j]
            if new != old:
                residual[:] -= Z[:, j] * (new - old)
                beta[j] = new
                largest = max(largest, abs(new - old))
        return largest

    while sweeps < max_sweeps:
        max_change = sweep(range(p))
        sweeps += 1
        if max_change < tol:
            return LassoSolution(beta, sweeps, max_change, True)

        active = np.flatnonzero(beta)
        while sweeps < max_sweeps:
            inner = sweep(active)
            sweeps += 1
            if inner < tol:
                break

    return LassoSolution(beta, sweeps, max_change, max_change < tol)


def default_lasso_grid(Z: np.ndarray, yc: np.ndarray, n_lambdas: int = 100) -> np.ndarray:
    """Log-spaced penalties from the all-zero threshold downwards, descending."""

    n, p = Z.shape
    lambda_max = float(np.max(np.abs(Z.T @ yc))) / n if Z.size else 0.0
    if not lambda_max > 0:
        lambda_max = 1.0
    ratio = 1e-4 if n > p else 1e-2
    return np.geomspace(lambda_max, ratio * lambda_max, n_lambdas)


def _lasso_fit(X: np.ndarray, y: np.ndarray, columns: Tuple[str, ...], scaling: StandardizationParams,
               beta: np.ndarray, penalty: float) -> ModelFit:

    Z = scaling.transform(X)
    residuals = y - (scaling.y_center + Z @ beta)
    raw_intercept, raw = scaling.destandardize(beta)
    tss = _centered_ss(y)

    fit = ModelFit(
        intercept=scaling.y_center,
        coefficients=dict(zip(columns, (float(b) for b in beta))),
        residuals=residuals,
        n=X.shape[0],
        k=int(np.count_nonzero(beta)) + 1,
        rss=float(residuals @ residuals),
        tss=tss,
        standardized=True,
        penalized=penalty > 0,
        null_rss=tss,
        penalty=penalty,
        raw_intercept=raw_intercept,
        raw_coefficients=dict(zip(columns, (float(b) for b in raw))),
    )
    return _with_stats(fit)


def fit_lasso(X, y, columns: Sequence[str], penalty: float, strict: bool = False) -> ModelFit:
    """Lasso at a single penalty on standardized predictors."""

    X, y = _as_design(X, y)
    columns = _columns(columns, X.shape[1])
    scaling = StandardizationParams.fit(X, columns, y)
    solution = lasso_coordinate_descent(scaling.transform(X), y - scaling.y_center, penalty)

    if not solution.converged:
        if strict:
            raise ConvergenceFailure(solution.max_change, solution.sweeps)
        __log__.warning(f"LASSO | Not converged:: max change {solution.max_change:.3e} "
                        f"after {solution.sweeps} sweeps")

    return _lasso_fit(X, y, columns, scaling, solution.beta, penalty)


@dataclass(frozen=True, eq=False)
class LassoCvResult:
    fit: ModelFit
    lambda_star: float
    selected: Tuple[str, ...]
    lambdas: np.ndarray
    cv_mse: np.ndarray
    converged: bool
    achieved_tol: float

    def to_dict(self) -> dict:
        return {
            "lambda_star": float(self.lambda_star),
            "selected": list(self.selected),
            "converged": self.converged,
            "achieved_tol": float(self.achieved_tol),
            "cv_curve": [{"lambda": float(l), "mse": float(m)} for l, m in zip(self.lambdas, self.cv_mse)],
        }


def _lasso_path(Z: np.ndarray, yc: np.ndarray, lambdas: np.ndarray) -> Tuple[np.ndarray, float]:
    betas = np.zeros((lambdas.size, Z.shape[1]))
    beta = None
    worst = 0.0
    for i, penalty in enumerate(lambdas):
        solution = lasso_coordinate_descent(Z, yc, float(penalty), beta0=beta)
        beta = solution.beta
        betas[i] = beta
        if not solution.converged:
            worst = max(worst, solution.max_change)
    return betas, worst


def fit_lasso_cv(X, y, columns: Sequence[str], lambda_grid: Optional[Sequence[float]] = None,
                 plan: CvPlan = CvPlan()) -> LassoCvResult:
    """Lasso with the penalty at minimum mean cross-validated MSE (ties go to the larger penalty)."""

    X, y = _as_design(X, y)
    n, p = X.shape
    columns = _columns(columns, p)
    folds = _check_folds(plan, n)
    scaling = StandardizationParams.fit(X, columns, y)

    if p == 0:
        fit = _intercept_only(y, scaling)
        return LassoCvResult(fit=fit, lambda_star=0.0, selected=(), lambdas=np.zeros(0),
                             cv_mse=np.zeros(0), converged=True, achieved_tol=0.0)

    Z = scaling.transform(X)
    yc = y - scaling.y_center

    if lambda_grid is None:
        lambdas = default_lasso_grid(Z, yc)
    else:
        lambdas = np.sort(np.asarray(lambda_grid, dtype=float).reshape(-1))[::-1]
        if not lambdas.size or lambdas[-1] < 0:
            raise ConfigError("lasso lambda grid must be non-empty and non-negative")

    errors = np.zeros((plan.n_folds, lambdas.size))
    worst = 0.0

    for f in range(plan.n_folds):
        train = folds != f
        means, sds = _fold_transform(X[train])
        y_mean = float(y[train].mean())
        betas, fold_worst = _lasso_path((X[train] - means) / sds, y[train] - y_mean, lambdas)
        worst = max(worst, fold_worst)
        predictions = y_mean + ((X[~train] - means) / sds) @ betas.T
        errors[f] = ((y[~train, None] - predictions) ** 2).mean(axis=0)

    cv_mse = errors.mean(axis=0)
    lambda_star = float(lambdas[_select_lambda(lambdas, cv_mse)])

    # warm start down the path to the chosen penalty
    betas, full_worst = _lasso_path(Z, yc, lambdas[lambdas >= lambda_star])
    worst = max(worst, full_worst)
    beta = betas[-1]

    if worst > 0:
        __log__.warning(f"LASSO | Not converged on every penalty:: worst max change {worst:.3e}")

    fit = _lasso_fit(X, y, columns, scaling, beta, lambda_star)
    selected = tuple(c for c, b in zip(columns, beta) if b != 0)

    return LassoCvResult(fit=fit, lambda_star=lambda_star, selected=selected, lambdas=lambdas,
                         cv_mse=cv_mse, converged=worst == 0, achieved_tol=worst)


@dataclass(frozen=True)
class VarianceTarget:
    fraction: float


@dataclass(frozen=True)
class FixedCount:
    count: int


@dataclass(frozen=True, eq=False)
class PcaResult:
    loadings: np.ndarray
    scores: np.ndarray
    explained_ratio: np.ndarray
    n_components: int
    rank: int
    scaling: StandardizationParams

    def reconstruct(self) -> np.ndarray:
        return self.scores @ self.loadings.T

    def transform(self, X: np.ndarray) -> np.ndarray:
        return self.scaling.transform(X) @ self.loadings


def pca_components(X, columns: Sequence[str], mode: Union[VarianceTarget, FixedCount]) -> PcaResult:
    """Principal components of the standardized predictors through an SVD.

    Each component is signed so that its largest-magnitude loading is positive.
    ``explained_ratio`` covers every component, sorted descending.
    """

    X = np.asarray(X, dtype=float)
    n, p = X.shape
    columns = _columns(columns, p)

    if n < 2:
        raise InsufficientObservations("PCA needs at least 2 rows")

    scaling = StandardizationParams.fit(X, columns)
    Z = scaling.transform(X)

    U, d, Vt = linalg.svd(Z, full_matrices=False)
    total = float(np.sum(d ** 2))
    ratio = d ** 2 / total if total > 0 else np.zeros_like(d)
    rank = int(np.sum(d > max(n, p) * np.finfo(float).eps * (d[0] if d.size else 0.0)))

    for i in range(Vt.shape[0]):
        if Vt[i, np.argmax(np.abs(Vt[i]))] < 0:
            Vt[i] *= -1
            U[:, i] *= -1

    if isinstance(mode, VarianceTarget):
        if not 0 < mode.fraction <= 1:
            raise ConfigError(f"variance target must be in (0, 1], got {mode.fraction}")
        m = int(np.searchsorted(np.cumsum(ratio), mode.fraction - 1e-12) + 1)
        m = min(m, d.size)
    elif isinstance(mode, FixedCount):
        if mode.count < 0:
            raise ConfigError(f"component count must be non-negative, got {mode.count}")
        if mode.count > rank:
            raise DegenerateDataError(f"{mode.count} components requested but X has rank {rank}")
        m = mode.count
    else:
        raise ConfigError(f"unknown PCA mode: {mode!r}")

    loadings = Vt[:m].T
    return PcaResult(loadings=loadings, scores=Z @ loadings, explained_ratio=ratio,
                     n_components=m, rank=rank, scaling=scaling)
