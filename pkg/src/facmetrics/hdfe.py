"""High-dimensional fixed-effects regression by alternating projections.

Fixed effects are absorbed by iterated (optionally weighted) group-mean
subtraction cycling over the FE dimensions until the matrix stops
changing. Linear models run least squares on the demeaned data; logistic
models run IRLS where every iteration's working-response regression
re-absorbs the fixed effects under the current weights, which converges
to the unconditional MLE. Marginal (average adjusted) predictions keep
each observation's covariates and recovered fixed-effect values and move
only the focal regressor.

Conventions fixed here and echoed in every result:

* Degrees of freedom absorbed by the FEs count exact redundancy (connected
  components) for the first two dimensions and the conservative bound
  (levels - 1) for the third.
* Classical variance uses sigma^2 = RSS / df_resid; HC1 scales the
  sandwich by n / df_resid; cluster SEs scale by G/(G-1) * (n-1)/df_resid.
  These coincide when residuals are homoskedastic and clusters are
  singletons.
* Separation pruning drops, per FE dimension, all observations in groups
  whose binary outcome never varies, iterating across dimensions to a
  fixed point before the logit fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
from scipy.special import expit

from .errors import InputError, NumericalError

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000
LOGIT_MAX_OUTER = 100
COLLINEAR_EPS = 1e-10

Z975 = 1.959963984540054  # scipy.stats.norm.ppf(0.975)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    outcome: str
    regressor_of_interest: str
    controls: tuple[str, ...]
    fe: tuple[str, ...]
    family: str = "linear"  # or "logit"
    se_type: str = "classical"  # classical | robust | cluster

    def __post_init__(self):
        if self.outcome in self.controls:
            raise InputError(f"outcome {self.outcome} cannot be a control")
        if self.family not in ("linear", "logit"):
            raise InputError(f"unknown family {self.family}")
        if self.se_type not in ("classical", "robust", "cluster"):
            raise InputError(f"unknown se_type {self.se_type}")
        if not self.fe:
            raise InputError("at least one fixed-effect dimension is required")


@dataclass
class Dataset:
    """Numeric design columns plus FE id vectors, aligned by row."""
    columns: dict[str, np.ndarray]
    fe: dict[str, np.ndarray]
    n: int

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(
            columns={k: v[mask] for k, v in self.columns.items()},
            fe={k: v[mask] for k, v in self.fe.items()},
            n=int(mask.sum()),
        )


@dataclass
class FitResult:
    spec: ModelSpec
    coef: dict[str, float]
    se: dict[str, float]
    vcov: np.ndarray
    col_names: list[str]
    n_obs_input: int
    n_obs_used: int
    n_dropped_separation: dict[str, int]
    dropped_collinear: list[str]
    r2: float | None
    pseudo_r2: float | None
    converged: bool
    fe_values: np.ndarray
    X: np.ndarray
    y: np.ndarray
    fe_codes: dict[str, np.ndarray]
    fe_level_counts: dict[str, int]
    df_resid: float
    iteration_log: list[str] = field(default_factory=list)

    def pvalue(self, name: str) -> float:
        from scipy.stats import norm
        se = self.se[name]
        if se <= 0:
            return float("nan")
        z = self.coef[name] / se
        return float(2.0 * norm.sf(abs(z)))


@dataclass
class MarginsResult:
    level_label: str
    level: float
    avg_prediction: float
    ci_low: float
    ci_high: float
    se: float


def factorize(ids: np.ndarray) -> tuple[np.ndarray, int]:
    """Dense integer codes for an id vector, plus the level count."""
    _, codes = np.unique(ids, return_inverse=True)
    return codes.astype(np.int64), int(codes.max()) + 1 if len(codes) else 0


def _group_demean(matrix: np.ndarray, codes: np.ndarray, n_groups: int,
                  weights: np.ndarray | None) -> np.ndarray:
    """Subtract (weighted) group means from every column in place."""
    if weights is None:
        counts = np.bincount(codes, minlength=n_groups).astype(np.float64)
        for j in range(matrix.shape[1]):
            sums = np.bincount(codes, weights=matrix[:, j], minlength=n_groups)
            matrix[:, j] -= (sums / counts)[codes]
    else:
        wsums = np.bincount(codes, weights=weights, minlength=n_groups)
        for j in range(matrix.shape[1]):
            sums = np.bincount(codes, weights=weights * matrix[:, j], minlength=n_groups)
            matrix[:, j] -= (sums / wsums)[codes]
    return matrix


def absorb(matrix: np.ndarray, groups: Sequence[tuple[np.ndarray, int]],
           weights: np.ndarray | None = None, tol: float = DEFAULT_TOL,
           max_iter: int = DEFAULT_MAX_ITER) -> tuple[np.ndarray, int]:
    """Project columns off the fixed-effect span by cycling group-mean
    subtraction over the dimensions until the max absolute change over a
    full cycle falls below tol.

    Returns (demeaned copy, iterations). Raises NumericalError when the
    projection has not converged after max_iter cycles, carrying the last
    change norm."""
    out = np.array(matrix, dtype=np.float64, copy=True)
    if out.ndim == 1:
        out = out[:, None]
    if len(groups) == 1:
        codes, n_groups = groups[0]
        _group_demean(out, codes, n_groups, weights)
        return out, 1
    last_change = np.inf
    for it in range(1, max_iter + 1):
        prev = out.copy()
        for codes, n_groups in groups:
            _group_demean(out, codes, n_groups, weights)
        last_change = float(np.max(np.abs(out - prev))) if out.size else 0.0
        if last_change < tol:
            return out, it
    raise NumericalError(
        f"fixed-effect absorption did not converge in {max_iter} iterations "
        f"(last change {last_change:.3e})"
    )


def recover_fe_values(residual: np.ndarray, groups: Sequence[tuple[np.ndarray, int]],
                      weights: np.ndarray | None = None, tol: float = DEFAULT_TOL,
                      max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Per-observation total fixed-effect value: the projection of the
    residual onto the FE span, by backfitted group means."""
    proj, _ = absorb(residual[:, None], groups, weights, tol, max_iter)
    return residual - proj[:, 0]


def n_components_bipartite(codes1: np.ndarray, n1: int,
                           codes2: np.ndarray, n2: int) -> int:
    """Connected components of the bipartite graph joining the first two
    FE dimensions; drives the exact two-way dummy rank."""
    parent = np.arange(n1 + n2)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in zip(codes1, codes2 + n1):
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[ra] = rb
    return len({find(i) for i in range(n1 + n2)})


def fe_degrees_of_freedom(groups: Sequence[tuple[np.ndarray, int]]) -> int:
    """Dummy-rank of the absorbed fixed effects: exact via connected
    components for two dimensions, conservative (levels - 1) for each
    further one."""
    levels = [g[1] for g in groups]
    if len(groups) == 1:
        return levels[0]
    comps = n_components_bipartite(groups[0][0], levels[0], groups[1][0], levels[1])
    df = levels[0] + levels[1] - comps
    for lv in levels[2:]:
        df += lv - 1
    return df


def _drop_collinear(absorbed: np.ndarray, names: list[str]) -> tuple[np.ndarray, list[str], list[str]]:
    keep, dropped = [], []
    for j, name in enumerate(names):
        if absorbed.shape[0] and np.max(np.abs(absorbed[:, j])) < COLLINEAR_EPS:
            dropped.append(name)
        else:
            keep.append(j)
    return absorbed[:, keep], [names[j] for j in keep], dropped


def _check_rank(design: np.ndarray, names: list[str]) -> None:
    """QR with pivoting on norm-scaled columns; names the dependent
    columns on rank deficiency."""
    if design.shape[1] == 0:
        return
    norms = np.sqrt((design * design).sum(axis=0))
    norms[norms == 0] = 1.0
    _, r, piv = scipy.linalg.qr(design / norms, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    cutoff = diag[0] * max(design.shape) * np.finfo(np.float64).eps if diag.size else 0.0
    rank = int((diag > cutoff).sum())
    if rank < design.shape[1]:
        dependent = [names[j] for j in piv[rank:]]
        raise NumericalError(f"rank-deficient design; dependent columns: {dependent}")


def _sandwich_cov(xtwx_inv: np.ndarray, scores: np.ndarray,
                  cluster_codes: np.ndarray | None, n: int, df_resid: float,
                  se_type: str) -> np.ndarray:
    """HC1-style or cluster-robust covariance from per-row score rows
    (x_i * e_i). Correction factors chosen so all three estimators agree
    under homoskedastic residuals with singleton clusters."""
    if se_type == "robust":
        meat = scores.T @ scores
        factor = n / df_resid
    else:
        assert cluster_codes is not None
        n_clusters = int(cluster_codes.max()) + 1
        k = scores.shape[1]
        sums = np.zeros((n_clusters, k))
        for j in range(k):
            sums[:, j] = np.bincount(cluster_codes, weights=scores[:, j], minlength=n_clusters)
        meat = sums.T @ sums
        if n_clusters < 2:
            raise NumericalError("cluster SE needs at least two clusters")
        factor = (n_clusters / (n_clusters - 1)) * ((n - 1) / df_resid)
    return factor * (xtwx_inv @ meat @ xtwx_inv)


def _design(dataset: Dataset, spec: ModelSpec) -> tuple[np.ndarray, np.ndarray, list[str], np.ndarray]:
    """Outcome, design matrix, column names, and the row mask of
    observations with a present (finite) outcome."""
    for col in (spec.outcome, spec.regressor_of_interest, *spec.controls):
        if col not in dataset.columns:
            raise InputError(f"unknown column {col!r}")
    y_all = np.asarray(dataset.columns[spec.outcome], dtype=np.float64)
    mask = np.isfinite(y_all)
    names = [spec.regressor_of_interest, *spec.controls]
    X = np.column_stack([np.asarray(dataset.columns[c], dtype=np.float64) for c in names]) \
        if names else np.empty((dataset.n, 0))
    if not np.isfinite(X[mask]).all():
        raise InputError("non-finite covariate values in design")
    return y_all, X, names, mask


def fit_linear(spec: ModelSpec, dataset: Dataset, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER) -> FitResult:
    """Least squares with absorbed fixed effects.

    R-squared is computed on the original outcome with fitted values
    Xb + recovered FE values, so it includes the fixed effects like a
    dense-dummy regression would."""
    if spec.family != "linear":
        raise InputError("fit_linear requires a linear-family spec")
    y_all, X_all, names, mask = _design(dataset, spec)
    n_input = int(mask.sum())
    if n_input == 0:
        raise InputError(f"no observations with outcome {spec.outcome}")
    sub = dataset.subset(mask)
    y = y_all[mask]
    X = X_all[mask]
    groups = [factorize(sub.fe[dim]) for dim in spec.fe]

    stacked = np.column_stack([y, X])
    absorbed, iters = absorb(stacked, groups, None, tol, max_iter)
    y_t = absorbed[:, 0]
    X_t, kept_names, dropped = _drop_collinear(absorbed[:, 1:], names)
    kept_idx = [names.index(c) for c in kept_names]
    X_kept = X[:, kept_idx]
    _check_rank(X_t, kept_names)

    k = X_t.shape[1]
    df_fe = fe_degrees_of_freedom(groups)
    df_resid = n_input - k - df_fe
    if df_resid <= 0:
        raise NumericalError(f"non-positive residual dof ({df_resid})")

    if k:
        xtx = X_t.T @ X_t
        beta = np.linalg.solve(xtx, X_t.T @ y_t)
        xtx_inv = np.linalg.inv(xtx)
    else:
        beta = np.zeros(0)
        xtx_inv = np.zeros((0, 0))
    resid = y_t - X_t @ beta

    sigma2 = float(resid @ resid) / df_resid
    if spec.se_type == "classical":
        vcov = sigma2 * xtx_inv
    else:
        scores = X_t * resid[:, None]
        cluster = None
        if spec.se_type == "cluster":
            cluster = factorize(sub.fe[spec.fe[0]])[0]
        vcov = _sandwich_cov(xtx_inv, scores, cluster, n_input, df_resid, spec.se_type)

    fe_values = recover_fe_values(y - X_kept @ beta, groups, None, tol, max_iter)
    fitted = X_kept @ beta + fe_values
    tss = float(((y - y.mean()) ** 2).sum())
    rss = float(((y - fitted) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else float("nan")

    se = np.sqrt(np.diag(vcov)) if k else np.zeros(0)
    return FitResult(
        spec=spec,
        coef={c: float(b) for c, b in zip(kept_names, beta)},
        se={c: float(s) for c, s in zip(kept_names, se)},
        vcov=vcov,
        col_names=kept_names,
        n_obs_input=n_input,
        n_obs_used=n_input,
        n_dropped_separation={dim: 0 for dim in spec.fe},
        dropped_collinear=dropped,
        r2=r2,
        pseudo_r2=None,
        converged=True,
        fe_values=fe_values,
        X=X_kept,
        y=y,
        fe_codes={dim: g[0] for dim, g in zip(spec.fe, groups)},
        fe_level_counts={dim: g[1] for dim, g in zip(spec.fe, groups)},
        df_resid=df_resid,
        iteration_log=[f"absorption converged in {iters} cycles"],
    )


def separation_prune(y: np.ndarray, fe_ids: Mapping[str, np.ndarray],
                     dims: Sequence[str]) -> tuple[np.ndarray, dict[str, int]]:
    """Iteratively drop observations in FE groups with no outcome
    variation, cycling dimensions until stable. Returns the keep mask
    and per-dimension drop counts."""
    keep = np.ones(len(y), dtype=bool)
    drops = {dim: 0 for dim in dims}
    changed = True
    while changed:
        changed = False
        for dim in dims:
            idx = np.flatnonzero(keep)
            if idx.size == 0:
                break
            codes, n_groups = factorize(fe_ids[dim][idx])
            sums = np.bincount(codes, weights=y[idx], minlength=n_groups)
            counts = np.bincount(codes, minlength=n_groups)
            bad = (sums == 0) | (sums == counts)
            bad_rows = idx[bad[codes]]
            if bad_rows.size:
                keep[bad_rows] = False
                drops[dim] += int(bad_rows.size)
                changed = True
    return keep, drops


def fit_logit_fe(spec: ModelSpec, dataset: Dataset, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER) -> FitResult:
    """Fixed-effects logistic regression: IRLS with weighted alternating
    projections inside every iteration (unconditional MLE).

    Observations in separated groups are pruned first. Convergence
    requires both the coefficient vector and the recovered per-row FE
    values to move less than tol. McFadden pseudo R-squared compares
    against an intercept-only model on the same pruned sample."""
    if spec.family != "logit":
        raise InputError("fit_logit_fe requires a logit-family spec")
    y_all, X_all, names, mask = _design(dataset, spec)
    n_input = int(mask.sum())
    if n_input == 0:
        raise InputError(f"no observations with outcome {spec.outcome}")
    y_in = y_all[mask]
    if not np.all((y_in == 0.0) | (y_in == 1.0)):
        raise InputError(f"logit outcome {spec.outcome} must be binary")

    sub_all = dataset.subset(mask)
    keep, drops = separation_prune(y_in, sub_all.fe, spec.fe)
    n_used = int(keep.sum())
    if n_used == 0:
        raise NumericalError("no variation: separation pruning removed every observation")

    sub = sub_all.subset(keep)
    y = y_in[keep]
    X = X_all[mask][keep]
    groups = [factorize(sub.fe[dim]) for dim in spec.fe]

    # first pass flags columns constant within the FE span; weights do not
    # change which columns those are
    probe, _ = absorb(X, groups, None, tol, max_iter)
    _, kept_names, dropped = _drop_collinear(probe, names)
    kept_idx = [names.index(c) for c in kept_names]
    X = X[:, kept_idx]
    k = X.shape[1]

    mu = (y + 0.5) / 2.0
    eta = np.log(mu / (1.0 - mu))
    beta = np.zeros(k)
    fe_values = np.zeros(n_used)
    log: list[str] = []
    converged = False
    xtwx_inv = np.zeros((0, 0))
    weights = np.full(n_used, 0.25)

    for outer in range(1, LOGIT_MAX_OUTER + 1):
        weights = np.clip(mu * (1.0 - mu), 1e-10, None)
        z = eta + (y - mu) / weights
        stacked = np.column_stack([z, X])
        absorbed, _ = absorb(stacked, groups, weights, tol, max_iter)
        z_t = absorbed[:, 0]
        X_t = absorbed[:, 1:]
        if k:
            xtwx = X_t.T @ (weights[:, None] * X_t)
            try:
                beta_new = np.linalg.solve(xtwx, X_t.T @ (weights * z_t))
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"singular weighted design at iteration {outer}") from exc
        else:
            beta_new = beta
        fe_new = recover_fe_values(z - X @ beta_new, groups, weights, tol, max_iter)
        delta = max(
            float(np.max(np.abs(beta_new - beta))) if k else 0.0,
            float(np.max(np.abs(fe_new - fe_values))) if n_used else 0.0,
        )
        beta, fe_values = beta_new, fe_new
        eta = X @ beta + fe_values
        mu = np.clip(expit(eta), 1e-12, 1.0 - 1e-12)
        log.append(f"iter {outer}: max change {delta:.3e}")
        if delta < tol:
            converged = True
            if k:
                xtwx = X_t.T @ (weights[:, None] * X_t)
                xtwx_inv = np.linalg.inv(xtwx)
            break
    if not converged:
        raise NumericalError(
            "logit did not converge after "
            f"{LOGIT_MAX_OUTER} outer iterations; trace: {log[-5:]}"
        )

    df_fe = fe_degrees_of_freedom(groups)
    df_resid = n_used - k - df_fe
    if spec.se_type == "classical":
        vcov = xtwx_inv
    else:
        # weighted-demeaned design at convergence for the score rows
        absorbed, _ = absorb(X, groups, weights, tol, max_iter)
        scores = absorbed * (y - mu)[:, None]
        cluster = None
        if spec.se_type == "cluster":
            cluster = factorize(sub.fe[spec.fe[0]])[0]
        vcov = _sandwich_cov(xtwx_inv, scores, cluster, n_used, max(df_resid, 1), spec.se_type)

    loglik = float(np.sum(y * np.log(mu) + (1.0 - y) * np.log(1.0 - mu)))
    p_bar = float(y.mean())
    loglik_null = n_used * (p_bar * np.log(p_bar) + (1.0 - p_bar) * np.log(1.0 - p_bar))
    pseudo_r2 = 1.0 - loglik / loglik_null if loglik_null != 0 else float("nan")

    se = np.sqrt(np.diag(vcov)) if k else np.zeros(0)
    return FitResult(
        spec=spec,
        coef={c: float(b) for c, b in zip(kept_names, beta)},
        se={c: float(s) for c, s in zip(kept_names, se)},
        vcov=vcov,
        col_names=kept_names,
        n_obs_input=n_input,
        n_obs_used=n_used,
        n_dropped_separation=drops,
        dropped_collinear=dropped,
        r2=None,
        pseudo_r2=pseudo_r2,
        converged=converged,
        fe_values=fe_values,
        X=X,
        y=y,
        fe_codes={dim: g[0] for dim, g in zip(spec.fe, groups)},
        fe_level_counts={dim: g[1] for dim, g in zip(spec.fe, groups)},
        df_resid=df_resid,
        iteration_log=log,
    )


def fit(spec: ModelSpec, dataset: Dataset, **kwargs) -> FitResult:
    if spec.family == "logit":
        return fit_logit_fe(spec, dataset, **kwargs)
    return fit_linear(spec, dataset, **kwargs)


def predict_margins(fit_result: FitResult, var: str,
                    levels: Sequence[tuple[str, float]]) -> list[MarginsResult]:
    """Average adjusted predictions: for each level, set `var` to the
    level on every fitted observation, keep all other covariates and the
    recovered FE values, average the predictions. The 95% CI comes from
    the delta method over the coefficient covariance, FE values held
    fixed."""
    if not fit_result.converged:
        raise NumericalError("margins require a converged fit")
    if var not in fit_result.col_names:
        if var in fit_result.dropped_collinear:
            raise NumericalError(f"{var} was dropped as collinear with the fixed effects")
        raise InputError(f"{var} is not a fitted regressor")
    j = fit_result.col_names.index(var)
    beta = np.array([fit_result.coef[c] for c in fit_result.col_names])
    out: list[MarginsResult] = []
    for label, value in levels:
        X_mod = fit_result.X.copy()
        X_mod[:, j] = value
        eta = X_mod @ beta + fit_result.fe_values
        if fit_result.spec.family == "logit":
            p = expit(eta)
            grad = (X_mod * (p * (1.0 - p))[:, None]).mean(axis=0)
            avg = float(p.mean())
        else:
            grad = X_mod.mean(axis=0)
            avg = float(eta.mean())
        var_hat = float(grad @ fit_result.vcov @ grad)
        se = float(np.sqrt(max(var_hat, 0.0)))
        out.append(MarginsResult(
            level_label=label, level=value, avg_prediction=avg,
            ci_low=avg - Z975 * se, ci_high=avg + Z975 * se, se=se,
        ))
    return out


def with_coefficient(fit_result: FitResult, name: str, value: float) -> FitResult:
    """Copy of a fit with one coefficient overridden; used for
    counterfactual margins."""
    coef = dict(fit_result.coef)
    if name not in coef:
        raise InputError(f"{name} is not a fitted regressor")
    coef[name] = value
    return replace(fit_result, coef=coef)
