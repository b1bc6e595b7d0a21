"""Binary demand estimation: spline-in-income probit with shape constraints.

The demand model is

    q_1(p, y, x) = Phi(beta_p * p + B(y) @ beta_y + x @ beta_x),

with ``B`` a clamped B-spline basis.  Because the basis sums to one, the
spline absorbs the intercept.  Two families of linear constraints keep
demand falling in price and along the direction ``(1, 1)``:

    beta_p <= 0,    beta_p + B'(y_g) @ beta_y <= 0   for grid incomes y_g.

Price endogeneity is handled by a control function: the first-stage residual
of price on an instrument and the exogenous regressors enters the probit
linearly, and the structural index is recovered by rescaling.
"""
import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, special, stats

from .choice_model import EstimatedSplineProbit, ModelError
from .splines import SplineBasis, build_spline_basis

log = logging.getLogger(__name__)

FIT_SCHEMA = "welfareid.fit/1"
FEAS_TOL = 1e-9
MAX_PENALTY = 1e8


class EstimationError(RuntimeError):
    """Estimation could not produce a valid fit."""


class DataError(ValueError):
    """Malformed or incomplete estimation data."""


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EstimationDataset:
    """Household rows; ``price`` may hold NaN for non-purchasers before imputation."""

    choice: np.ndarray
    price: np.ndarray
    income: np.ndarray
    instrument: np.ndarray
    cluster: np.ndarray
    stratum: np.ndarray
    covariates: np.ndarray = None
    covariate_names: tuple = ()

    def __post_init__(self):
        n = np.asarray(self.choice).size
        cov = np.zeros((n, 0)) if self.covariates is None else np.asarray(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov[:, None]
        object.__setattr__(self, "choice", np.asarray(self.choice, dtype=np.int8).ravel())
        for name in ("price", "income", "instrument"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        object.__setattr__(self, "cluster", np.asarray(self.cluster).ravel())
        object.__setattr__(self, "stratum", np.asarray(self.stratum).ravel())
        object.__setattr__(self, "covariates", cov)
        names = tuple(self.covariate_names) or tuple(f"x{k + 1}" for k in range(cov.shape[1]))
        object.__setattr__(self, "covariate_names", names)
        sizes = {a.shape[0] for a in (self.price, self.income, self.instrument, self.cluster,
                                      self.stratum, cov)}
        if sizes != {n}:
            raise DataError("all dataset columns must have the same length")
        if len(names) != cov.shape[1]:
            raise DataError("covariate names do not match covariate columns")
        if not np.all(np.isin(self.choice, (0, 1))):
            raise DataError("choice must be 0 or 1")
        if not np.all(self.income > 0) or not np.all(np.isfinite(self.instrument)):
            raise DataError("income must be positive and the instrument finite")
        if not np.all(np.isfinite(cov)):
            raise DataError("covariates must be finite")
        priced = ~np.isnan(self.price)
        if np.any(self.price[priced] <= 0) or not np.all(np.isfinite(self.price[priced])):
            raise DataError("observed prices must be positive and finite")
        if np.any(np.isnan(self.price[self.choice == 1])):
            raise DataError("purchasers must have an observed price")

    @property
    def n(self):
        return self.choice.size

    @property
    def complete(self):
        return not np.any(np.isnan(self.price))

    def take(self, rows):
        rows = np.asarray(rows)
        return EstimationDataset(self.choice[rows], self.price[rows], self.income[rows],
                                 self.instrument[rows], self.cluster[rows], self.stratum[rows],
                                 self.covariates[rows], self.covariate_names)

    def with_prices(self, price):
        return EstimationDataset(self.choice, price, self.income, self.instrument, self.cluster,
                                 self.stratum, self.covariates, self.covariate_names)

    def to_csv(self, path):
        header = ["choice", "price", "income", "instrument", "cluster", "stratum",
                  *self.covariate_names]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.n):
                price = "" if np.isnan(self.price[i]) else format(self.price[i], ".17g")
                w.writerow([int(self.choice[i]), price, format(self.income[i], ".17g"),
                            format(self.instrument[i], ".17g"), self.cluster[i], self.stratum[i],
                            *(format(v, ".17g") for v in self.covariates[i])])


REQUIRED_COLUMNS = ("choice", "price", "income", "instrument", "cluster", "stratum")


def load_dataset_csv(path) -> EstimationDataset:
    """Read the estimation CSV; extra columns are covariates, empty prices are missing."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    if not body:
        raise DataError(f"{path}: no data rows")
    cov_names = tuple(h for h in header if h not in REQUIRED_COLUMNS)
    col = {h: i for i, h in enumerate(header)}

    def num(r, name, allow_empty=False):
        text = r[col[name]].strip()
        if allow_empty and text == "":
            return math.nan
        return float(text)
    try:
        return EstimationDataset(
            choice=[int(float(r[col["choice"]])) for r in body],
            price=[num(r, "price", True) for r in body],
            income=[num(r, "income") for r in body],
            instrument=[num(r, "instrument") for r in body],
            cluster=[r[col["cluster"]] for r in body],
            stratum=[r[col["stratum"]] for r in body],
            covariates=np.array([[num(r, c) for c in cov_names] for r in body]).reshape(len(body), -1),
            covariate_names=cov_names,
        )
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# price imputation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImputationReport:
    imputed_rows: int
    fallback_clusters: tuple


def impute_prices(data: EstimationDataset):
    """Fill missing prices with the mean purchaser price in the row's cluster.

    Clusters without purchasers fall back to the stratum mean of purchaser
    prices and are listed in the report.  Purchasers keep their own price.
    """
    price = data.price.copy()
    missing = np.isnan(price)
    if not missing.any():
        return data, ImputationReport(0, ())
    buyers = ~missing
    cluster_mean = {}
    for c in np.unique(data.cluster[buyers]):
        sel = buyers & (data.cluster == c)
        cluster_mean[c] = price[sel].mean()
    stratum_mean = {}
    for s in np.unique(data.stratum[buyers]):
        sel = buyers & (data.stratum == s)
        stratum_mean[s] = price[sel].mean()
    fallback = []
    for c in np.unique(data.cluster[missing]):
        rows = missing & (data.cluster == c)
        if c in cluster_mean:
            price[rows] = cluster_mean[c]
            continue
        strata = np.unique(data.stratum[rows])
        for s in strata:
            if s not in stratum_mean:
                raise DataError(f"cluster {c!r}: no purchasers in cluster or stratum {s!r}")
            price[rows & (data.stratum == s)] = stratum_mean[s]
        fallback.append(str(c))
    if fallback:
        log.warning("price imputation fell back to stratum means for %d clusters", len(fallback))
    return data.with_prices(price), ImputationReport(int(missing.sum()), tuple(fallback))


# ---------------------------------------------------------------------------
# first stage
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FirstStage:
    """OLS of price on the instrument and the exogenous regressors."""

    coefficients: np.ndarray
    names: tuple
    std_errors: np.ndarray
    residuals: np.ndarray = field(repr=False)
    residual_variance: float
    f_statistic: float
    f_pvalue: float

    @property
    def degenerate(self):
        return math.isinf(self.f_statistic)

    def summary(self):
        return {"coefficients": dict(zip(self.names, map(float, self.coefficients))),
                "residual_variance": float(self.residual_variance),
                "f_statistic": float(self.f_statistic), "f_pvalue": float(self.f_pvalue)}


def _exogenous_design(data, basis):
    if basis is None:
        cols, names = [np.ones(data.n)], ["const"]
    else:
        B = basis(np.clip(data.income, basis.y_min, basis.y_max))
        cols, names = [B], [f"spline{k + 1}" for k in range(basis.size)]
    cols.append(data.covariates)
    names += list(data.covariate_names)
    return np.column_stack(cols), names


def first_stage(data: EstimationDataset, basis: SplineBasis = None) -> FirstStage:
    """Regress price on the instrument, the income basis and covariates.

    ``F`` tests exclusion of the instrument (one restriction).  An exact fit
    gives ``F = inf`` with p-value 0.
    """
    if not data.complete:
        raise DataError("first stage needs complete prices; run impute_prices first")
    if np.ptp(data.instrument) == 0:
        raise DataError("instrument is constant")
    exog, names = _exogenous_design(data, basis)
    X = np.column_stack([data.instrument, exog])
    names = ["instrument", *names]
    n, k = X.shape
    if n <= k:
        raise DataError("more first-stage regressors than observations")
    if np.linalg.matrix_rank(X) < k:
        raise DataError("first-stage design is collinear")
    coef, *_ = np.linalg.lstsq(X, data.price, rcond=None)
    resid = data.price - X @ coef
    dof = n - k
    sigma2 = float(resid @ resid / dof)
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(np.maximum(np.diag(xtx_inv) * sigma2, 0.0))
    tiny = sigma2 <= 1e-24 * max(1.0, float(np.var(data.price)))
    if tiny:
        F, pval = math.inf, 0.0
        resid = np.zeros_like(resid)
    else:
        F = float((coef[0] / se[0]) ** 2)
        pval = float(stats.f.sf(F, 1, dof))
    return FirstStage(coef, tuple(names), se, resid, sigma2, F, pval)


# ---------------------------------------------------------------------------
# constrained probit
# ---------------------------------------------------------------------------

def _probit_terms(theta, X, s):
    """Log-likelihood, gradient and Hessian of ``sum log Phi(s * X theta)``."""
    t = s * (X @ theta)
    logcdf = special.log_ndtr(t)
    mills = np.exp(-0.5 * t * t - 0.5 * np.log(2 * np.pi) - logcdf)
    ll = float(logcdf.sum())
    grad = X.T @ (s * mills)
    w = mills * (t + mills)
    hess = -(X.T * w) @ X
    return ll, grad, hess


def _newton(F, theta, max_iter=200, tol=1e-10):
    """Damped Newton for a smooth concave maximisation ``F -> (val, grad, hess)``."""
    val, g, H = F(theta)
    for _ in range(max_iter):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", linalg.LinAlgWarning)
                step = linalg.solve(-H, g, assume_a="pos")
        except (linalg.LinAlgError, linalg.LinAlgWarning, ValueError):
            ridge = 1e-10 * max(1.0, float(np.max(np.abs(np.diag(H)))))
            step = linalg.lstsq(-H + ridge * np.eye(H.shape[0]), g)[0]
        dec = float(g @ step)
        # the decrement is relative to |val|: sums over many rows carry rounding noise
        size = max(1.0, abs(val))
        if dec < 2 * tol * size:
            return theta, val, True
        a = 1.0
        while a > 1e-12:
            cand = theta + a * step
            cval, cg, cH = F(cand)
            if np.isfinite(cval) and cval >= val + 1e-4 * a * dec:
                break
            a *= 0.5
        else:
            # no ascent possible: converged if only rounding noise is left
            return theta, val, dec < 1e3 * tol * size
        theta, val, g, H = cand, cval, cg, cH
    return theta, val, False


@dataclass(frozen=True)
class ConstraintSet:
    """Homogeneous linear constraints ``G @ theta <= 0`` on the raw index."""

    G: np.ndarray
    grid: np.ndarray

    def violation(self, theta):
        return float(np.max(self.G @ theta, initial=-np.inf))


def _constraint_rows(basis, grid, layout):
    n_par = layout["size"]
    G = np.zeros((1 + grid.size, n_par))
    G[:, layout["price"]] = 1.0
    dB = basis.derivative_basis(grid) @ basis.derivative_matrix
    G[1:, layout["spline"]] = dB
    return G


def _augmented_lagrangian(ll_fn, G, theta0, tol=FEAS_TOL, max_outer=60):
    lam = np.zeros(G.shape[0])
    mu = 10.0
    theta = theta0
    last_viol = np.inf
    for _ in range(max_outer):
        def F(th, lam=lam, mu=mu):
            ll, g, H = ll_fn(th)
            shifted = np.maximum(lam + mu * (G @ th), 0.0)
            pen = float((shifted @ shifted - lam @ lam) / (2 * mu))
            act = shifted > 0
            return (ll - pen, g - G.T @ shifted, H - mu * (G[act].T @ G[act]))
        theta, _, _ = _newton(F, theta)
        gth = G @ theta
        lam = np.maximum(lam + mu * gth, 0.0)
        viol = float(np.max(gth, initial=0.0))
        if viol <= tol:
            return theta, lam
        if viol > 0.25 * last_viol:
            mu = min(10.0 * mu, MAX_PENALTY)
        last_viol = viol
    return theta, lam


def _active_set_polish(ll_fn, G, theta, lam):
    """Newton on a face ``G_W theta = 0``, starting from the face the multipliers pick.

    A face is accepted once non-negative multipliers reproduce the gradient
    as well as unrestricted ones do; otherwise the constraint with the most
    negative least-squares multiplier leaves the working set.
    """
    gth = G @ theta
    work = np.flatnonzero((lam > 0) | (gth > -1e-8))
    if work.size == 0:
        return theta
    for _ in range(work.size):
        A = G[work]
        # null-space parametrisation theta = N @ u keeps the face exactly
        _, sv, vt = np.linalg.svd(A)
        rank = int(np.sum(sv > 1e-10 * sv[0]))
        N = vt[rank:].T
        if N.shape[1] == 0:
            return theta

        def F(u, N=N):
            ll, g, H = ll_fn(N @ u)
            return ll, N.T @ g, N.T @ H @ N
        u, _, ok = _newton(F, N.T @ theta)
        if not ok:
            return theta
        cand = N @ u
        _, g, _ = ll_fn(cand)
        # faces are often degenerate, so multipliers are not unique: compare the
        # best non-negative fit with the best unrestricted one
        mult, *_ = np.linalg.lstsq(A.T, g, rcond=None)
        base = float(np.linalg.norm(A.T @ mult - g))
        _, resid = optimize.nnls(A.T, g)
        if resid <= base + 1e-6 * max(1.0, float(np.linalg.norm(g))):
            return cand if np.max(G @ cand) <= FEAS_TOL else theta
        work = np.delete(work, int(np.argmin(mult)))
    return theta


@dataclass(frozen=True)
class DemandFit:
    """A fitted spline probit.

    ``theta`` is the raw second-stage index on columns
    ``[price, spline..., covariates..., control]``; structural coefficients
    divide out the control-function scale ``sqrt(1 + rho^2 sigma_v^2)``.
    """

    theta: np.ndarray
    basis: SplineBasis
    covariate_names: tuple
    control_function: bool
    first_stage: dict
    constraint_grid: np.ndarray
    loglik: float
    n: int
    covariate_means: np.ndarray
    covariate_range: np.ndarray
    max_violation: float
    audit_violation: float

    @property
    def _k(self):
        return self.basis.size

    @property
    def rho(self):
        return float(self.theta[-1]) if self.control_function else 0.0

    @property
    def scale(self):
        if not self.control_function:
            return 1.0
        return 1.0 / math.sqrt(1.0 + self.rho ** 2 * self.first_stage["residual_variance"])

    @property
    def beta_p(self):
        return float(self.theta[0] * self.scale)

    @property
    def beta_y(self):
        return self.theta[1:1 + self._k] * self.scale

    @property
    def beta_x(self):
        k = self._k
        return self.theta[1 + k:1 + k + len(self.covariate_names)] * self.scale

    def to_dict(self):
        return {
            "schema": FIT_SCHEMA,
            "theta": [float(v) for v in self.theta],
            "basis": self.basis.to_dict(),
            "covariate_names": list(self.covariate_names),
            "control_function": self.control_function,
            "first_stage": self.first_stage,
            "constraint_grid": [float(v) for v in self.constraint_grid],
            "loglik": self.loglik,
            "n": self.n,
            "covariate_means": [float(v) for v in self.covariate_means],
            "covariate_range": [[float(a), float(b)] for a, b in self.covariate_range],
            "max_violation": self.max_violation,
            "audit_violation": self.audit_violation,
            "structural": {"beta_p": self.beta_p, "beta_y": [float(v) for v in self.beta_y],
                           "beta_x": [float(v) for v in self.beta_x], "rho": self.rho},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != FIT_SCHEMA:
            raise DataError(f"unsupported fit schema {d.get('schema')!r}")
        return cls(np.array(d["theta"]), SplineBasis.from_dict(d["basis"]),
                   tuple(d["covariate_names"]), bool(d["control_function"]), d["first_stage"],
                   np.array(d["constraint_grid"]), float(d["loglik"]), int(d["n"]),
                   np.array(d["covariate_means"]), np.array(d["covariate_range"]).reshape(-1, 2),
                   float(d["max_violation"]), float(d["audit_violation"]))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def default_grid(income, size=50):
    lo, hi = np.percentile(income, [1, 99])
    return np.linspace(lo, hi, size)


def _design(data, basis, fs):
    y = np.clip(data.income, basis.y_min, basis.y_max)
    cols = [data.price[:, None], basis(y), data.covariates]
    if fs is not None:
        cols.append(fs.residuals[:, None])
    return np.column_stack(cols)


def fit_constrained_probit(data: EstimationDataset, basis: SplineBasis, grid=None,
                           control_function=True, constrained=True, audit_factor=10,
                           max_refine=6) -> DemandFit:
    """Maximum likelihood probit under the price and directional constraints.

    Parameters
    ----------
    data : EstimationDataset
        Complete prices (impute first).
    basis : SplineBasis
        Income spline; its interval must contain the grid.
    grid : array_like, optional
        Income points where the directional constraint is imposed.  Defaults
        to 50 points between the 1st and 99th income percentiles.
    control_function : bool
        Include the first-stage residual (``False`` gives the naive probit).
    constrained : bool
        ``False`` drops both constraint families.
    audit_factor : int
        The constraint is re-checked on a grid this many times finer; if it
        fails by more than ``1e-3`` the grid is doubled and the fit repeated.
    """
    if not data.complete:
        raise DataError("missing prices; run impute_prices first")
    grid = default_grid(data.income) if grid is None else np.asarray(grid, dtype=float)
    if grid.size and (grid.min() < basis.y_min - 1e-12 or grid.max() > basis.y_max + 1e-12):
        raise DataError("constraint grid outside the spline support")
    fs = first_stage(data, basis) if control_function else None
    if fs is not None and fs.degenerate:
        raise EstimationError("first stage fits price exactly; control function is undefined")
    X = _design(data, basis, fs)
    k, nx = basis.size, data.covariates.shape[1]
    layout = {"price": 0, "spline": slice(1, 1 + k), "size": X.shape[1]}
    # column scaling for conditioning; constraints are mapped accordingly
    col_scale = np.ones(X.shape[1])
    col_scale[0] = max(np.std(data.price), 1e-12)
    rest = np.arange(1 + k, X.shape[1])
    if rest.size:
        col_scale[rest] = np.maximum(np.std(X[:, rest], axis=0), 1e-12)
    Xs = X / col_scale
    s = 2.0 * data.choice - 1.0

    def ll_fn(th):
        return _probit_terms(th, Xs, s)

    start = np.zeros(X.shape[1])
    start[0] = -1e-3
    share = np.clip(data.choice.mean(), 1e-3, 1 - 1e-3)
    start[layout["spline"]] = special.ndtri(share)

    audit_lo, audit_hi = (grid.min(), grid.max()) if grid.size else (basis.y_min, basis.y_max)
    for _ in range(max_refine + 1):
        if constrained:
            G = _constraint_rows(basis, grid, layout) / col_scale
            theta_s, lam = _augmented_lagrangian(ll_fn, G, start)
            theta_s = _active_set_polish(ll_fn, G, theta_s, lam)
            viol = float(np.max(G @ theta_s))
            if viol > FEAS_TOL:
                raise EstimationError(f"constrained probit infeasible: violation {viol:.3g}")
        else:
            theta_s, _, ok = _newton(ll_fn, start)
            if not ok:
                raise EstimationError("probit Newton iterations did not converge")
            viol = math.nan
        theta = theta_s / col_scale
        audit = np.linspace(audit_lo, audit_hi, max(audit_factor * grid.size, 2))
        slope = theta[0] + basis.derivative(audit, theta[layout["spline"]])
        audit_viol = float(np.max(slope))
        if not constrained or audit_viol <= 1e-3:
            break
        grid = np.linspace(audit_lo, audit_hi, 2 * grid.size)
        log.info("audit violation %.3g; refitting on %d grid points", audit_viol, grid.size)
    else:
        raise EstimationError("directional constraint still violated between grid points")
    loglik, _, _ = _probit_terms(theta, X, s)
    if not np.isfinite(loglik):
        raise EstimationError("log-likelihood is not finite")
    return DemandFit(
        theta=theta, basis=basis, covariate_names=data.covariate_names,
        control_function=bool(control_function),
        first_stage=fs.summary() if fs is not None else {},
        constraint_grid=grid if constrained else np.zeros(0), loglik=float(loglik), n=data.n,
        covariate_means=data.covariates.mean(axis=0),
        covariate_range=np.column_stack([data.covariates.min(axis=0), data.covariates.max(axis=0)])
        if nx else np.zeros((0, 2)),
        max_violation=float(viol) if constrained else math.nan,
        audit_violation=audit_viol,
    )


def fit_to_model(fit: DemandFit, covariate_profile=None) -> EstimatedSplineProbit:
    """Structural demand at a covariate profile (default: sample means)."""
    profile = fit.covariate_means if covariate_profile is None else np.asarray(covariate_profile, dtype=float)
    if profile.size != len(fit.covariate_names):
        raise ModelError(f"profile needs {len(fit.covariate_names)} covariates")
    if profile.size:
        lo, hi = fit.covariate_range[:, 0], fit.covariate_range[:, 1]
        if np.any(profile < lo - 1e-12) or np.any(profile > hi + 1e-12):
            raise ModelError("covariate profile outside the estimation sample's support")
    return EstimatedSplineProbit(fit.beta_p, fit.beta_y, fit.basis, fit.beta_x, tuple(profile))


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PosteriorDraws:
    """Bootstrap refits; row ``b`` of each block is draw ``b``."""

    beta_p: np.ndarray
    beta_y: np.ndarray
    beta_x: np.ndarray
    rho: np.ndarray
    fits: tuple = field(repr=False)
    n_failed: int = 0

    @property
    def B(self):
        return self.beta_p.size

    def models(self, covariate_profile=None):
        return [fit_to_model(f, covariate_profile) for f in self.fits]


def _bootstrap_one(data, basis, grid, control_function, seed_seq):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    rows = rng.integers(0, data.n, data.n)
    try:
        return fit_constrained_probit(data.take(rows), basis, grid, control_function)
    except (EstimationError, DataError, np.linalg.LinAlgError) as exc:
        log.info("bootstrap draw failed: %s", exc)
        return None


def bootstrap_fit(data: EstimationDataset, basis: SplineBasis, grid=None, B=400, seed=0,
                  control_function=True, n_jobs=1, max_fail_share=0.05) -> PosteriorDraws:
    """Row-resampling bootstrap of both stages.

    Draw ``b`` uses the ``b``-th child of ``SeedSequence(seed)``, so results
    do not depend on ``n_jobs``.
    """
    if B < 2:
        raise ValueError("bootstrap needs B >= 2")
    grid = default_grid(data.income) if grid is None else np.asarray(grid, dtype=float)
    children = np.random.SeedSequence(int(seed)).spawn(int(B))
    if n_jobs == 1:
        fits = [_bootstrap_one(data, basis, grid, control_function, c) for c in children]
    else:
        from joblib import Parallel, delayed
        fits = Parallel(n_jobs=n_jobs)(
            delayed(_bootstrap_one)(data, basis, grid, control_function, c) for c in children)
    good = [f for f in fits if f is not None]
    failed = len(fits) - len(good)
    if failed > max_fail_share * B:
        raise EstimationError(f"{failed} of {B} bootstrap fits failed")
    return PosteriorDraws(
        beta_p=np.array([f.beta_p for f in good]),
        beta_y=np.array([f.beta_y for f in good]),
        beta_x=np.array([f.beta_x for f in good]).reshape(len(good), -1),
        rho=np.array([f.rho for f in good]),
        fits=tuple(good), n_failed=failed)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticTruth:
    beta_p: float
    beta_y: np.ndarray
    beta_x: np.ndarray
    basis: SplineBasis
    endogeneity: float
    covariate_means: np.ndarray

    def model(self, covariate_profile=None):
        profile = self.covariate_means if covariate_profile is None else covariate_profile
        return EstimatedSplineProbit(self.beta_p, self.beta_y, self.basis, self.beta_x,
                                     tuple(profile))


def inverted_u_coefficients(basis, level=0.3, slope=0.35, curvature=0.035):
    """Spline coefficients of ``level + slope*(y-y0) - curvature*(y-y0)^2``.

    Degree >= 2 splines reproduce quadratics exactly, so the least-squares
    projection is exact.
    """
    y = np.linspace(basis.y_min, basis.y_max, 8 * basis.size)
    d = y - basis.y_min
    coef, *_ = np.linalg.lstsq(basis(y), level + slope * d - curvature * d * d, rcond=None)
    return coef


def simulate_dataset(n=20000, seed=0, beta_p=-0.5, endogeneity=1.2, price_noise=0.5,
                     strata=10, clusters_per_stratum=20, y_range=(1.0, 10.0), M=8, q=3,
                     income_shape=None, beta_x=(0.3, -0.2), hide_nonbuyer_prices=False):
    """Households with an endogenous price and a Hausman-style instrument.

    Price is ``3 + stratum cost + cluster cost + 0.2 x1 + v``; the demand
    error is ``u = lambda v + e`` with ``Var(u) = 1`` so that ``lambda``
    (``endogeneity``) controls the bias of a naive probit.  The instrument is
    the mean cluster price in the other clusters of the same stratum.
    """
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    basis = build_spline_basis(y_range[0], y_range[1], M, q)
    beta_y = inverted_u_coefficients(basis) if income_shape is None else np.asarray(income_shape)
    n_clusters = strata * clusters_per_stratum
    stratum_cost = rng.normal(0.0, 0.5, strata)
    cluster_cost = rng.normal(0.0, 0.3, n_clusters)
    cluster = rng.integers(0, n_clusters, n)
    stratum = cluster // clusters_per_stratum
    # Hausman instrument: other clusters' mean cost-driven price in the stratum
    base = 3.0 + stratum_cost[np.arange(n_clusters) // clusters_per_stratum] + cluster_cost
    sums = np.bincount(np.arange(n_clusters) // clusters_per_stratum, weights=base, minlength=strata)
    hausman = (sums[stratum] - base[cluster]) / (clusters_per_stratum - 1)
    x = np.column_stack([rng.normal(0.0, 1.0, n), rng.integers(0, 2, n).astype(float)])
    lo, hi = y_range
    income = lo + (hi - lo) * rng.beta(2.0, 3.0, n)
    v = rng.normal(0.0, price_noise, n)
    price = base[cluster] + 0.2 * x[:, 0] + v
    price = np.maximum(price, 0.05)
    lam = float(endogeneity)
    if lam ** 2 * price_noise ** 2 >= 1:
        raise ValueError("endogeneity too strong for a unit-variance demand error")
    u = lam * v + math.sqrt(1.0 - lam ** 2 * price_noise ** 2) * rng.normal(0.0, 1.0, n)
    bx = np.asarray(beta_x, dtype=float)
    index = beta_p * price + basis.evaluate(income, beta_y) + x @ bx
    choice = (index + u > 0).astype(np.int8)
    shown = np.where((choice == 0) & hide_nonbuyer_prices, np.nan, price)
    data = EstimationDataset(choice, shown, income, hausman, cluster.astype(str),
                             stratum.astype(str), x, ("hh_size", "female"))
    truth = SyntheticTruth(float(beta_p), beta_y, bx, basis, lam, x.mean(axis=0))
    return data, truth
