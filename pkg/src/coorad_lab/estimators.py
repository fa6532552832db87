"""Panel and cross-section estimators behind a fit-style API.

Estimators follow the scikit-learn convention: construction stores the
specification, ``fit(data)`` runs the regression and returns ``self``, and
fitted output lands in ``result_`` (plus ``event_result_`` for the event
studies).  ``get_params``/``set_params``/``clone`` therefore work, which
the cluster bootstrap relies on.

The two-way fixed-effects workhorse absorbs unit and time effects by
alternating within-group demeaning until group means vanish (tolerance
1e-10, capped sweeps), then solves least squares on the demeaned design;
this equals explicit-dummy OLS.  Standard errors are cluster-robust (CRV1)
by default, with heteroskedasticity-robust and none as alternatives;
bootstrap standard errors live in ``inference``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.base import BaseEstimator

from .errors import ConvergenceError, ParameterError

DEMEAN_TOL = 1e-10
MAX_SWEEPS = 10_000


# ---------------------------------------------------------------------------
# Specifications and results


@dataclass(frozen=True)
class RegressionSpec:
    """Roles of the data columns in a panel regression.

    ``treatment`` columns enter directly for the plain fixed-effects
    estimator; the event-study and difference-in-differences estimators
    interact them (and every ``interact_controls`` column) with event-time
    dummies or the post indicator first.  ``omit`` is the reference event
    month dropped from the dummy expansion.
    """

    outcome: str
    treatment: tuple[str, ...] | str
    interact_controls: tuple[str, ...] = ()
    controls: tuple[str, ...] = ()
    event_col: str | None = None
    omit: int = -1
    unit_col: str = "subpref_id"
    time_col: str = "month"
    cluster_col: str | None = "pref_id"
    lagged_dependent: bool = False

    @property
    def treatments(self) -> tuple[str, ...]:
        if isinstance(self.treatment, str):
            return (self.treatment,)
        return tuple(self.treatment)

    def validate_roles(self):
        roles = [self.outcome, *self.treatments, *self.interact_controls, *self.controls]
        dupes = {c for c in roles if roles.count(c) > 1}
        if dupes:
            raise ParameterError(f"columns duplicated across roles: {sorted(dupes)}")


@dataclass
class FitResult:
    coef: dict[str, float]
    se: dict[str, float]
    n: int
    n_clusters: int | None = None
    cov: np.ndarray | None = None
    names: list[str] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if set(self.coef) != set(self.se):
            raise ParameterError("coefficient and SE maps must share keys")
        bad = [k for k, v in self.se.items() if np.isfinite(v) and v < 0]
        if bad:
            raise ParameterError(f"negative standard errors for {bad}")

    def ci(self, name: str, level: float = 0.95) -> tuple[float, float]:
        z = stats.norm.ppf(0.5 + level / 2.0)
        b, s = self.coef[name], self.se[name]
        return b - z * s, b + z * s


@dataclass
class EventStudyPoint:
    tau: int
    beta: float
    se: float
    ci_low: float
    ci_high: float

    def __post_init__(self):
        if not (self.ci_low <= self.beta <= self.ci_high):
            raise ParameterError(f"tau={self.tau}: CI does not bracket the estimate")


@dataclass
class EventStudyResult:
    entries: list[EventStudyPoint]
    omitted: int
    treatment: str
    n: int = 0
    n_clusters: int | None = None
    se_kind: str = "cluster"
    boot_cov: np.ndarray | None = None
    boot_taus: list[int] | None = None

    def taus(self) -> list[int]:
        return [p.tau for p in self.entries]

    def point(self, tau: int) -> EventStudyPoint:
        for p in self.entries:
            if p.tau == tau:
                return p
        raise KeyError(tau)

    def tau_coef_map(self) -> dict[int, float]:
        return {p.tau: p.beta for p in self.entries}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(p.tau, p.beta, p.se, p.ci_low, p.ci_high) for p in self.entries],
            columns=["tau", "beta", "se", "ci_low", "ci_high"],
        )


# ---------------------------------------------------------------------------
# Numerical core


def _factorize(series: pd.Series) -> tuple[np.ndarray, int]:
    codes, uniques = pd.factorize(series, sort=True)
    return codes.astype(np.intp), len(uniques)


def _group_means(values: np.ndarray, codes: np.ndarray, n_groups: int) -> np.ndarray:
    counts = np.bincount(codes, minlength=n_groups).astype(float)
    out = np.empty((n_groups, values.shape[1]))
    for j in range(values.shape[1]):
        out[:, j] = np.bincount(codes, weights=values[:, j], minlength=n_groups)
    out /= counts[:, None]
    return out


def demean_two_way(
    values: np.ndarray,
    unit_codes: np.ndarray,
    time_codes: np.ndarray,
    n_units: int,
    n_times: int,
    tol: float = DEMEAN_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> tuple[np.ndarray, int]:
    """Alternating within-group demeaning until every adjustment is < tol."""
    out = np.array(values, dtype=float, copy=True)
    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for codes, n_groups in ((unit_codes, n_units), (time_codes, n_times)):
            means = _group_means(out, codes, n_groups)
            change = max(change, float(np.abs(means).max()))
            out -= means[codes]
        if change < tol:
            return out, sweep
    raise ConvergenceError(f"two-way demeaning did not converge in {max_sweeps} sweeps")


def _collinear_names(X: np.ndarray, names: list[str]) -> list[str]:
    from scipy.linalg import qr

    _, r, piv = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    cutoff = max(X.shape) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    dropped = piv[np.sum(diag > cutoff):]
    return [names[i] for i in sorted(dropped)]


def _solve_ols(X: np.ndarray, y: np.ndarray, names: list[str]) -> np.ndarray:
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise ParameterError(
            f"design is rank deficient; collinear columns: {_collinear_names(X, names)}"
        )
    return beta


def _cluster_sandwich(X, resid, bread_inv, cluster_codes, n_clusters, dof_model):
    n = X.shape[0]
    Xu = X * resid[:, None]
    meat = np.zeros((X.shape[1], X.shape[1]))
    for g in range(n_clusters):
        s = Xu[cluster_codes == g].sum(axis=0)
        meat += np.outer(s, s)
    factor = (n_clusters / (n_clusters - 1)) * ((n - 1) / max(n - dof_model, 1))
    return factor * bread_inv @ meat @ bread_inv


def _hc1_sandwich(X, resid, bread_inv, dof_model):
    n = X.shape[0]
    meat = (X * (resid**2)[:, None]).T @ X
    factor = n / max(n - dof_model, 1)
    return factor * bread_inv @ meat @ bread_inv


# ---------------------------------------------------------------------------
# Two-way fixed-effects OLS


class FixedEffectsOLS(BaseEstimator):
    """OLS with absorbed unit and time fixed effects.

    ``se`` selects the covariance: "cluster" (CRV1 on ``spec.cluster_col``),
    "hc1", or "none" (point estimates only; used by the bootstrap refits).
    """

    def __init__(self, spec: RegressionSpec, se: str = "cluster"):
        self.spec = spec
        self.se = se

    def _design(self, data: pd.DataFrame):
        spec = self.spec
        spec.validate_roles()
        cols = [*spec.treatments, *spec.controls]
        needed = [spec.outcome, *cols, spec.unit_col, spec.time_col]
        if spec.cluster_col and self.se == "cluster":
            needed.append(spec.cluster_col)
        missing = [c for c in needed if c not in data.columns]
        if missing:
            raise ParameterError(f"data is missing columns: {missing}")
        df = data
        if spec.lagged_dependent:
            df = data.sort_values([spec.unit_col, spec.time_col]).copy()
            lag = df.groupby(spec.unit_col)[spec.outcome].shift(1)
            df = df.assign(_lag_outcome=lag).dropna(subset=["_lag_outcome"])
            cols = cols + ["_lag_outcome"]
        return df, cols

    def fit(self, data: pd.DataFrame):
        spec = self.spec
        df, cols = self._design(data)
        y = df[spec.outcome].to_numpy(dtype=float)
        X = df[cols].to_numpy(dtype=float)
        unit_codes, n_units = _factorize(df[spec.unit_col])
        time_codes, n_times = _factorize(df[spec.time_col])

        stacked = np.column_stack([y, X])
        demeaned, sweeps = demean_two_way(stacked, unit_codes, time_codes, n_units, n_times)
        y_t, X_t = demeaned[:, 0], demeaned[:, 1:]

        beta = _solve_ols(X_t, y_t, cols)
        resid = y_t - X_t @ beta
        dof_model = len(cols) + n_units + n_times - 1

        n_clusters = None
        cov = None
        if self.se == "cluster":
            if spec.cluster_col is None:
                raise ParameterError("clustered SEs requested without a cluster column")
            cluster_codes, n_clusters = _factorize(df[spec.cluster_col])
            if n_clusters < 2:
                raise ParameterError("clustered SEs need at least 2 clusters")
            bread_inv = np.linalg.inv(X_t.T @ X_t)
            cov = _cluster_sandwich(X_t, resid, bread_inv, cluster_codes, n_clusters, dof_model)
        elif self.se == "hc1":
            bread_inv = np.linalg.inv(X_t.T @ X_t)
            cov = _hc1_sandwich(X_t, resid, bread_inv, dof_model)
        elif self.se != "none":
            raise ParameterError(f"unknown se kind {self.se!r}")

        ses = (
            {c: float(np.sqrt(max(cov[i, i], 0.0))) for i, c in enumerate(cols)}
            if cov is not None
            else {c: float("nan") for c in cols}
        )
        ss_res = float(resid @ resid)
        ss_tot = float(y_t @ y_t)
        self.result_ = FitResult(
            coef={c: float(b) for c, b in zip(cols, beta)},
            se=ses,
            n=len(df),
            n_clusters=n_clusters,
            cov=cov,
            names=list(cols),
            diagnostics={
                "demeaning_sweeps": sweeps,
                "r2_within": 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan"),
            },
        )
        return self

    # -- moment interface for the fast pairs-cluster bootstrap -------------

    def moment_blocks(self, data: pd.DataFrame):
        """Per-cluster cross products of the unit-demeaned design.

        Unit effects are absorbed by within-unit demeaning (invariant under
        whole-cluster duplication because units nest in clusters); time
        effects enter as explicit dummy columns.  Resampling clusters with
        replacement is then exactly a reweighting of these blocks.
        """
        spec = self.spec
        if spec.cluster_col is None:
            raise ParameterError("moment blocks need a cluster column")
        df, cols = self._design(data)
        nested = df.groupby(spec.unit_col)[spec.cluster_col].nunique()
        if (nested > 1).any():
            raise ParameterError("units must nest inside clusters for moment blocks")

        y = df[spec.outcome].to_numpy(dtype=float)
        X = df[cols].to_numpy(dtype=float)
        time_codes, n_times = _factorize(df[spec.time_col])
        time_dummies = np.zeros((len(df), n_times - 1))
        mask = time_codes > 0
        time_dummies[np.arange(len(df))[mask], time_codes[mask] - 1] = 1.0

        unit_codes, n_units = _factorize(df[spec.unit_col])
        stacked = np.column_stack([y, X, time_dummies])
        means = _group_means(stacked, unit_codes, n_units)
        stacked = stacked - means[unit_codes]

        y_t = stacked[:, 0]
        X_full = stacked[:, 1:]
        names = list(cols) + [f"_t{j}" for j in range(1, n_times)]

        cluster_codes, n_clusters = _factorize(df[spec.cluster_col])
        blocks = []
        for g in range(n_clusters):
            sel = cluster_codes == g
            Xg = X_full[sel]
            blocks.append((Xg.T @ Xg, Xg.T @ y_t[sel]))
        return names, list(cols), blocks


def fe_ols(data: pd.DataFrame, spec: RegressionSpec, se: str = "cluster") -> FitResult:
    """Functional wrapper over FixedEffectsOLS."""
    return FixedEffectsOLS(spec, se=se).fit(data).result_


# ---------------------------------------------------------------------------
# Event study and difference-in-differences


def apply_lagged_outcome(data: pd.DataFrame, spec: RegressionSpec):
    """Materialize the lagged outcome column and trim rows with no lag.

    Used by the interaction estimators so event dummies are built on the
    trimmed sample (the first month's dummy would otherwise be an all-zero
    column after the lag drop).
    """
    df = data.sort_values([spec.unit_col, spec.time_col]).copy()
    df["_lag_outcome"] = df.groupby(spec.unit_col)[spec.outcome].shift(1)
    df = df.dropna(subset=["_lag_outcome"]).reset_index(drop=True)
    return df


def tau_column(base: str, tau: int) -> str:
    return f"{base}:tau={tau}"


def parse_tau(name: str) -> int:
    return int(name.rsplit(":tau=", 1)[1])


def _expand_event_dummies(df, cols, event, taus, omit):
    built = {}
    for base in cols:
        vals = df[base].to_numpy(dtype=float)
        for tau in taus:
            if tau == omit:
                continue
            built[tau_column(base, tau)] = vals * (event == tau)
    return built


class EventStudy(BaseEstimator):
    """Flexible difference-in-differences: one treatment coefficient per event month.

    The treatment share and every interaction control are crossed with
    event-time dummies (reference month ``spec.omit`` dropped and restored
    as an exact zero in the result).  Event time comes from
    ``spec.event_col`` if present, else from ``time_col - launch_month``.
    """

    def __init__(self, spec: RegressionSpec, launch_month: int | None = None,
                 se: str = "cluster", ci_level: float = 0.95):
        self.spec = spec
        self.launch_month = launch_month
        self.se = se
        self.ci_level = ci_level

    def _event_times(self, data: pd.DataFrame) -> np.ndarray:
        spec = self.spec
        if spec.event_col is not None:
            if spec.event_col not in data.columns:
                raise ParameterError(f"missing event-time column {spec.event_col!r}")
            return data[spec.event_col].to_numpy(dtype=int)
        if self.launch_month is None:
            raise ParameterError("need either spec.event_col or launch_month")
        return data[spec.time_col].to_numpy(dtype=int) - self.launch_month

    def expanded_estimator(self, data: pd.DataFrame):
        """The panel with interaction columns built, plus the inner FE estimator."""
        spec = self.spec
        treat = spec.treatments
        if len(treat) != 1:
            raise ParameterError("event study expects exactly one treatment column")
        controls = spec.controls
        if spec.lagged_dependent:
            data = apply_lagged_outcome(data, spec)
            controls = (*controls, "_lag_outcome")
        event = self._event_times(data)
        taus = sorted(np.unique(event).tolist())
        if spec.omit not in taus:
            raise ParameterError(f"omitted event month {spec.omit} not present in data")
        built = _expand_event_dummies(data, [treat[0], *spec.interact_controls], event, taus, spec.omit)
        df = pd.concat([data.reset_index(drop=True), pd.DataFrame(built)], axis=1)
        inner_spec = replace(
            spec,
            treatment=tuple(built.keys()),
            interact_controls=(),
            controls=controls,
            event_col=None,
            lagged_dependent=False,
        )
        return df, FixedEffectsOLS(inner_spec, se=self.se), taus, treat[0]

    def fit(self, data: pd.DataFrame):
        df, inner, taus, treat = self.expanded_estimator(data)
        inner.fit(df)
        fr = inner.result_
        self.result_ = fr
        self.taus_ = taus
        self.treatment_ = treat
        self.event_result_ = build_event_result(
            fr, treat, taus, self.spec.omit, self.ci_level, self.se
        )
        return self

    def moment_blocks(self, data: pd.DataFrame):
        df, inner, _, _ = self.expanded_estimator(data)
        return inner.moment_blocks(df)


def build_event_result(fr: FitResult, treatment: str, taus, omit: int,
                       ci_level: float = 0.95, se_kind: str = "cluster") -> EventStudyResult:
    z = stats.norm.ppf(0.5 + ci_level / 2.0)
    entries = []
    for tau in taus:
        if tau == omit:
            entries.append(EventStudyPoint(tau, 0.0, 0.0, 0.0, 0.0))
            continue
        name = tau_column(treatment, tau)
        b = fr.coef[name]
        s = fr.se[name]
        lo, hi = (b - z * s, b + z * s) if np.isfinite(s) else (b, b)
        entries.append(EventStudyPoint(tau, b, s if np.isfinite(s) else 0.0, lo, hi))
    return EventStudyResult(
        entries=entries,
        omitted=omit,
        treatment=treatment,
        n=fr.n,
        n_clusters=fr.n_clusters,
        se_kind=se_kind,
    )


def event_study(panel: pd.DataFrame, spec: RegressionSpec,
                launch_month: int | None = None, se: str = "cluster") -> EventStudyResult:
    return EventStudy(spec, launch_month=launch_month, se=se).fit(panel).event_result_


class DiffInDiff(BaseEstimator):
    """Two-way fixed effects with a single post-times-treatment interaction."""

    def __init__(self, spec: RegressionSpec, post_col: str = "post_official", se: str = "cluster"):
        self.spec = spec
        self.post_col = post_col
        self.se = se

    def expanded_estimator(self, data: pd.DataFrame):
        spec = self.spec
        if self.post_col not in data.columns:
            raise ParameterError(f"missing post indicator column {self.post_col!r}")
        controls = spec.controls
        if spec.lagged_dependent:
            data = apply_lagged_outcome(data, spec)
            controls = (*controls, "_lag_outcome")
        post = data[self.post_col].to_numpy(dtype=float)
        built = {}
        for base in [*spec.treatments, *spec.interact_controls]:
            built[f"{base}:post"] = data[base].to_numpy(dtype=float) * post
        df = data.assign(**built)
        inner_spec = replace(spec, treatment=tuple(built.keys()), interact_controls=(),
                             controls=controls, lagged_dependent=False)
        return df, FixedEffectsOLS(inner_spec, se=self.se)

    def fit(self, data: pd.DataFrame):
        df, inner = self.expanded_estimator(data)
        inner.fit(df)
        self.result_ = inner.result_
        return self

    def moment_blocks(self, data: pd.DataFrame):
        df, inner = self.expanded_estimator(data)
        return inner.moment_blocks(df)


def did(panel: pd.DataFrame, spec: RegressionSpec, post_col: str = "post_official",
        se: str = "cluster") -> FitResult:
    return DiffInDiff(spec, post_col=post_col, se=se).fit(panel).result_


class HeterogeneousEventStudy(BaseEstimator):
    """Event study with the treatment split by a binary, time-invariant flag.

    Produces one coefficient path for units with the flag set and one for
    the rest; both are returned so overlap can be judged directly.
    """

    def __init__(self, spec: RegressionSpec, split_col: str,
                 launch_month: int | None = None, se: str = "cluster", ci_level: float = 0.95):
        self.spec = spec
        self.split_col = split_col
        self.launch_month = launch_month
        self.se = se
        self.ci_level = ci_level

    def fit(self, data: pd.DataFrame):
        spec = self.spec
        if self.split_col not in data.columns:
            raise ParameterError(f"missing split column {self.split_col!r}")
        split = data[self.split_col]
        if not set(np.unique(split)) <= {0, 1}:
            raise ParameterError(f"split column {self.split_col!r} must be binary")
        varying = data.groupby(spec.unit_col)[self.split_col].nunique()
        if (varying > 1).any():
            raise ParameterError(f"split column {self.split_col!r} must be constant per unit")
        if split.nunique() < 2:
            raise ParameterError("one split cell is empty")

        treat = spec.treatments[0]
        s = split.to_numpy(dtype=float)
        df = data.assign(
            **{
                f"{treat}@1": data[treat].to_numpy(dtype=float) * s,
                f"{treat}@0": data[treat].to_numpy(dtype=float) * (1.0 - s),
            }
        )
        # One regression carries both interaction paths; the split results
        # are two views of the same fit.
        cell_spec = replace(spec, treatment=f"{treat}@1",
                            interact_controls=(f"{treat}@0", *spec.interact_controls))
        es = EventStudy(cell_spec, launch_month=self.launch_month,
                        se=self.se, ci_level=self.ci_level).fit(df)
        self.result_ = es.result_
        self.result_split1_ = es.event_result_
        self.result_split0_ = build_event_result(
            es.result_, f"{treat}@0", es.taus_, spec.omit, self.ci_level, self.se
        )
        return self


def event_study_heterogeneous(panel, spec, split_col, launch_month=None, se="cluster"):
    est = HeterogeneousEventStudy(spec, split_col, launch_month=launch_month, se=se).fit(panel)
    return est.result_split1_, est.result_split0_


# ---------------------------------------------------------------------------
# Cross-section OLS and two-stage least squares


def _absorb_one_way(arrays: list[np.ndarray], codes: np.ndarray, n_groups: int):
    out = []
    for a in arrays:
        a2 = a if a.ndim == 2 else a[:, None]
        means = _group_means(a2, codes, n_groups)
        res = a2 - means[codes]
        out.append(res if a.ndim == 2 else res[:, 0])
    return out


def _prepare_design(data, columns, absorb, add_intercept=True):
    X = data[list(columns)].to_numpy(dtype=float) if columns else np.empty((len(data), 0))
    names = list(columns)
    if absorb is None and add_intercept:
        X = np.column_stack([np.ones(len(data)), X])
        names = ["const", *names]
    return X, names


def cross_section_ols(
    data: pd.DataFrame,
    outcome: str,
    regressors,
    controls=(),
    absorb: str | None = None,
    cluster_col: str | None = None,
) -> FitResult:
    """Plain OLS with optional one-way fixed effects and clustered SEs."""
    regressors = list(regressors)
    y = data[outcome].to_numpy(dtype=float)
    X, names = _prepare_design(data, [*regressors, *controls], absorb)
    if absorb is not None:
        codes, n_groups = _factorize(data[absorb])
        y, X = _absorb_one_way([y, X], codes, n_groups)
        dof_absorbed = n_groups
    else:
        dof_absorbed = 0

    beta = _solve_ols(X, y, names)
    resid = y - X @ beta
    bread_inv = np.linalg.inv(X.T @ X)
    dof_model = X.shape[1] + dof_absorbed
    if cluster_col is not None:
        cluster_codes, n_clusters = _factorize(data[cluster_col])
        if n_clusters < 2:
            raise ParameterError("clustered SEs need at least 2 clusters")
        cov = _cluster_sandwich(X, resid, bread_inv, cluster_codes, n_clusters, dof_model)
    else:
        n_clusters = None
        cov = _hc1_sandwich(X, resid, bread_inv, dof_model)

    return FitResult(
        coef={c: float(b) for c, b in zip(names, beta)},
        se={c: float(np.sqrt(max(cov[i, i], 0.0))) for i, c in enumerate(names)},
        n=len(data),
        n_clusters=n_clusters,
        cov=cov,
        names=names,
    )


@dataclass(frozen=True)
class IVSpec:
    outcome: str
    endog: str
    instruments: tuple[str, ...]
    exog: tuple[str, ...] = ()
    absorb: str | None = None
    cluster_col: str | None = None


class TwoSLS(BaseEstimator):
    """Two-stage least squares with first-stage diagnostics.

    The first-stage F statistic tests the excluded instruments in the
    regression of the endogenous column on instruments plus exogenous
    controls; estimates with F below 10 are flagged as weak-instrument.
    """

    WEAK_F = 10.0

    def __init__(self, spec: IVSpec, se: str = "cluster"):
        self.spec = spec
        self.se = se

    def fit(self, data: pd.DataFrame):
        spec = self.spec
        if len(spec.instruments) < 1:
            raise ParameterError("need at least one instrument")
        y = data[spec.outcome].to_numpy(dtype=float)
        d = data[spec.endog].to_numpy(dtype=float)
        Zx = data[list(spec.instruments)].to_numpy(dtype=float)
        W, w_names = _prepare_design(data, list(spec.exog), spec.absorb)
        if spec.absorb is not None:
            codes, n_groups = _factorize(data[spec.absorb])
            y, d, Zx, W = _absorb_one_way([y, d, Zx, W], codes, n_groups)
            dof_absorbed = n_groups
        else:
            dof_absorbed = 0

        X = np.column_stack([W, d]) if W.size else d[:, None]
        Z = np.column_stack([W, Zx]) if W.size else Zx
        x_names = [*w_names, spec.endog]

        ZtZ = Z.T @ Z
        try:
            ZtZ_inv = np.linalg.inv(ZtZ)
        except np.linalg.LinAlgError as exc:
            raise ParameterError("first-stage rank deficiency (Z'Z singular)") from exc
        ZtX = Z.T @ X
        Zty = Z.T @ y
        B = ZtX.T @ ZtZ_inv @ ZtX
        try:
            B_inv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise ParameterError("first-stage rank deficiency (projected design singular)") from exc
        beta = B_inv @ (ZtX.T @ ZtZ_inv @ Zty)
        resid = y - X @ beta

        # First stage: endog on [W, instruments]; F on the excluded instruments.
        pi = np.linalg.lstsq(Z, d, rcond=None)[0]
        ssr_u = float(np.sum((d - Z @ pi) ** 2))
        if W.size:
            g = np.linalg.lstsq(W, d, rcond=None)[0]
            ssr_r = float(np.sum((d - W @ g) ** 2))
        else:
            ssr_r = float(d @ d)
        q = len(spec.instruments)
        dof_resid = len(y) - Z.shape[1] - dof_absorbed
        if dof_resid <= 0 or ssr_u <= 0:
            fstat = float("inf") if ssr_r > ssr_u else 0.0
        else:
            fstat = ((ssr_r - ssr_u) / q) / (ssr_u / dof_resid)

        Xhat = Z @ (ZtZ_inv @ ZtX)
        dof_model = X.shape[1] + dof_absorbed
        if self.se == "cluster" and spec.cluster_col is not None:
            cluster_codes, n_clusters = _factorize(data[spec.cluster_col])
            if n_clusters < 2:
                raise ParameterError("clustered SEs need at least 2 clusters")
            cov = _cluster_sandwich(Xhat, resid, B_inv, cluster_codes, n_clusters, dof_model)
        else:
            n_clusters = None
            cov = _hc1_sandwich(Xhat, resid, B_inv, dof_model)

        self.result_ = FitResult(
            coef={c: float(b) for c, b in zip(x_names, beta)},
            se={c: float(np.sqrt(max(cov[i, i], 0.0))) for i, c in enumerate(x_names)},
            n=len(y),
            n_clusters=n_clusters,
            cov=cov,
            names=x_names,
            diagnostics={
                "first_stage_F": float(fstat),
                "weak_instrument": bool(fstat < self.WEAK_F),
                "n_instruments": q,
            },
        )
        return self


def two_sls(micro: pd.DataFrame, spec: IVSpec, se: str = "cluster") -> FitResult:
    return TwoSLS(spec, se=se).fit(micro).result_


DEFAULT_PEER_BINS = (0.5, 0.7)


def binned_peer_effects(
    micro: pd.DataFrame,
    outcome: str,
    peer_col: str = "peer_share_media",
    bins: tuple[float, ...] = DEFAULT_PEER_BINS,
    controls=(),
    absorb: str | None = "region_id",
    cluster_col: str | None = "subpref_id",
) -> FitResult:
    """Peer-exposure slope allowed to differ across peer-share bins.

    Cut points split [0, 1] into len(bins)+1 intervals (left-closed): the
    regressor ``peer_col`` enters interacted with its own bin indicator, so
    each coefficient is the slope within that range.  Bins without support
    are dropped and recorded in diagnostics rather than failing.
    """
    cuts = tuple(bins)
    if any(not 0.0 < c < 1.0 for c in cuts) or list(cuts) != sorted(cuts):
        raise ParameterError(f"bin cut points must be increasing inside (0, 1): {cuts}")
    share = micro[peer_col].to_numpy(dtype=float)
    idx = np.searchsorted(cuts, share, side="right")
    edges = [0.0, *cuts, 1.0]
    labels = [f"{peer_col}[{edges[i]:g}-{edges[i + 1]:g})" for i in range(len(edges) - 1)]

    built = {}
    omitted = []
    for b, label in enumerate(labels):
        col = share * (idx == b)
        if np.any(idx == b):
            built[label] = col
        else:
            omitted.append(label)
    if not built:
        raise ParameterError("no peer-share bin has support")
    df = micro.assign(**built)
    fr = cross_section_ols(
        df, outcome, list(built.keys()), controls=controls, absorb=absorb, cluster_col=cluster_col
    )
    fr.diagnostics["omitted_bins"] = omitted
    fr.diagnostics["bins"] = labels
    return fr
