"""Pairs-cluster bootstrap and the pre-trend joint test.

The bootstrap resamples whole clusters with replacement (same number of
clusters as observed) and refits the estimator on each resample; standard
errors are the standard deviation of the coefficient draws and the full
draw covariance is kept for joint tests.  Estimators exposing
``moment_blocks`` (the fixed-effects family) are refit through per-cluster
cross products, which is algebraically identical to stacking the resampled
rows and far cheaper; anything else is refit generically through clone and
fit.  Fixed seeds make every draw deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.base import clone

from .errors import ComputationError, ParameterError
from .estimators import EventStudyPoint, EventStudyResult, tau_column

MIN_REPS = 50
MAX_FAILURE_SHARE = 0.05


@dataclass
class BootstrapResult:
    se: dict[str, float]
    names: list[str]
    cov: np.ndarray
    draws: pd.DataFrame
    n_clusters: int
    reps: int
    n_failed: int

    def cov_for(self, names) -> np.ndarray:
        idx = [self.names.index(n) for n in names]
        return self.cov[np.ix_(idx, idx)]


def _generic_refit(estimator, df):
    if hasattr(estimator, "fit"):
        est = clone(estimator)
        if hasattr(est, "se"):
            est.se = "none"
        if hasattr(est, "spec") and getattr(est.spec, "cluster_col", None) is not None:
            est.spec = replace(est.spec, cluster_col=None)
        return est.fit(df).result_.coef
    return estimator(df).coef


def cluster_bootstrap(estimator, data: pd.DataFrame, cluster_col: str,
                      reps: int, seed: int) -> BootstrapResult:
    """Pairs-cluster bootstrap of an estimator's coefficients.

    ``estimator`` is either an unfitted fit-style estimator (cloned per
    draw) or a callable mapping a data frame to a FitResult.  Draws that
    fail (rank-deficient resamples and the like) are skipped and counted;
    more than 5% failures aborts with the count.
    """
    if reps < MIN_REPS:
        raise ParameterError(f"bootstrap needs at least {MIN_REPS} reps, got {reps}")
    if cluster_col not in data.columns:
        raise ParameterError(f"missing cluster column {cluster_col!r}")
    clusters = np.sort(data[cluster_col].unique())
    G = len(clusters)
    if G < 2:
        raise ParameterError("cluster bootstrap needs at least 2 clusters")

    rng = np.random.default_rng(seed)
    picks = rng.integers(0, G, size=(reps, G))

    rows = []
    failures = []

    if hasattr(estimator, "moment_blocks"):
        from scipy.linalg import cho_factor, cho_solve

        names, keep, blocks = estimator.moment_blocks(data)
        keep_idx = [names.index(c) for c in keep]
        XtX = np.stack([b[0] for b in blocks])
        Xty = np.stack([b[1] for b in blocks])
        G_, k = XtX.shape[0], XtX.shape[1]
        flat = XtX.reshape(G_, -1)
        weights = np.stack(
            [np.bincount(picks[r], minlength=G) for r in range(reps)]
        ).astype(float)
        # One matmul builds every resample's normal equations; much cheaper
        # on memory bandwidth than per-draw reductions.
        A_all = (weights @ flat).reshape(reps, k, k)
        b_all = weights @ Xty
        ok = np.ones(reps, dtype=bool)
        try:
            # Batched Cholesky rejects rank-deficient resamples the way a
            # full refit's rank check would.
            np.linalg.cholesky(A_all)
            betas = np.linalg.solve(A_all, b_all[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            # Some draw is singular: recover draw by draw so one bad
            # resample does not poison the batch.
            betas = np.full((reps, k), np.nan)
            for r in range(reps):
                try:
                    betas[r] = cho_solve(cho_factor(A_all[r]), b_all[r])
                except np.linalg.LinAlgError as exc:
                    ok[r] = False
                    failures.append(str(exc))
        for r in range(reps):
            if ok[r]:
                rows.append(betas[r][keep_idx])
        colnames = keep
    else:
        groups = {c: data[data[cluster_col] == c] for c in clusters}
        colnames = None
        for r in range(reps):
            df = pd.concat([groups[clusters[j]] for j in picks[r]], ignore_index=True)
            try:
                coef = _generic_refit(estimator, df)
            except Exception as exc:  # noqa: BLE001 - any failure counts against the budget
                failures.append(str(exc))
                continue
            if colnames is None:
                colnames = list(coef)
            rows.append([coef[c] for c in colnames])

    if len(failures) > MAX_FAILURE_SHARE * reps:
        raise ComputationError(
            f"estimator failed in {len(failures)}/{reps} bootstrap draws; "
            f"first failure: {failures[0]}"
        )
    if not rows:
        raise ComputationError("no successful bootstrap draws")

    draws = pd.DataFrame(np.asarray(rows), columns=colnames)
    values = draws.to_numpy()
    se = values.std(axis=0, ddof=1)
    cov = np.cov(values, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    return BootstrapResult(
        se={c: float(s) for c, s in zip(colnames, se)},
        names=list(colnames),
        cov=cov,
        draws=draws,
        n_clusters=G,
        reps=reps,
        n_failed=len(failures),
    )


def with_bootstrap_se(esr: EventStudyResult, boot: BootstrapResult,
                      ci_level: float = 0.95) -> EventStudyResult:
    """Rebuild an event-study result with bootstrap SEs and its tau covariance."""
    z = stats.norm.ppf(0.5 + ci_level / 2.0)
    entries = []
    est_taus = []
    for p in esr.entries:
        if p.tau == esr.omitted:
            entries.append(EventStudyPoint(p.tau, 0.0, 0.0, 0.0, 0.0))
            continue
        name = tau_column(esr.treatment, p.tau)
        s = boot.se[name]
        entries.append(EventStudyPoint(p.tau, p.beta, s, p.beta - z * s, p.beta + z * s))
        est_taus.append(p.tau)
    names = [tau_column(esr.treatment, t) for t in est_taus]
    return EventStudyResult(
        entries=entries,
        omitted=esr.omitted,
        treatment=esr.treatment,
        n=esr.n,
        n_clusters=boot.n_clusters,
        se_kind="bootstrap",
        boot_cov=boot.cov_for(names),
        boot_taus=est_taus,
    )


@dataclass
class PretrendTestResult:
    stat: float
    df: int
    p_value: float
    taus: list[int]
    reference: str


def pretrend_test(esr: EventStudyResult, pre_window=None,
                  reference: str = "f") -> PretrendTestResult:
    """Joint Wald test that the pre-launch coefficients are all equal.

    Uses the bootstrap covariance attached to the event-study result.  The
    statistic tests the pairwise differences of the estimated pre-period
    coefficients (the omitted month is the normalization, not part of the
    restriction set).  With ``reference="f"`` the statistic over its degrees
    of freedom is compared to F(k-1, G-1), a small-G correction; "chi2"
    uses the asymptotic reference.
    """
    if esr.boot_cov is None or esr.boot_taus is None:
        raise ParameterError("event-study result carries no bootstrap covariance")
    pre = [t for t in esr.boot_taus if t < 0]
    if pre_window is not None:
        lo, hi = pre_window
        pre = [t for t in pre if lo <= t <= hi]
    if len(pre) < 2:
        raise ParameterError(f"need at least 2 pre-period coefficients, got {len(pre)}")

    idx = [esr.boot_taus.index(t) for t in pre]
    b = np.array([esr.point(t).beta for t in pre])
    V = esr.boot_cov[np.ix_(idx, idx)]
    k = len(pre)
    R = np.zeros((k - 1, k))
    for i in range(k - 1):
        R[i, i] = 1.0
        R[i, i + 1] = -1.0
    rb = R @ b
    rvr = R @ V @ R.T
    try:
        stat = float(rb @ np.linalg.solve(rvr, rb))
    except np.linalg.LinAlgError as exc:
        raise ComputationError("singular restriction covariance in pre-trend test") from exc

    df = k - 1
    if reference == "f":
        if not esr.n_clusters or esr.n_clusters <= 1:
            raise ParameterError("F reference needs the cluster count on the result")
        p = float(stats.f.sf(stat / df, df, esr.n_clusters - 1))
    elif reference == "chi2":
        p = float(stats.chi2.sf(stat, df))
    else:
        raise ParameterError(f"unknown reference {reference!r}")
    return PretrendTestResult(stat=stat, df=df, p_value=p, taus=pre, reference=reference)
