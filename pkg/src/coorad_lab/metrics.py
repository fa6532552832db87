"""Diversity indices and the prevented-cases counterfactual."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ParameterError

SHARE_SUM_TOL = 1e-9


def fractionalization(shares) -> float:
    """Probability two random individuals belong to different groups: 1 - sum(share^2).

    ``shares`` is any iterable of nonnegative group population shares that
    sum to one.
    """
    arr = np.asarray(list(shares.values()) if isinstance(shares, dict) else list(shares), dtype=float)
    if arr.size == 0:
        raise ParameterError("shares must be nonempty")
    if (arr < 0).any():
        raise ParameterError("shares must be nonnegative")
    total = float(arr.sum())
    if abs(total - 1.0) > SHARE_SUM_TOL:
        raise ParameterError(f"shares must sum to 1, got {total}")
    return float(1.0 - np.dot(arr, arr))


@dataclass
class CounterfactualResult:
    prevented_by_month: list[tuple[int, float]]
    prevented_total: float
    share_of_total_epidemic: float
    method: str
    coverage_gap_pp: float
    untreated_cases_total: float
    epidemic_cases_total: float

    def to_dict(self) -> dict:
        return {
            "prevented_by_month": [[int(m), float(v)] for m, v in self.prevented_by_month],
            "prevented_total": self.prevented_total,
            "share_of_total_epidemic": self.share_of_total_epidemic,
            "method": self.method,
            "coverage_gap_pp": self.coverage_gap_pp,
            "untreated_cases_total": self.untreated_cases_total,
            "epidemic_cases_total": self.epidemic_cases_total,
        }


def _tau_coef_map(esr) -> dict[int, float]:
    if hasattr(esr, "tau_coef_map"):
        return esr.tau_coef_map()
    return {int(k): float(v) for k, v in dict(esr).items()}


def prevented_cases(
    esr,
    panel: pd.DataFrame,
    coverage_gap_pp: float,
    untreated_filter=None,
    launch_month: int | None = None,
    method: str = "linear",
) -> CounterfactualResult:
    """Counterfactual infections avoided if the untreated set had local coverage.

    For each month at or after the campaign launch, the per-percentage-point
    effect (the event-study coefficient, estimated per unit share, divided
    by 100) is applied to that month's case count in the untreated set at
    the given coverage gap.  The linear method multiplies effect x gap x
    cases; the exponential variant uses cases x (1 - exp(effect x gap)),
    which is the log-model-consistent version, and the spread between the
    two is itself informative.  The share relates the prevented total to
    all cases in the panel.
    """
    if method not in ("linear", "exponential"):
        raise ParameterError(f"unknown counterfactual method {method!r}")
    coefs = _tau_coef_map(esr)
    if launch_month is None:
        post = panel.loc[panel["post_official"] == 1, "month"]
        if post.empty:
            raise ParameterError("panel has no post-launch months")
        launch_month = int(post.min())

    if untreated_filter is None:
        mask = pd.Series(True, index=panel.index)
    elif callable(untreated_filter):
        mask = untreated_filter(panel)
    else:
        mask = panel["subpref_id"].isin(untreated_filter)

    untreated = panel.loc[mask]
    months = sorted(panel.loc[panel["month"] >= launch_month, "month"].unique())
    cases_by_month = untreated.groupby("month")["cases"].sum()

    prevented = []
    total = 0.0
    for m in months:
        tau = int(m - launch_month)
        if tau not in coefs:
            raise ParameterError(f"event-study result missing post month tau={tau}")
        beta_pp = coefs[tau] / 100.0
        cases_m = float(cases_by_month.get(m, 0.0))
        if method == "linear":
            saved = max(0.0, -beta_pp) * coverage_gap_pp * cases_m
        else:
            saved = max(0.0, cases_m * (1.0 - float(np.exp(beta_pp * coverage_gap_pp))))
        prevented.append((int(m), float(saved)))
        total += saved

    epidemic_total = float(panel["cases"].sum())
    share = total / epidemic_total if epidemic_total > 0 else 0.0
    return CounterfactualResult(
        prevented_by_month=prevented,
        prevented_total=float(total),
        share_of_total_epidemic=float(share),
        method=method,
        coverage_gap_pp=float(coverage_gap_pp),
        untreated_cases_total=float(untreated.loc[untreated["month"] >= launch_month, "cases"].sum()),
        epidemic_cases_total=epidemic_total,
    )
