"""Post-processing of the experiment grid and latent positions.

Nested ANOVA coding (treatment contrasts, one indicator per non-reference
level):

    capacity       gamma_shifted            vs constant_calibrated
    susceptibility gamma                    vs constant_2
    modularity     high                     vs low
    sampling       max_capacity within low,
                   max_capacity within high vs random

Each factor is tested with the partial F statistic comparing the full model
against the model without that factor's columns.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, is_dataclass

import numpy as np
from scipy import special

from .graph import UndefinedStatistic

FACTORS = {
    "capacity": ["capacity[gamma_shifted]"],
    "susceptibility": ["susceptibility[gamma]"],
    "modularity": ["modularity[high]"],
    "sampling/modularity": ["sampling[max_capacity]/modularity[low]",
                            "sampling[max_capacity]/modularity[high]"],
}
CODING = ("treatment contrasts; reference levels: capacity=constant_calibrated, "
          "susceptibility=constant_2, modularity=low, sampling=random (nested in modularity)")


def f_sf(f: float, dfn: float, dfd: float) -> float:
    """Upper tail of the F distribution via the regularised incomplete beta."""
    if f <= 0:
        return 1.0
    return float(special.betainc(dfd / 2.0, dfn / 2.0, dfd / (dfd + dfn * f)))


def chi2_sf(x: float, df: float) -> float:
    """Upper tail of chi-square via the regularised upper incomplete gamma."""
    if x <= 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


def _as_dict(r):
    return asdict(r) if is_dataclass(r) else dict(r)


def design_matrix(records) -> tuple[np.ndarray, list[str]]:
    rows = [_as_dict(r) for r in records]
    cols = ["intercept"] + [c for f in FACTORS.values() for c in f]
    X = np.zeros((len(rows), len(cols)))
    for k, r in enumerate(rows):
        low = r["modularity_regime"] == "low"
        maxcap = r["initiator_rule"] == "max_capacity"
        X[k] = [1.0,
                r["o_dist"] == "gamma_shifted",
                r["i_dist"] == "gamma",
                not low,
                maxcap and low,
                maxcap and not low]
    return X, cols


def _rss(X, y):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    return float(resid @ resid), beta, resid


def fit_anova(y, X, cols, alpha: float = 0.05, factors=None) -> dict:
    """Partial F test per factor: the model without that factor's columns
    against the full model. ``factors`` maps names to column names
    (default: the scenario-grid factors)."""
    factors = FACTORS if factors is None else factors
    y = np.asarray(y, dtype=np.float64)
    m, k = X.shape
    rank = np.linalg.matrix_rank(X)
    if rank < k:
        raise ValueError("design is rank deficient for these records")
    df_res = m - k
    if df_res < 1:
        raise ValueError("not enough observations for the full model")
    rss_full, beta, resid = _rss(X, y)
    tss = float(np.sum((y - y.mean()) ** 2))
    sigma2 = rss_full / df_res
    table = []
    for factor, names in factors.items():
        idx = [cols.index(c) for c in names]
        keep = [j for j in range(k) if j not in idx]
        rss_red, *_ = _rss(X[:, keep], y)
        ss = rss_red - rss_full
        df = len(idx)
        F = (ss / df) / sigma2 if sigma2 > 0 else float("inf")
        p = f_sf(F, df, df_res)
        table.append({"factor": factor, "df": df, "sum_sq": ss, "F": F, "p": p,
                      "significant": bool(p < alpha),
                      "coefficients": {c: float(beta[cols.index(c)]) for c in names}})
    return {
        "table": table,
        "intercept": float(beta[0]),
        "coefficients": dict(zip(cols, map(float, beta))),
        "df_residual": df_res,
        "ss_total": tss,
        "ss_model": tss - rss_full,
        "ss_residual": rss_full,
        "residuals": resid,
        "alpha": alpha,
        "coding": CODING,
    }


def nested_anova(records, response: str = "log_total_time", alpha: float = 0.05) -> dict:
    """ANOVA of log diffusion time or log reach over the scenario grid.

    Records whose response is not strictly positive are dropped (count in
    ``n_excluded``) because the log is undefined.
    """
    field = {"log_total_time": "total_time", "log_reach": "reach"}.get(response)
    if field is None:
        raise ValueError("response must be log_total_time or log_reach")
    rows = [_as_dict(r) for r in records]
    keep = [r for r in rows if r[field] > 0 and math.isfinite(r[field])]
    n_excluded = len(rows) - len(keep)
    if n_excluded:
        warnings.warn(f"{n_excluded} records with non-positive {field} excluded", RuntimeWarning)
    y = np.log([r[field] for r in keep])
    X, cols = design_matrix(keep)
    out = fit_anova(y, X, cols, alpha)
    out["response"] = response
    out["n_used"] = len(keep)
    out["n_excluded"] = n_excluded
    groups = [r["spec_id"] for r in keep] if keep and "spec_id" in keep[0] else None
    diag = {}
    try:
        diag["jarque_bera_p"] = jarque_bera(out["residuals"])["p"]
    except (UndefinedStatistic, ValueError):
        diag["jarque_bera_p"] = None
    try:
        diag["levene_p"] = levene(out["residuals"], groups)["p"] if groups is not None else None
    except (UndefinedStatistic, ValueError):
        diag["levene_p"] = None
    out["diagnostics"] = diag
    return out


def anova_report(result: dict) -> dict:
    """JSON-ready view: one row per factor plus the diagnostics block."""
    return {
        "schema": "anova-report/1",
        "response": result["response"],
        "coding": result["coding"],
        "alpha": result["alpha"],
        "n_used": result["n_used"],
        "n_excluded": result["n_excluded"],
        "intercept": result["intercept"],
        "factors": [{k: v for k, v in row.items()} for row in result["table"]],
        "df_residual": result["df_residual"],
        "diagnostics": result["diagnostics"],
    }


def jarque_bera(residuals) -> dict:
    x = np.asarray(residuals, dtype=np.float64)
    m = len(x)
    if m < 8:
        raise ValueError("Jarque-Bera needs at least 8 residuals")
    xc = x - x.mean()
    m2 = float(np.mean(xc ** 2))
    if m2 == 0:
        raise UndefinedStatistic("constant residuals")
    skew = float(np.mean(xc ** 3)) / m2 ** 1.5
    kurt = float(np.mean(xc ** 4)) / m2 ** 2 - 3.0
    jb = m / 6.0 * (skew ** 2 + kurt ** 2 / 4.0)
    # chi-square(2) upper tail is exp(-x/2)
    return {"statistic": jb, "p": math.exp(-jb / 2.0), "skewness": skew, "excess_kurtosis": kurt}


def levene(values, groups) -> dict:
    """Brown-Forsythe test: one-way ANOVA on |x - group median|."""
    values = np.asarray(values, dtype=np.float64)
    groups = np.asarray(groups)
    levels = list(dict.fromkeys(groups.tolist()))
    if len(levels) < 2:
        raise ValueError("need at least 2 groups")
    z, g = [], []
    for k, lev in enumerate(levels):
        x = values[groups == lev]
        if len(x) < 2:
            raise ValueError(f"group {lev!r} has fewer than 2 members")
        z.append(np.abs(x - np.median(x)))
        g.append(np.full(len(x), k))
    z_all = np.concatenate(z)
    N, K = len(z_all), len(levels)
    grand = z_all.mean()
    between = sum(len(zk) * (zk.mean() - grand) ** 2 for zk in z)
    within = sum(float(np.sum((zk - zk.mean()) ** 2)) for zk in z)
    if within == 0:
        if between == 0:
            return {"statistic": 0.0, "p": 1.0}
        raise UndefinedStatistic("zero within-group spread of absolute deviations")
    W = (N - K) / (K - 1) * between / within
    return {"statistic": float(W), "p": f_sf(W, K - 1, N - K)}


def pca_variance_share(U) -> np.ndarray:
    """Share of total variance along each principal axis, descending."""
    U = np.asarray(U, dtype=np.float64)
    n, p = U.shape
    if n <= p:
        raise ValueError("need more rows than columns")
    Uc = U - U.mean(axis=0)
    ev = np.linalg.eigvalsh(Uc.T @ Uc / (n - 1))[::-1]
    ev = np.clip(ev, 0.0, None)
    total = ev.sum()
    if total == 0:
        raise UndefinedStatistic("all rows identical")
    return ev / total
