"""Independent brute-force reference implementations used by the tests.

Everything here deliberately avoids the library's vectorized code paths:
plain Python loops, sorted(), itertools enumeration, and scipy optimizers
act as the independent side of every dual-route check.
"""

from itertools import combinations

import numpy as np
from scipy import optimize


def nearest_opposite(scores, treatment, k):
    """Exhaustive k-nearest opposite-group search; ties broken by lower index."""
    n = len(scores)
    neighbors = []
    for i in range(n):
        candidates = [
            (abs(float(scores[i]) - float(scores[j])), j)
            for j in range(n)
            if treatment[j] != treatment[i]
        ]
        candidates.sort()
        neighbors.append([j for _, j in candidates[: min(k, len(candidates))]])
    return neighbors


def matching_contributions(scores, treatment, outcomes, neighbors):
    """Per-unit signed imputation terms, computed with scalar arithmetic."""
    terms = []
    for i in range(len(scores)):
        matched = neighbors[i]
        counterfactual = np.array([outcomes[j] for j in matched]).mean()
        sign = 1.0 if treatment[i] == 1 else -1.0
        terms.append(sign * (float(outcomes[i]) - float(counterfactual)))
    return terms


def balance_values(X, treatment, neighbors):
    """Standardized differences with controls weighted by match multiplicity."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    weights = [0.0] * n
    for i in range(n):
        if treatment[i] != 1:
            continue
        for j in neighbors[i]:
            weights[j] += 1.0 / len(neighbors[i])
    total_weight = sum(weights)
    treated_rows = [i for i in range(n) if treatment[i] == 1]
    values = []
    for column in range(p):
        mean_t = np.array([X[i, column] for i in treated_rows]).mean()
        if total_weight > 0:
            mean_c = sum(weights[i] * X[i, column] for i in range(n)) / total_weight
        else:
            mean_c = mean_t
        gap = mean_t - mean_c
        if gap == 0.0:
            values.append(0.0)
            continue
        treated_column = np.array([X[i, column] for i in treated_rows])
        sd = treated_column.std(ddof=1) if len(treated_column) > 1 else 0.0
        values.append(gap / sd if sd > 0 else np.inf * np.sign(gap))
    return values


def matching_ate_with_retry(scores, X, treatment, outcomes, k=1, retry_k=3, threshold=0.25):
    """The documented match -> balance -> retry -> estimate pipeline, by hand."""
    neighbors = nearest_opposite(scores, treatment, k)
    diffs = balance_values(X, treatment, neighbors)
    if retry_k and retry_k != k and not all(abs(d) < threshold for d in diffs):
        neighbors = nearest_opposite(scores, treatment, retry_k)
    terms = matching_contributions(scores, treatment, outcomes, neighbors)
    return float(np.mean(np.array(terms)))


def exhaustive_permutation_p(statistic, T, observed, tail):
    """Exact permutation p over every distinct labelling with these group sizes.

    ``statistic`` maps a 0/1 label vector to a real test statistic.
    """
    n = len(T)
    n_treated = int(np.sum(T))
    values = []
    for positions in combinations(range(n), n_treated):
        labels = np.zeros(n, dtype=np.int8)
        labels[list(positions)] = 1
        values.append(statistic(labels))
    values = np.array(values)
    if tail == "lower":
        count = np.sum(values < observed)
    elif tail == "upper":
        count = np.sum(values > observed)
    else:
        count = np.sum(np.abs(values) > abs(observed))
    return count / len(values), values


def logistic_coefficients(X, T, ridge):
    """Ridge-penalized logistic fit through a generic scipy optimizer."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    T = np.asarray(T, dtype=float)
    Z = np.hstack([np.ones((len(X), 1)), X])

    def negative_objective(beta):
        eta = Z @ beta
        loglik = T @ eta - np.logaddexp(0.0, eta).sum()
        return -(loglik - 0.5 * ridge * beta @ beta)

    def gradient(beta):
        mu = 1.0 / (1.0 + np.exp(-np.clip(Z @ beta, -700, 700)))
        return -(Z.T @ (T - mu) - ridge * beta)

    result = optimize.minimize(
        negative_objective,
        np.zeros(Z.shape[1]),
        jac=gradient,
        method="BFGS",
        options={"gtol": 1e-12, "maxiter": 1000},
    )
    return result.x
