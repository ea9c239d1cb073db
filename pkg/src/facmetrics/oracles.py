"""Brute-force reference implementations backing the acceptance tests.

Everything here is deliberately naive: dense dummy matrices, explicit
Newton steps, exhaustive permutation enumeration. None of it shares a
numerical kernel with the engine modules it checks.
"""

from __future__ import annotations

from itertools import combinations, permutations, product
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError, NumericalError

MAX_ORACLE_SLOTS = 8


def dense_design(X: np.ndarray, fe_codes: Sequence[np.ndarray]) -> np.ndarray:
    """Intercept, slope columns, then per-dimension dummies with the
    first level dropped as reference."""
    n = X.shape[0]
    blocks = [np.ones((n, 1)), X]
    for codes in fe_codes:
        n_levels = int(codes.max()) + 1
        dummies = np.zeros((n, n_levels - 1))
        for lvl in range(1, n_levels):
            dummies[:, lvl - 1] = (codes == lvl).astype(np.float64)
        blocks.append(dummies)
    return np.hstack(blocks)


def oracle_dense_ols(y: np.ndarray, X: np.ndarray, fe_codes: Sequence[np.ndarray],
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Normal-equations solution on the dense-dummy design.

    Returns (beta, se) for the slope columns only (X's columns), with
    classical SEs using RSS / (n - p). Raises on a singular system."""
    D = dense_design(X, fe_codes)
    n, p = D.shape
    dtd = D.T @ D
    if np.linalg.matrix_rank(dtd) < p:
        raise NumericalError("singular dense system")
    theta = np.linalg.solve(dtd, D.T @ y)
    resid = y - D @ theta
    sigma2 = float(resid @ resid) / (n - p)
    cov = sigma2 * np.linalg.inv(dtd)
    k = X.shape[1]
    return theta[1:1 + k], np.sqrt(np.diag(cov)[1:1 + k])


def oracle_dense_logit(y: np.ndarray, X: np.ndarray, fe_codes: Sequence[np.ndarray],
                       max_iter: int = 200, grad_tol: float = 1e-10) -> np.ndarray:
    """Unconditional logit MLE by Newton iterations on the dense-dummy
    design, run to gradient max-norm below grad_tol. Input must already
    be separation-pruned. Returns slope coefficients only."""
    D = dense_design(X, fe_codes)
    n, p = D.shape
    theta = np.zeros(p)
    for _ in range(max_iter):
        eta = D @ theta
        mu = 1.0 / (1.0 + np.exp(-eta))
        grad = D.T @ (y - mu)
        if np.max(np.abs(grad)) < grad_tol:
            k = X.shape[1]
            return theta[1:1 + k]
        W = mu * (1.0 - mu)
        hess = D.T @ (W[:, None] * D)
        try:
            theta = theta + np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular Hessian in dense logit oracle") from exc
    raise NumericalError(f"dense logit oracle did not converge in {max_iter} iterations")


def _pairs_of(journals: Sequence[str], multiset: bool) -> dict[tuple[str, str], int]:
    out: dict[tuple[str, str], int] = {}
    if multiset:
        for i in range(len(journals)):
            for j in range(i + 1, len(journals)):
                a, b = journals[i], journals[j]
                if a == b:
                    continue
                key = (a, b) if a < b else (b, a)
                out[key] = out.get(key, 0) + 1
    else:
        for a, b in combinations(sorted(set(journals)), 2):
            out[(a, b)] = 1
    return out


def oracle_exhaustive_null(paper_refs: Sequence[Sequence[tuple[str, object]]],
                           multiset: bool = False,
                           ) -> dict[tuple[str, str], tuple[float, float]]:
    """Exact null pair moments by enumerating every stratum permutation.

    `paper_refs` gives, per paper, its reference slots as (journal,
    stratum_key) tuples. Slots sharing a stratum key exchange journal
    labels; all index permutations of a stratum are equally likely, so
    enumerating them (duplicates included) weights repeated labels
    correctly. Returns pair -> (exact mean, exact population std).
    Strata above 8 slots are refused."""
    strata: dict[object, list[str]] = {}
    slot_addr: dict[object, list[tuple[int, int]]] = {}
    for pi, refs in enumerate(paper_refs):
        for ki, (journal, key) in enumerate(refs):
            strata.setdefault(key, []).append(journal)
            slot_addr.setdefault(key, []).append((pi, ki))
    for key, labels in strata.items():
        if len(labels) > MAX_ORACLE_SLOTS:
            raise InputError(
                f"stratum {key!r} has {len(labels)} slots; oracle limit is {MAX_ORACLE_SLOTS}"
            )

    keys = sorted(strata, key=repr)
    all_perms = [list(permutations(strata[k])) for k in keys]

    sums: dict[tuple[str, str], float] = {}
    sumsqs: dict[tuple[str, str], float] = {}
    total = 0
    for assignment in product(*all_perms):
        total += 1
        per_paper: dict[int, dict[int, str]] = {}
        for key, labels in zip(keys, assignment):
            for (pi, ki), j in zip(slot_addr[key], labels):
                per_paper.setdefault(pi, {})[ki] = j
        for pi, slots in per_paper.items():
            journals = [slots[k] for k in sorted(slots)]
            for pair, c in _pairs_of(journals, multiset).items():
                sums[pair] = sums.get(pair, 0.0) + c
                sumsqs[pair] = sumsqs.get(pair, 0.0) + c * c

    out: dict[tuple[str, str], tuple[float, float]] = {}
    for pair in sums:
        mean = sums[pair] / total
        var = sumsqs[pair] / total - mean * mean
        out[pair] = (mean, float(np.sqrt(max(var, 0.0))))
    return out


def nearest_rank_oracle(values: Sequence[float], q: float) -> float:
    """Independent percentile check: walk the sorted list and stop at the
    first index whose 1-based rank reaches ceil(q * k)."""
    ordered = sorted(values)
    k = len(ordered)
    target = int(np.ceil(q * k))
    if target < 1:
        target = 1
    rank = 0
    for v in ordered:
        rank += 1
        if rank >= target:
            return v
    return ordered[-1]


def h_index_oracle(citations: Sequence[int]) -> int:
    """Sort-scan h-index used to cross-check the engine version."""
    best = 0
    ordered = sorted(citations, reverse=True)
    for h in range(1, len(ordered) + 1):
        if sum(1 for c in ordered if c >= h) >= h:
            best = h
    return best


def rao_stirling_oracle(shares: Mapping[str, float], d: Mapping[tuple[str, str], float]) -> float:
    """Literal ordered-pair double loop over the share map."""
    total = 0.0
    for m in shares:
        for n in shares:
            if m == n:
                continue
            dist = d.get((m, n), d.get((n, m), 0.0))
            total += dist * shares[m] * shares[n]
    return total
