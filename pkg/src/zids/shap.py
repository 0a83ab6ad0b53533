"""Model-agnostic KernelSHAP: Shapley-kernel coalition weighting, seeded
coalition sampling, and the efficiency-constrained weighted least squares
solve, plus an exact enumeration oracle for small feature counts.

model_fn is any callable mapping a (rows, M) matrix to (rows, K) outputs;
trained classifiers are explained through their probability outputs, one
attribution matrix per class.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import (
    BadBudgetError,
    OutOfRangeError,
    ShapeMismatchError,
    SingularSystemError,
    TooManyFeaturesError,
)

DEFAULT_RIDGE = 1e-10


@dataclass
class Background:
    """Reference rows used to marginalize masked-out features."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ShapeMismatchError("background must be a non-empty 2D matrix")
        self.rows = rows


@dataclass(frozen=True)
class Coalition:
    """A feature subset and its regression weight.

    Weights follow the Shapley kernel: exact per-mask values under full
    enumeration, and the group's kernel mass spread over its draws when
    sampled. The empty and full sets never appear; they enter the solve
    as constraints.
    """

    mask: tuple[bool, ...]
    weight: float

    @property
    def size(self) -> int:
        return sum(self.mask)


@dataclass
class Explanation:
    """Per-class attribution matrices with their base values.

    phi has shape (n_classes, n_rows, n_features); base_values[c] is the
    background mean of output c.
    """

    phi: np.ndarray
    base_values: np.ndarray
    feature_names: list[str]
    class_names: list[str]

    @property
    def n_classes(self) -> int:
        return self.phi.shape[0]

    @property
    def n_rows(self) -> int:
        return self.phi.shape[1]

    @property
    def n_features(self) -> int:
        return self.phi.shape[2]


def kernel_weight(m: int, s: int) -> float:
    """Shapley kernel weight (m-1) / (C(m,s) * s * (m-s)).

    Defined for proper non-empty coalitions only; s = 0 and s = m are
    infinite-weight constraint cases.
    """
    if m < 2:
        raise OutOfRangeError(f"kernel needs at least 2 features: {m}")
    if not 1 <= s <= m - 1:
        raise OutOfRangeError(f"coalition size {s} not in 1..{m - 1}")
    return (m - 1) / (math.comb(m, s) * s * (m - s))


def _mask_tuple(m: int, members) -> tuple[bool, ...]:
    mask = [False] * m
    for j in members:
        mask[j] = True
    return tuple(mask)


def _complement(mask: tuple[bool, ...]) -> tuple[bool, ...]:
    return tuple(not v for v in mask)


def enumerate_or_sample_coalitions(
    m: int, budget: int, seed: int
) -> list[Coalition]:
    """All proper coalitions when they fit the budget, else a seeded sample.

    The sampled path spends the budget groupwise: coalition-size groups
    {s, m-s} are fully enumerated in order of kernel mass per subset while
    affordable, and the remainder is drawn from the leftover size
    distribution, each mask immediately followed by its complement. The
    result always has exactly min(budget, 2^m - 2) entries.
    """
    if budget < 2:
        raise BadBudgetError(f"budget must be >= 2: {budget}")
    if m < 2:
        raise OutOfRangeError(f"need at least 2 features: {m}")

    if 2**m - 2 <= budget:
        out = []
        for s in range(1, m):
            w = kernel_weight(m, s)
            for members in combinations(range(m), s):
                out.append(Coalition(_mask_tuple(m, members), w))
        return out

    rng = np.random.default_rng(seed)
    n_groups = (m - 1 + 1) // 2  # groups {s, m-s} for s = 1 .. ceil((m-1)/2)
    group_sizes = list(range(1, n_groups + 1))
    mass = np.array(
        [
            (m - 1) / (s * (m - s)) * (1.0 if 2 * s == m else 2.0)
            for s in group_sizes
        ]
    )
    mass /= mass.sum()

    coalitions: list[Coalition] = []
    budget_left = budget
    remaining = mass.copy()
    num_full = 0
    for g, s in enumerate(group_sizes):
        group_count = math.comb(m, s) * (1 if 2 * s == m else 2)
        if (
            group_count <= budget_left
            and budget_left * remaining[g] / group_count >= 1.0 - 1e-8
        ):
            per_mask = mass[g] / group_count
            for members in combinations(range(m), s):
                mask = _mask_tuple(m, members)
                coalitions.append(Coalition(mask, per_mask))
                if 2 * s != m:
                    coalitions.append(Coalition(_complement(mask), per_mask))
            budget_left -= group_count
            num_full += 1
            if remaining[g] < 1.0:
                remaining[g + 1 :] /= 1.0 - remaining[g]
        else:
            break

    if budget_left > 0:
        tail_sizes = group_sizes[num_full:]
        probs = mass[num_full:] / mass[num_full:].sum()
        sampled: list[tuple[bool, ...]] = []
        while len(sampled) < budget_left:
            s = int(rng.choice(tail_sizes, p=probs))
            members = rng.permutation(m)[:s]
            mask = _mask_tuple(m, members)
            sampled.append(mask)
            if len(sampled) < budget_left:
                sampled.append(_complement(mask))
        scale = float(mass[num_full:].sum()) / len(sampled)
        coalitions.extend(Coalition(mask, scale) for mask in sampled)
    return coalitions


def _background_rows(background: Union[Background, np.ndarray]) -> np.ndarray:
    if isinstance(background, Background):
        return background.rows
    return Background(np.asarray(background)).rows


def _model_output(model_fn: Callable, z: np.ndarray) -> np.ndarray:
    out = np.asarray(model_fn(z), dtype=np.float64)
    if out.ndim == 1:
        out = out[:, None]
    if out.shape[0] != z.shape[0]:
        raise ShapeMismatchError(
            f"model_fn returned {out.shape[0]} rows for {z.shape[0]} inputs"
        )
    return out


def _masked_values(
    model_fn: Callable,
    x: np.ndarray,
    background: np.ndarray,
    masks: np.ndarray,
    chunk_rows: int = 262144,
) -> np.ndarray:
    """Mean model output per mask: x where the mask is on, background
    elsewhere. Returns (n_masks, K)."""
    b, d = background.shape
    n_masks = masks.shape[0]
    masks_per_chunk = max(1, chunk_rows // b)
    parts = []
    for start in range(0, n_masks, masks_per_chunk):
        mk = masks[start : start + masks_per_chunk]
        c = mk.shape[0]
        on = np.repeat(mk, b, axis=0)
        z = np.where(on, x[None, :], np.tile(background, (c, 1)))
        preds = _model_output(model_fn, z)
        parts.append(preds.reshape(c, b, -1).mean(axis=1))
    return np.concatenate(parts, axis=0)


def masked_eval(
    model_fn: Callable,
    x: np.ndarray,
    background: Union[Background, np.ndarray],
    mask: Sequence[bool],
) -> np.ndarray:
    """Background-averaged model output for one coalition mask."""
    bg = _background_rows(background)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != bg.shape[1]:
        raise ShapeMismatchError(
            f"row width {x.size} vs background width {bg.shape[1]}"
        )
    masks = np.asarray(mask, dtype=bool).reshape(1, -1)
    if masks.shape[1] != x.size:
        raise ShapeMismatchError(f"mask width {masks.shape[1]} vs row width {x.size}")
    return _masked_values(model_fn, x, bg, masks)[0]


def kernel_shap(
    model_fn: Callable,
    x_rows: np.ndarray,
    background: Union[Background, np.ndarray],
    budget: Optional[int] = None,
    seed: int = 0,
    feature_names: Optional[Sequence[str]] = None,
    class_names: Optional[Sequence[str]] = None,
    ridge: float = DEFAULT_RIDGE,
) -> Explanation:
    """Shapley attributions for each row and class via weighted least squares.

    One coalition set is drawn per call and reused for every explained row,
    so attributions are deterministic given (model, rows, background,
    budget, seed). The efficiency constraint (attributions sum to
    f(x) - base) is eliminated by substituting the last feature, which
    makes it hold exactly. Under full coalition enumeration the solution
    equals the exact Shapley values.

    Raises SingularSystemError when the coalition design is rank-deficient
    even after the documented ridge fallback; the design is shared across
    classes, so the failure is reported for the first class.
    """
    bg = _background_rows(background)
    x_rows = np.atleast_2d(np.asarray(x_rows, dtype=np.float64))
    n_rows, m = x_rows.shape
    if m < 2:
        raise OutOfRangeError(f"need at least 2 features to explain: {m}")
    if bg.shape[1] != m:
        raise ShapeMismatchError(
            f"background width {bg.shape[1]} vs explained width {m}"
        )
    if budget is None:
        budget = 2 * m + 2048

    coalitions = enumerate_or_sample_coalitions(m, budget, seed)
    z = np.array([c.mask for c in coalitions], dtype=np.float64)
    w = np.array([c.weight for c in coalitions], dtype=np.float64)

    fx = _model_output(model_fn, x_rows)  # (n_rows, K)
    f0 = _model_output(model_fn, bg).mean(axis=0)  # (K,)
    k = fx.shape[1]

    # Constraint elimination: solve for the first m-1 attributions, close
    # the last one with sum(phi) = f(x) - f0.
    x_design = z[:, :-1] - z[:, -1:]
    xw = x_design * w[:, None]
    gram = x_design.T @ xw

    masks_bool = z.astype(bool)
    rhs = np.empty((m - 1, n_rows * k))
    deltas = fx - f0[None, :]  # (n_rows, K)
    for i in range(n_rows):
        v = _masked_values(model_fn, x_rows[i], bg, masks_bool)  # (n_coal, K)
        y2 = (v - f0[None, :]) - z[:, -1:] * deltas[i][None, :]
        rhs[:, i * k : (i + 1) * k] = xw.T @ y2

    try:
        solved = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        try:
            solved = np.linalg.solve(gram + ridge * np.eye(m - 1), rhs)
        except np.linalg.LinAlgError:
            raise SingularSystemError(0) from None

    phi = np.empty((k, n_rows, m))
    for i in range(n_rows):
        head = solved[:, i * k : (i + 1) * k]  # (m-1, K)
        phi[:, i, :-1] = head.T
        phi[:, i, -1] = deltas[i] - head.sum(axis=0)

    if feature_names is None:
        feature_names = [f"f{j}" for j in range(m)]
    if class_names is None:
        class_names = [f"class_{c}" for c in range(k)]
    return Explanation(
        phi=phi,
        base_values=f0,
        feature_names=list(feature_names),
        class_names=list(class_names),
    )


def exact_shapley(
    model_fn: Callable,
    x: np.ndarray,
    background: Union[Background, np.ndarray],
) -> np.ndarray:
    """Exact Shapley values by full subset enumeration; (K, M) array.

    phi_j = sum over S not containing j of
    |S|! (M-|S|-1)! / M! * (v(S + j) - v(S)), with v the background-averaged
    masked evaluation. Costs 2^M evaluations, so M is capped at 15.
    """
    bg = _background_rows(background)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    m = x.size
    if m > 15:
        raise TooManyFeaturesError(f"exact enumeration capped at 15 features: {m}")
    if bg.shape[1] != m:
        raise ShapeMismatchError(
            f"background width {bg.shape[1]} vs row width {m}"
        )

    n_masks = 1 << m
    mask_ints = np.arange(n_masks, dtype=np.int64)
    masks = ((mask_ints[:, None] >> np.arange(m)) & 1).astype(bool)
    v = _masked_values(model_fn, x, bg, masks)  # (n_masks, K)
    popcount = masks.sum(axis=1)

    fact = [math.factorial(i) for i in range(m + 1)]
    weight_by_size = np.array(
        [fact[s] * fact[m - s - 1] / fact[m] for s in range(m)]
    )

    k = v.shape[1]
    phi = np.zeros((k, m))
    for j in range(m):
        without_j = mask_ints[(mask_ints >> j) & 1 == 0]
        with_j = without_j | (1 << j)
        w = weight_by_size[popcount[without_j]]
        phi[:, j] = ((v[with_j] - v[without_j]) * w[:, None]).sum(axis=0)
    return phi


def top_features(expl: Explanation, k: int) -> list[list[tuple[str, float]]]:
    """Per class, the k features with highest mean |attribution|.

    Ranked descending; ties resolve to the lower feature index. k larger
    than the feature count clamps to all features.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1: {k}")
    out = []
    m = expl.n_features
    take = min(k, m)
    for c in range(expl.n_classes):
        mean_abs = np.abs(expl.phi[c]).mean(axis=0)
        order = np.lexsort((np.arange(m), -mean_abs))[:take]
        out.append([(expl.feature_names[j], float(mean_abs[j])) for j in order])
    return out


def efficiency_residuals(expl: Explanation, fx: np.ndarray) -> np.ndarray:
    """|sum(phi) + base - f(x)| per class and row; (K, n_rows)."""
    fx = np.asarray(fx, dtype=np.float64)
    totals = expl.phi.sum(axis=2) + expl.base_values[:, None]
    return np.abs(totals - fx.T)


def explanation_csv(expl: Explanation, class_index: int) -> bytes:
    """One class's attributions: base_value line, feature header, one row
    per explained instance."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["base_value", repr(float(expl.base_values[class_index]))])
    writer.writerow(expl.feature_names)
    for row in expl.phi[class_index]:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue().encode("utf-8")


def top_features_csv(expl: Explanation, k: int) -> bytes:
    """Ranked summary across classes: class,rank,feature,mean_abs_shap."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["class", "rank", "feature", "mean_abs_shap"])
    for c, ranking in enumerate(top_features(expl, k)):
        for rank, (feature, value) in enumerate(ranking, start=1):
            writer.writerow([expl.class_names[c], rank, feature, repr(value)])
    return buf.getvalue().encode("utf-8")
