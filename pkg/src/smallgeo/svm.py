"""Soft-margin linear SVM trained by dual coordinate descent, one-vs-one.

Each binary subproblem minimizes the L1-loss dual
``f(a) = 1/2 a'Qa - sum(a)`` over ``0 <= a_i <= C`` with
``Q_ij = y_i y_j x_i.x_j``, keeping ``w = sum a_i y_i x_i`` up to date so a
coordinate update costs O(d).  A pass visits all coordinates in a seeded
random order; the solver stops when the largest projected-gradient violation
after a full pass is at most ``eps``.  The bias is recovered afterwards from
support vectors with ``0 < a_i < C`` (falling back to the midpoint of the
feasible interval that the boundary multipliers leave for it).

The decision value of the (i, j) classifier votes for class i when positive,
class j otherwise; aggregate vote ties resolve to the smallest class id.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateModelError, DimensionError, InvalidInputError
from .errors import NonConvergenceWarning
from .labels import SampleSet, Scaler, apply_scaler, fit_scaler


@dataclass
class BinaryDualResult:
    """Solution of one pairwise subproblem (training-time diagnostics included)."""

    w: np.ndarray
    b: float
    alpha: np.ndarray
    n_pass: int
    converged: bool
    max_violation: float
    objective_trace: np.ndarray | None = None


def dual_objective(alpha: np.ndarray, w: np.ndarray) -> float:
    """Dual value ``sum(a) - 1/2 ||w||^2`` (to be maximized)."""
    return float(alpha.sum() - 0.5 * (w @ w))


def projected_gradient_violations(X, y, w, alpha, C) -> np.ndarray:
    """|projected gradient| per sample for the no-bias dual at (alpha, w)."""
    g = y * (X @ w) - 1.0
    pg = np.where(
        alpha <= 0.0, np.minimum(g, 0.0),
        np.where(alpha >= C, np.maximum(g, 0.0), g),
    )
    return np.abs(pg)


def _bias_from_kkt(X, y, w, alpha, C) -> float:
    margins = X @ w
    interior = (alpha > 0.0) & (alpha < C)
    if interior.any():
        return float(np.mean(y[interior] - margins[interior]))
    # Boundary multipliers constrain b to an interval: alpha=0 wants
    # y(m+b) >= 1, alpha=C wants y(m+b) <= 1.  Take the midpoint.
    lo, hi = -np.inf, np.inf
    at_zero = alpha <= 0.0
    at_c = alpha >= C
    pos, neg = y > 0, y < 0
    cand_lo = []
    cand_hi = []
    if (at_zero & pos).any():
        cand_lo.append(np.max(1.0 - margins[at_zero & pos]))
    if (at_c & neg).any():
        cand_lo.append(np.max(-1.0 - margins[at_c & neg]))
    if (at_zero & neg).any():
        cand_hi.append(np.min(-1.0 - margins[at_zero & neg]))
    if (at_c & pos).any():
        cand_hi.append(np.min(1.0 - margins[at_c & pos]))
    if cand_lo:
        lo = max(cand_lo)
    if cand_hi:
        hi = min(cand_hi)
    if np.isinf(lo) and np.isinf(hi):
        return 0.0
    if np.isinf(lo):
        return float(hi)
    if np.isinf(hi):
        return float(lo)
    return float((lo + hi) / 2.0)


def solve_binary_dual(X, y, C: float = 1.0, eps: float = 0.01,
                      max_iter: int = 1000, rng=None,
                      record_objective: bool = False) -> BinaryDualResult:
    """Coordinate-descent solve of one binary subproblem.

    ``X`` is (n, d) standardized features, ``y`` is +1/-1.  ``max_iter``
    caps full passes; the objective trace (one dual value per coordinate
    update) is recorded only on request.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    rng = rng if rng is not None else np.random.default_rng(0)
    alpha = np.zeros(n)
    w = np.zeros(d)
    qii = np.einsum("ij,ij->i", X, X)
    trace: list[float] = []
    converged = False
    max_viol = np.inf
    n_pass = 0
    for n_pass in range(1, max_iter + 1):
        order = rng.permutation(n)
        for i in order:
            yi = y[i]
            g = yi * (X[i] @ w) - 1.0
            a = alpha[i]
            if a <= 0.0:
                pg = min(g, 0.0)
            elif a >= C:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0:
                if qii[i] > 0.0:
                    a_new = min(max(a - g / qii[i], 0.0), C)
                else:
                    # zero vector: gradient is -1, pushes straight to the cap
                    a_new = C if g < 0.0 else 0.0
                if a_new != a:
                    w += (a_new - a) * yi * X[i]
                    alpha[i] = a_new
            if record_objective:
                trace.append(dual_objective(alpha, w))
        max_viol = float(projected_gradient_violations(X, y, w, alpha, C).max())
        if max_viol <= eps:
            converged = True
            break
    b = _bias_from_kkt(X, y, w, alpha, C)
    return BinaryDualResult(
        w, b, alpha, n_pass, converged, max_viol,
        np.asarray(trace) if record_objective else None,
    )


@dataclass
class SvmModel:
    """One-vs-one linear SVM over standardized band features."""

    weights: np.ndarray            # (p, d) one row per class pair
    biases: np.ndarray             # (p,)
    pairs: np.ndarray              # (p, 2) class ids, smaller id first
    classes: np.ndarray            # ascending class ids
    C: float
    eps: float
    scaler: Scaler
    converged: np.ndarray | None = None   # (p,) bool
    n_pass: np.ndarray | None = None      # (p,)
    max_iter: int = 1000
    seed: int = 0
    # training-only diagnostics, not serialized
    alphas: list[np.ndarray] | None = field(default=None, repr=False)
    objective_traces: list[np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        self.pairs = np.asarray(self.pairs, dtype=np.int32)
        self.classes = np.asarray(self.classes, dtype=np.int32)
        k = len(self.classes)
        if len(self.pairs) != k * (k - 1) // 2:
            raise DimensionError(
                f"{len(self.pairs)} pairwise classifiers for {k} classes; "
                f"expected {k * (k - 1) // 2}"
            )
        if not np.isfinite(self.weights).all() or not np.isfinite(self.biases).all():
            raise InvalidInputError("non-finite SVM weights")

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def pairwise_decisions(self, features: np.ndarray, prescaled: bool = False) -> np.ndarray:
        """Decision values w.x + b for every pair; (p,) for a vector, (n, p) for a matrix."""
        x = np.asarray(features, dtype=np.float64)
        if not prescaled:
            x = self.scaler.apply(x)
        return x @ self.weights.T + self.biases

    def predict(self, feature_vector) -> tuple[int, dict[int, int]]:
        return svm_predict(self, feature_vector)

    def predict_batch(self, features: np.ndarray) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2:
            raise InvalidInputError("expected an (n, d) feature matrix")
        if not np.isfinite(X).all():
            raise InvalidInputError("feature matrix contains NaN or infinity")
        dec = self.pairwise_decisions(X)
        votes = _tally_votes(dec, self.pairs, self.classes)
        return self.classes[np.argmax(votes, axis=1)].astype(np.int32)


def _tally_votes(decisions: np.ndarray, pairs: np.ndarray, classes: np.ndarray) -> np.ndarray:
    pos = {int(c): i for i, c in enumerate(classes)}
    one = np.atleast_2d(decisions)
    votes = np.zeros((one.shape[0], len(classes)), dtype=np.int32)
    for p, (ci, cj) in enumerate(pairs):
        win_i = one[:, p] > 0.0
        votes[win_i, pos[int(ci)]] += 1
        votes[~win_i, pos[int(cj)]] += 1
    return votes


def train_linear_svm(samples: SampleSet, C: float = 1.0, eps: float = 0.01,
                     max_iter: int = 1000, seed: int = 0,
                     record_objective: bool = False) -> SvmModel:
    """Fit the one-vs-one linear SVM; features are standardized internally.

    Subproblems that hit ``max_iter`` before reaching tolerance emit a
    :class:`NonConvergenceWarning` and are flagged on the model.
    """
    classes = np.unique(samples.labels).astype(np.int32)
    if len(classes) < 2:
        raise DegenerateModelError(
            f"need at least 2 classes to train, got {[int(c) for c in classes]}"
        )
    scaler = fit_scaler(samples)
    Xs = apply_scaler(scaler, samples.features)
    y_all = samples.labels
    pairs = [(int(ci), int(cj)) for a, ci in enumerate(classes) for cj in classes[a + 1:]]
    weights = np.zeros((len(pairs), Xs.shape[1]))
    biases = np.zeros(len(pairs))
    converged = np.zeros(len(pairs), dtype=bool)
    n_pass = np.zeros(len(pairs), dtype=np.int32)
    alphas: list[np.ndarray] = []
    traces: list[np.ndarray] = []
    for p, (ci, cj) in enumerate(pairs):
        mask = (y_all == ci) | (y_all == cj)
        Xp = Xs[mask]
        yp = np.where(y_all[mask] == ci, 1.0, -1.0)
        res = solve_binary_dual(
            Xp, yp, C=C, eps=eps, max_iter=max_iter,
            rng=np.random.default_rng([seed, p]),
            record_objective=record_objective,
        )
        if not res.converged:
            warnings.warn(
                f"pair ({ci}, {cj}) stopped after {res.n_pass} passes with "
                f"violation {res.max_violation:.3g} > eps {eps}",
                NonConvergenceWarning,
            )
        weights[p] = res.w
        biases[p] = res.b
        converged[p] = res.converged
        n_pass[p] = res.n_pass
        alphas.append(res.alpha)
        if record_objective:
            traces.append(res.objective_trace)
    return SvmModel(
        weights, biases, np.asarray(pairs), classes, C, eps, scaler,
        converged=converged, n_pass=n_pass, max_iter=max_iter, seed=seed,
        alphas=alphas, objective_traces=traces if record_objective else None,
    )


def svm_predict(model: SvmModel, feature_vector) -> tuple[int, dict[int, int]]:
    """Majority vote over all pairwise classifiers; ties go to the smallest id."""
    x = np.asarray(feature_vector, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError(f"expected a 1-D feature vector, got {x.ndim}-D")
    if not np.isfinite(x).all():
        raise InvalidInputError("feature vector contains NaN or infinity")
    if len(x) != model.d:
        raise DimensionError(f"vector has {len(x)} features, model expects {model.d}")
    dec = model.pairwise_decisions(x)
    votes = _tally_votes(dec, model.pairs, model.classes)[0]
    winner = int(model.classes[int(np.argmax(votes))])
    return winner, {int(c): int(v) for c, v in zip(model.classes, votes)}


def kkt_report(model: SvmModel, samples: SampleSet) -> list[dict]:
    """Re-audit every pairwise subproblem against its stored multipliers.

    Returns one dict per pair with the maximal projected-gradient violation
    and the with-bias margin residual of interior support vectors.  Requires
    a model that still carries its training-time ``alphas``.
    """
    if model.alphas is None:
        raise InvalidInputError("model carries no training multipliers to audit")
    Xs = apply_scaler(model.scaler, samples.features)
    y_all = samples.labels
    report = []
    for p, (ci, cj) in enumerate(model.pairs):
        mask = (y_all == ci) | (y_all == cj)
        Xp = Xs[mask]
        yp = np.where(y_all[mask] == ci, 1.0, -1.0)
        alpha = model.alphas[p]
        w = model.weights[p]
        b = model.biases[p]
        viol = projected_gradient_violations(Xp, yp, w, alpha, model.C)
        interior = (alpha > 0.0) & (alpha < model.C)
        margins = yp * (Xp @ w + b)
        interior_resid = (
            float(np.max(np.abs(margins[interior] - 1.0))) if interior.any() else 0.0
        )
        report.append({
            "pair": (int(ci), int(cj)),
            "max_violation": float(viol.max()),
            "interior_margin_residual": interior_resid,
            "n_support": int((alpha > 0).sum()),
        })
    return report
