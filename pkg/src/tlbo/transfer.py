"""Two-phase surrogate transfer: source-weight learning, cross-validated
source/target balancing, and linearly combined Gaussian prediction.

Phase 1 learns simplex weights w over the source surrogates by minimizing
the pairwise ranking loss of their combined mean on the target history.
Phase 2 balances the combined source surrogate against the target surrogate
with a two-dimensional weight p = [p_source, p_target], learned on held-out
ranking loss via deterministic round-robin cross-validation, and clamped so
the target weight never decreases across iterations.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import gp
from .errors import ValidationError
from .ranking import PredictionMatrix, SimplexWeights, minimize_on_simplex, ranking_loss

N_CV_DEFAULT = 5


@dataclass(frozen=True)
class SourceEnsemble:
    """Base surrogates fitted offline on source-task histories."""

    models: tuple[gp.GpSurrogate, ...]
    task_ids: tuple[str, ...] = ()

    def __post_init__(self):
        models = tuple(self.models)
        ids = tuple(self.task_ids) if self.task_ids else tuple(f"source-{i}" for i in range(len(models)))
        if len(ids) != len(models):
            raise ValidationError("task_ids must match the number of models")
        dims = {m.input_dim for m in models}
        if len(dims) > 1:
            raise ValidationError("all source surrogates must share one input dimension")
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "task_ids", ids)

    @property
    def k(self) -> int:
        return len(self.models)

    @property
    def input_dim(self) -> int | None:
        return self.models[0].input_dim if self.models else None


@dataclass(frozen=True)
class TlSurrogate:
    """The composed transfer surrogate: sources under w, then p over
    [combined source, target]."""

    sources: SourceEnsemble
    target: gp.GpSurrogate | None
    w: SimplexWeights | None
    p: SimplexWeights

    def __post_init__(self):
        if self.sources.k == 0:
            if self.w is not None:
                raise ValidationError("w must be absent when there are no sources")
        elif self.w is None or self.w.dim != self.sources.k:
            raise ValidationError("w must have one weight per source surrogate")
        if self.p.dim != 2:
            raise ValidationError("p must live on the 2-simplex")
        if self.target is None and self.p.values[1] != 0.0:
            raise ValidationError("p must be [1, 0] when the target surrogate is absent")
        if self.sources.k == 0 and self.p.values[0] != 0.0:
            raise ValidationError("p must be [0, 1] when there are no sources")


@dataclass(frozen=True)
class WeightRecord:
    iteration: int
    w: np.ndarray
    p: np.ndarray


@dataclass
class WeightTrajectory:
    """Per-iteration weight history; the target weight never decreases."""

    records: list[WeightRecord] = field(default_factory=list)

    def append(self, iteration: int, w: SimplexWeights | None, p: SimplexWeights) -> None:
        p_target = float(p.values[1])
        if self.records and p_target < float(self.records[-1].p[1]) - 1e-12:
            raise ValidationError("target weight must be non-decreasing across iterations")
        w_arr = w.values.copy() if w is not None else np.zeros(0)
        self.records.append(WeightRecord(iteration, w_arr, p.values.copy()))

    def __len__(self):
        return len(self.records)

    def p_target_series(self) -> np.ndarray:
        return np.array([r.p[1] for r in self.records])

    def to_csv(self, path) -> None:
        """Columns: iteration, p_source, p_target, w_1..w_K."""
        k = max((r.w.size for r in self.records), default=0)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "p_source", "p_target"] + [f"w_{i + 1}" for i in range(k)])
            for r in self.records:
                writer.writerow(
                    [r.iteration, repr(float(r.p[0])), repr(float(r.p[1]))]
                    + [repr(float(v)) for v in r.w]
                )


@dataclass(frozen=True)
class CvPartition:
    """Fold assignment for cross-validation; fold ids run from 1 to n_cv."""

    fold_ids: np.ndarray
    n_cv: int

    def __post_init__(self):
        ids = np.asarray(self.fold_ids, dtype=int)
        present = set(np.unique(ids).tolist())
        if present != set(range(1, self.n_cv + 1)):
            raise ValidationError("every fold must be non-empty")
        object.__setattr__(self, "fold_ids", ids)

    def holdout_indices(self, fold: int) -> np.ndarray:
        return np.nonzero(self.fold_ids == fold)[0]


def build_cv_partition(n: int, n_cv: int) -> CvPartition:
    """Deterministic round-robin assignment: index j goes to fold (j mod n_cv) + 1."""
    if n_cv < 2:
        raise ValidationError("cross-validation needs at least 2 folds")
    if n < n_cv:
        raise ValidationError(f"cannot split {n} observations into {n_cv} non-empty folds")
    return CvPartition(fold_ids=(np.arange(n) % n_cv) + 1, n_cv=n_cv)


def _train_indices_for_fold(partition: CvPartition, fold: int) -> np.ndarray:
    return np.nonzero(partition.fold_ids != fold)[0]


def _has_pairs(y: np.ndarray) -> bool:
    return np.unique(y).size > 1


def source_prediction_matrix(sources: SourceEnsemble, x: np.ndarray, y: np.ndarray) -> PredictionMatrix:
    """Predictive means of each source surrogate at the target observations."""
    cols = [m.predict(x)[0] for m in sources.models]
    return PredictionMatrix(np.column_stack(cols), y)


def learn_source_weights(
    sources: SourceEnsemble,
    x: np.ndarray,
    y: np.ndarray,
    init: SimplexWeights | None = None,
) -> SimplexWeights:
    """Learn the simplex weights over source surrogates on the target history.

    With fewer than two observations, or no strict performance pairs, the
    objective is uninformative and the uniform vector is returned.
    """
    if sources.k == 0:
        raise ValidationError("cannot learn source weights for an empty ensemble")
    if sources.k == 1:
        return SimplexWeights([1.0])
    y = np.asarray(y, dtype=float)
    if y.size < 2 or not _has_pairs(y):
        return SimplexWeights.uniform(sources.k)
    pm = source_prediction_matrix(sources, np.atleast_2d(np.asarray(x, dtype=float)), y)
    if init is None or init.dim != sources.k:
        init = SimplexWeights.uniform(sources.k)
    return minimize_on_simplex(pm, init)


@dataclass(frozen=True)
class Phase2Assembly:
    """Held-out predictions feeding the source/target balance problem.

    Row j of ``matrix`` holds the combined-source and target predictive means
    at observation j, both from the partial models of j's own fold.
    """

    matrix: np.ndarray
    partition: CvPartition
    fold_source_weights: dict[int, SimplexWeights]


def assemble_phase2_matrix(
    sources: SourceEnsemble,
    x: np.ndarray,
    y: np.ndarray,
    partition: CvPartition,
    target_params: gp.KernelParams,
) -> Phase2Assembly:
    """Build the cross-validated two-column prediction matrix.

    For each fold: source weights are re-learned from scratch on the
    remaining observations, and a partial target GP is conditioned on them
    reusing the full-history kernel hyperparameters. Every observation is
    then predicted by the partial models that never saw its fold.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    n = y.size
    src_col = np.empty(n)
    tgt_col = np.empty(n)
    fold_weights: dict[int, SimplexWeights] = {}
    for fold in range(1, partition.n_cv + 1):
        train = _train_indices_for_fold(partition, fold)
        held = partition.holdout_indices(fold)
        w_fold = learn_source_weights(sources, x[train], y[train])
        fold_weights[fold] = w_fold
        partial_target = gp.condition(x[train], gp.standardize(y[train]).z, target_params)
        src_col[held] = combined_predict(sources.models, w_fold, x[held])[0]
        tgt_col[held] = partial_target.predict(x[held])[0]
    return Phase2Assembly(
        matrix=np.column_stack([src_col, tgt_col]),
        partition=partition,
        fold_source_weights=fold_weights,
    )


def learn_phase2_weights(
    sources: SourceEnsemble,
    x: np.ndarray,
    y: np.ndarray,
    n_cv: int = N_CV_DEFAULT,
    seed: int = 0,
    target_params: gp.KernelParams | None = None,
) -> SimplexWeights:
    """Learn p = [p_source, p_target] by cross-validated ranking loss.

    Fallbacks: [0, 1] with no sources (only the target can carry weight),
    [1, 0] when the history is too small for cross-validation (fewer
    observations than folds, so some fold would be empty) or carries no
    strict performance pairs. A constant objective with pairs present
    resolves toward the target.
    """
    if sources.k == 0:
        return SimplexWeights([0.0, 1.0])
    y = np.asarray(y, dtype=float)
    if y.size < n_cv or not _has_pairs(y):
        return SimplexWeights([1.0, 0.0])
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if target_params is None:
        target_params = gp.fit(x, gp.standardize(y).z, seed=seed).params
    partition = build_cv_partition(y.size, n_cv)
    assembly = assemble_phase2_matrix(sources, x, y, partition, target_params)
    if np.allclose(assembly.matrix[:, 0], assembly.matrix[:, 1], rtol=0.0, atol=1e-12):
        return SimplexWeights([0.0, 1.0])
    pm = PredictionMatrix(assembly.matrix, y)
    p = minimize_on_simplex(pm, SimplexWeights.uniform(2))
    # Ties between the solver result and the pure-target vertex resolve
    # toward the target.
    target_vertex = SimplexWeights([0.0, 1.0])
    if ranking_loss(pm, target_vertex) <= ranking_loss(pm, p) + 1e-12:
        return target_vertex
    return p


def apply_nondecreasing_prior(p_now: SimplexWeights, p_prev_target: float) -> SimplexWeights:
    """Clamp the target weight from below by its previous value."""
    if p_now.dim != 2:
        raise ValidationError("p must live on the 2-simplex")
    if not 0.0 <= p_prev_target <= 1.0:
        raise ValidationError("previous target weight must lie in [0, 1]")
    p_target = max(float(p_now.values[1]), float(p_prev_target))
    return SimplexWeights([1.0 - p_target, p_target])


def combined_predict(models, weights: SimplexWeights, x):
    """Linear combination of GP posteriors: mean = sum w_b mu_b,
    variance = sum w_b^2 sigma_b^2.

    A weight of exactly one short-circuits to that member's prediction, so
    vertex weights reproduce the member model bitwise.
    """
    models = list(models)
    if len(models) == 0:
        raise ValidationError("combined prediction needs at least one model")
    if weights.dim != len(models):
        raise ValidationError("weight dimension must match the number of models")
    wv = weights.values
    active = np.nonzero(wv > 0.0)[0]
    if active.size == 1 and wv[active[0]] == 1.0:
        return models[active[0]].predict(x)
    mean = None
    var = None
    for i in active:
        m_i, v_i = models[i].predict(x)
        contrib_m = wv[i] * np.asarray(m_i, dtype=float)
        contrib_v = wv[i] ** 2 * np.asarray(v_i, dtype=float)
        mean = contrib_m if mean is None else mean + contrib_m
        var = contrib_v if var is None else var + contrib_v
    if mean is None:
        raise ValidationError("all weights are zero")
    if np.asarray(x).ndim == 1:
        return float(mean), float(var)
    return mean, var


def tl_predict(tl: TlSurrogate, x):
    """Two-level combined prediction: sources under w, then p over
    [combined source, target].

    Vertex values of p pass the corresponding component through bitwise.
    """
    p_source, p_target = float(tl.p.values[0]), float(tl.p.values[1])
    if p_target == 1.0:
        if tl.target is None:
            raise ValidationError("target surrogate absent but p selects it")
        return tl.target.predict(x)
    if p_source == 1.0:
        return combined_predict(tl.sources.models, tl.w, x)
    m_s, v_s = combined_predict(tl.sources.models, tl.w, x)
    m_t, v_t = tl.target.predict(x)
    mean = p_source * np.asarray(m_s, dtype=float) + p_target * np.asarray(m_t, dtype=float)
    var = p_source**2 * np.asarray(v_s, dtype=float) + p_target**2 * np.asarray(v_t, dtype=float)
    if np.asarray(x).ndim == 1:
        return float(mean), float(var)
    return mean, var
