"""Self-training with pseudo-label selection.

Each round fits the model family on the current labeled set D, scores the
remaining pool, moves the chosen rows into D with the full model's predicted
labels, and records a snapshot.  Pseudo-labels are never revised.
"""

import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import criteria as crit
from . import glm
from ._rng import Xoshiro256
from .dataset import UNLABELED, Dataset, SplitState

MODES = ("incremental", "batch")
STOPPING = ("exhaust_pool", "max_rounds", "score_floor")
FAMILIES = ("full", "nested", "all_subsets")
MAX_SUBSETS = 2**10
MAX_REFITS = 10

DEFAULT_FAMILY = {
    "multi_model_ppp": "all_subsets",
    "occam_threshold": "nested",
}


def enumerate_family(n_features, rule="full"):
    """Model specs ordered from smallest to the full model (last)."""
    if isinstance(rule, (list, tuple)):
        return list(rule)
    if rule == "full":
        subsets = [tuple(range(n_features))]
    elif rule == "nested":
        subsets = [tuple(range(k)) for k in range(n_features + 1)]
    elif rule == "all_subsets":
        if 2**n_features > MAX_SUBSETS:
            raise ValueError(f"{2**n_features} covariate subsets exceed the cap of {MAX_SUBSETS}")
        subsets = [c for r in range(n_features + 1) for c in itertools.combinations(range(n_features), r)]
    else:
        raise ValueError(f"unknown family rule {rule!r}; expected one of {FAMILIES}")
    return [glm.ModelSpec(s, True, k + 1) for k, s in enumerate(subsets)]


@dataclass(frozen=True)
class LoopConfig:
    criterion: str = "ppp"
    params: dict = field(default_factory=dict)
    mode: str = "incremental"
    batch_size: int = 1
    stopping: str = "exhaust_pool"
    max_rounds: int = 1
    score_floor: float = float("-inf")
    occam_refit: bool = True
    decay: float = 0.5
    family: object = None
    backend: str = "ppp"
    ridge: float = 0.0
    seed: int = 0
    snapshots: bool = True

    def __post_init__(self):
        if self.criterion not in crit.CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}; expected one of {crit.CRITERIA}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.stopping not in STOPPING:
            raise ValueError(f"stopping must be one of {STOPPING}")
        if self.batch_size < 1 or self.max_rounds < 1:
            raise ValueError("batch_size and max_rounds must be at least 1")
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        if self.backend not in crit.BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; expected one of {crit.BACKENDS}")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")

    @property
    def per_round(self):
        return 1 if self.mode == "incremental" else self.batch_size

    def family_rule(self):
        if self.family is not None:
            return self.family
        return DEFAULT_FAMILY.get(self.criterion, "full")

    def to_dict(self):
        d = asdict(self)
        if isinstance(self.family, (list, tuple)):
            d["family"] = [m.to_dict() for m in self.family]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("family"), list):
            d["family"] = [glm.ModelSpec.from_dict(m) for m in d["family"]]
        return cls(**d)


@dataclass
class LoopTrace:
    rounds: list
    final_fit: glm.ModelFit
    labeled_idx: tuple
    pseudo_labels: dict
    failure: dict = None
    notes: list = field(default_factory=list)

    def to_jsonl(self):
        lines = [json.dumps({"round": r["round"], **r}, sort_keys=True) for r in self.rounds]
        summary = {
            "summary": True,
            "final_fit": self.final_fit.to_dict() if self.final_fit else None,
            "labeled_idx": list(self.labeled_idx),
            "pseudo_labels": {str(k): v for k, v in sorted(self.pseudo_labels.items())},
            "failure": self.failure,
            "notes": self.notes,
        }
        lines.append(json.dumps(summary, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text):
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
        summary = records[-1]
        fit = glm.ModelFit.from_dict(summary["final_fit"]) if summary["final_fit"] else None
        return cls(
            rounds=records[:-1],
            final_fit=fit,
            labeled_idx=tuple(summary["labeled_idx"]),
            pseudo_labels={int(k): v for k, v in summary["pseudo_labels"].items()},
            failure=summary["failure"],
            notes=summary["notes"],
        )


def _accuracy(model, X, y):
    if model is None or len(y) == 0:
        return None
    pred = np.argmax(glm.predict_proba(model, X), axis=1)
    return float(np.mean(pred == y))


def _fit_summary(model):
    return {"theta_hat": model.theta_hat.tolist(), "log_lik": model.log_lik, "converged": model.converged}


def _apply(config, tensor, X_D, y_D, pool, n_added, rng, thresholds):
    name = config.criterion
    p = config.params
    k = config.per_round
    if name == "prob_score":
        return crit.criterion_probability_score(tensor, k)
    if name == "variance":
        return crit.criterion_variance(tensor, k)
    if name in ("ppp", "likelihood_maxmax"):
        return crit.criterion_single_model(tensor, n_select=k, name=name)
    if name == "multi_model_ppp":
        return crit.criterion_multi_model_weighted(tensor, p.get("weights"), k, p.get("normalize", False))
    if name == "occam_threshold":
        return crit.criterion_threshold_occam(tensor, thresholds)
    if name == "multi_label":
        return crit.criterion_multi_label(tensor, p.get("weights"), k)
    if name == "full_bayes":
        return crit.criterion_full_bayes(tensor, p.get("rho"), k)
    Xp, yp = crit.resample_pseudo_labeled(X_D, y_D, pool, tensor.predicted_label, n_added, rng)
    tensor_p = crit.build_tensor(Xp, yp, pool, tensor.models, config.backend, config.ridge)
    return crit.criterion_multi_data(tensor, tensor_p, p.get("aggregation", "min"), k)


def _backend(config):
    if config.criterion == "likelihood_maxmax" and config.backend == "ppp":
        return "max_likelihood"
    return config.backend


def run(data, split, config):
    """Self-train from ``split``'s labeled rows over its pool; see :class:`LoopConfig`."""
    X_all = data.features
    labeled = list(split.labeled_idx)
    y_known = {i: int(data.labels[i]) for i in labeled}
    if any(v == UNLABELED for v in y_known.values()):
        raise ValueError("labeled index set contains unlabeled rows")
    pool = list(split.unlabeled_idx)
    X_test, y_test = split.test_view(data)
    family = enumerate_family(data.n_features, config.family_rule())
    backend = _backend(config)
    rng = Xoshiro256(config.seed)
    thresholds = crit.ThresholdConfig(**config.params.get("thresholds", {}))
    pseudo = {}
    rounds = []
    failure = None
    notes = []
    t = 0
    while pool:
        if config.stopping == "max_rounds" and t >= config.max_rounds:
            break
        X_D = X_all[labeled]
        y_D = np.array([y_known[i] if i in y_known else pseudo[i] for i in labeled])
        X_pool = X_all[pool]
        try:
            tensor = crit.build_tensor(X_D, y_D, X_pool, family, backend, config.ridge, data.feature_names)
            result = None
            for attempt in range(MAX_REFITS + 1):
                try:
                    result = _apply(config, tensor, X_D, y_D, X_pool, len(pseudo), rng, thresholds)
                    break
                except crit.EmptySelectionError as exc:
                    if not config.occam_refit or attempt == MAX_REFITS:
                        notes.append({"round": t, "stopped": str(exc)})
                        break
                    thresholds = thresholds.lowered(config.decay)
        except (glm.GLMError, crit.CriterionError) as exc:
            failure = {"round": t, "error": type(exc).__name__, "message": str(exc)}
            break
        if result is None:
            break
        top_score = result.ranked[0][1] if result.ranked else float("-inf")
        if config.stopping == "score_floor" and top_score < config.score_floor:
            notes.append({"round": t, "stopped": f"top score {top_score} below floor {config.score_floor}"})
            break
        order = [c for c, _ in result.ranked if c in result.selected]
        chosen = order[: config.per_round]
        if not chosen:
            notes.append({"round": t, "stopped": "criterion selected nothing"})
            break
        scores = dict(result.ranked)
        picked = [pool[c] for c in chosen]
        labels = [int(tensor.predicted_label[c]) for c in chosen]
        rounds.append(
            {
                "round": t,
                "selected": picked,
                "pseudo_labels": labels,
                "scores": [scores[c] for c in chosen],
                "fit": _fit_summary(tensor.fits[-1]),
                "test_accuracy": _accuracy(tensor.fits[-1], X_test, y_test) if config.snapshots else None,
            }
        )
        for row, lab in zip(picked, labels):
            pseudo[row] = lab
            labeled.append(row)
        taken = set(chosen)
        pool = [r for c, r in enumerate(pool) if c not in taken]
        t += 1
    X_D = X_all[labeled]
    y_D = np.array([y_known[i] if i in y_known else pseudo[i] for i in labeled])
    final = None
    try:
        final = glm.fit(X_D, y_D, family[-1], ridge=config.ridge)
    except glm.GLMError as exc:
        failure = failure or {"round": t, "error": type(exc).__name__, "message": str(exc)}
    return LoopTrace(rounds, final, tuple(labeled), pseudo, failure, notes)


def supervised(data, split, ridge=0.0):
    """Baseline: the full model fitted on the labeled rows only."""
    empty = SplitState(split.labeled_idx, (), split.test_idx, split.rng_seed)
    return run(data, empty, LoopConfig(ridge=ridge))


def evaluate(trace, data, split):
    X_test, y_test = split.test_view(data)
    acc = _accuracy(trace.final_fit, X_test, y_test)
    truth = [(data.labels[i], lab) for i, lab in trace.pseudo_labels.items() if data.labels[i] != UNLABELED]
    err = float(np.mean([a != b for a, b in truth])) if truth else 0.0
    return {"test_accuracy": acc, "rounds": len(trace.rounds), "pseudo_label_error": err}


class SelfTrainingPLS(ClassifierMixin, BaseEstimator):
    """Self-training logistic regression with a pluggable pseudo-label selection criterion.

    ``fit(X, y)`` treats ``y == -1`` as unlabeled, in the scikit-learn
    semi-supervised convention.
    """

    def __init__(
        self,
        criterion="ppp",
        mode="incremental",
        batch_size=1,
        stopping="exhaust_pool",
        max_rounds=1,
        score_floor=float("-inf"),
        family=None,
        backend="ppp",
        ridge=0.0,
        occam_refit=True,
        decay=0.5,
        seed=0,
        params=None,
    ):
        self.criterion = criterion
        self.mode = mode
        self.batch_size = batch_size
        self.stopping = stopping
        self.max_rounds = max_rounds
        self.score_floor = score_floor
        self.family = family
        self.backend = backend
        self.ridge = ridge
        self.occam_refit = occam_refit
        self.decay = decay
        self.seed = seed
        self.params = params

    def _config(self):
        return LoopConfig(
            criterion=self.criterion,
            params=dict(self.params or {}),
            mode=self.mode,
            batch_size=self.batch_size,
            stopping=self.stopping,
            max_rounds=self.max_rounds,
            score_floor=self.score_floor,
            occam_refit=self.occam_refit,
            decay=self.decay,
            family=self.family,
            backend=self.backend,
            ridge=self.ridge,
            seed=self.seed,
            snapshots=False,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        known = y != UNLABELED
        self.classes_ = np.unique(y[known])
        if len(self.classes_) != 2:
            raise ValueError("need labeled rows of exactly two classes")
        codes = np.full(len(y), UNLABELED)
        codes[known] = (y[known] == self.classes_[1]).astype(int)
        data = Dataset(X, codes, (), 2)
        split = SplitState(tuple(np.flatnonzero(known).tolist()), tuple(np.flatnonzero(~known).tolist()), ())
        self.trace_ = run(data, split, self._config())
        if self.trace_.final_fit is None:
            raise glm.GLMError(self.trace_.failure["message"])
        self.fit_ = self.trace_.final_fit
        self.n_features_in_ = X.shape[1]
        guess = np.argmax(glm.predict_proba(self.fit_, X), axis=1)
        self.transduction_ = np.array(
            [self.classes_[codes[i]] if known[i] else self.classes_[self.trace_.pseudo_labels.get(i, guess[i])]
             for i in range(len(y))]
        )
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "fit_")
        return glm.predict_proba(self.fit_, check_array(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
