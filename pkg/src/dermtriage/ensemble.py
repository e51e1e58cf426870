"""Majority-vote ensembling over heterogeneous classifier backends.

The final class is the one with the most member votes. A unanimous vote
is reported as consensus "unanimous"; anything else is
"disagreement_flagged" and marks the case for specialist review. The
decision confidence is the mean probability that all members, including
dissenters, assign to the final class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .datasetio import LABELS
from .errors import ConfigurationError, InputError
from .inference import ModelPrediction, predict_all

__all__ = [
    "UNANIMOUS",
    "DISAGREEMENT",
    "EnsembleDecision",
    "vote",
    "average_distribution",
    "MajorityVoteEnsemble",
]

UNANIMOUS = "unanimous"
DISAGREEMENT = "disagreement_flagged"


@dataclass(frozen=True)
class EnsembleDecision:
    """The outcome of one ensemble vote."""

    final_class: str
    votes: dict
    consensus: str
    confidence: float
    needs_review: bool
    member_predictions: tuple = field(default_factory=tuple)

    def to_dict(self):
        return {
            "final_class": self.final_class,
            "votes": dict(self.votes),
            "consensus": self.consensus,
            "confidence": self.confidence,
            "needs_review": self.needs_review,
            "member_predictions": [p.to_dict() for p in self.member_predictions],
        }

    @classmethod
    def from_dict(cls, data):
        members = tuple(
            ModelPrediction.from_dict(item)
            for item in data.get("member_predictions", [])
        )
        return cls(
            final_class=data["final_class"],
            votes={label: int(n) for label, n in data["votes"].items()},
            consensus=data["consensus"],
            confidence=float(data["confidence"]),
            needs_review=bool(data["needs_review"]),
            member_predictions=members,
        )


def _check_size(n_predictions, expected_size):
    if expected_size < 3 or expected_size % 2 == 0:
        raise ConfigurationError("ensemble size must be an odd count >= 3")
    if n_predictions != expected_size:
        raise ConfigurationError(
            f"expected {expected_size} member predictions, got {n_predictions}"
        )


def vote(predictions, expected_size=3):
    """Combine member predictions into an EnsembleDecision.

    Member model ids must be distinct and the member count must equal
    expected_size exactly.
    """
    _check_size(len(predictions), expected_size)
    ids = [p.model_id for p in predictions]
    if len(set(ids)) != len(ids):
        raise ConfigurationError(f"duplicate model ids in ensemble: {ids}")

    counts = {label: 0 for label in LABELS}
    for prediction in predictions:
        counts[prediction.predicted] += 1
    final = max(LABELS, key=lambda label: counts[label])
    unanimous = counts[final] == len(predictions)
    confidence = sum(p.probs[final] for p in predictions) / len(predictions)
    return EnsembleDecision(
        final_class=final,
        votes=counts,
        consensus=UNANIMOUS if unanimous else DISAGREEMENT,
        confidence=confidence,
        needs_review=not unanimous,
        member_predictions=tuple(predictions),
    )


def average_distribution(predictions):
    """Mean class distribution across members, for display."""
    if not predictions:
        raise InputError("no predictions to average")
    return {
        label: sum(p.probs[label] for p in predictions) / len(predictions)
        for label in LABELS
    }


class MajorityVoteEnsemble(BaseEstimator):
    """Classifier-style wrapper over a roster of backends.

    fit() only validates the roster; the members are pre-trained. decide()
    returns the full EnsembleDecision for one image; predict() and
    predict_proba() follow the usual estimator conventions over a batch
    (list of images or a 4d stack).
    """

    def __init__(self, backends=None, expected_size=3):
        self.backends = backends
        self.expected_size = expected_size

    def _roster(self):
        roster = list(self.backends or [])
        _check_size(len(roster), self.expected_size)
        ids = [d.model_id for d in roster]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"duplicate model ids in roster: {ids}")
        return roster

    def fit(self, X=None, y=None):
        self._roster()
        self.classes_ = np.asarray(LABELS)
        return self

    def decide(self, img):
        roster = self._roster()
        return vote(predict_all(roster, img), expected_size=self.expected_size)

    def _frames(self, X):
        if isinstance(X, np.ndarray) and X.ndim == 4:
            return list(X)
        if isinstance(X, (list, tuple)):
            return list(X)
        return [X]

    def predict(self, X):
        return np.asarray([self.decide(frame).final_class for frame in self._frames(X)])

    def predict_proba(self, X):
        roster = self._roster()
        rows = []
        for frame in self._frames(X):
            dist = average_distribution(predict_all(roster, frame))
            rows.append([dist[label] for label in LABELS])
        return np.asarray(rows)
