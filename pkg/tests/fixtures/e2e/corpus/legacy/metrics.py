"""Evaluation metrics reported by the legacy ranker."""

import legacy.ops


def accuracy(predictions, labels):
    hits = sum(1 for p, l in zip(predictions, labels) if (p >= 0.5) == (l >= 0.5))
    return hits / len(labels) if labels else 0.0


def weighted_loss(predictions, labels, weight):
    errors = [(p - l) ** 2 for p, l in zip(predictions, labels)]
    return weight * legacy.ops.mean(errors)
