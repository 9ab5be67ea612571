"""Alice/Eve confusion matrix and the rates derived from it."""

from __future__ import annotations

from dataclasses import dataclass


class _Undefined:
    """Result of a rate whose denominator is zero."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNDEFINED"

    def __bool__(self):
        return False


UNDEFINED = _Undefined()


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are the true sender, columns the verdict.

    ``tl``: Alice accepted, ``fa``: Alice rejected,
    ``fl``: Eve accepted, ``ta``: Eve rejected.
    """

    tl: int = 0
    fa: int = 0
    fl: int = 0
    ta: int = 0

    def __post_init__(self):
        if min(self.tl, self.fa, self.fl, self.ta) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def alice_total(self) -> int:
        return self.tl + self.fa

    @property
    def eve_total(self) -> int:
        return self.fl + self.ta


def confusion(verdicts) -> ConfusionMatrix:
    """Tally verdicts carrying ``legitimate`` (bool) and ``ground_truth`` (bool, True = Alice)."""
    tl = fa = fl = ta = 0
    for v in verdicts:
        if v.ground_truth:
            if v.legitimate:
                tl += 1
            else:
                fa += 1
        elif v.legitimate:
            fl += 1
        else:
            ta += 1
    return ConfusionMatrix(tl, fa, fl, ta)


def p_ca(cm: ConfusionMatrix):
    """Fraction of accepted signals that really came from Alice (precision)."""
    den = cm.tl + cm.fl
    return UNDEFINED if den == 0 else cm.tl / den


def p_noa(cm: ConfusionMatrix):
    """Fraction of Alice's signals that were accepted (recall)."""
    den = cm.tl + cm.fa
    return UNDEFINED if den == 0 else cm.tl / den


def f_beta(cm: ConfusionMatrix, beta: float = 1.0):
    """Weighted harmonic mean of ``p_ca`` and ``p_noa``; ``beta > 1`` favours ``p_noa``.

    Undefined rates propagate as :data:`UNDEFINED`. When both rates are zero
    the measure is 0.
    """
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    p, r = p_ca(cm), p_noa(cm)
    if p is UNDEFINED or r is UNDEFINED:
        return UNDEFINED
    b2 = beta * beta
    den = b2 * p + r
    if den == 0:
        return 0.0
    return (b2 + 1.0) * p * r / den


def f1(cm: ConfusionMatrix):
    return f_beta(cm, 1.0)


def f1_score(cm: ConfusionMatrix) -> float:
    """F1 for averaging: an undefined F1 counts as 0 when Alice sent anything, 1 otherwise.

    Accepting nothing while Alice transmitted (``tl + fl == 0``, ``fa > 0``) is a
    total miss; a batch with no Alice traffic and nothing accepted is perfect.
    """
    value = f1(cm)
    if value is UNDEFINED:
        return 0.0 if cm.alice_total > 0 else float(cm.fl == 0)
    return value
