import itertools
from fractions import Fraction
from types import SimpleNamespace

import pytest

from hvae_pla.metrics import (UNDEFINED, ConfusionMatrix, confusion, f1, f1_score, f_beta, p_ca,
                              p_noa)

COUNTS = range(0, 21)
BETAS = (0.25, 0.5, 1.0, 2.0, 4.0)


def all_matrices():
    # the rates only involve tl, fa, fl; ta is swept more coarsely
    for tl, fa, fl in itertools.product(COUNTS, COUNTS, COUNTS):
        for ta in (0, 7, 20):
            yield ConfusionMatrix(tl, fa, fl, ta)


def exact_f_beta(cm, beta):
    """Rational-arithmetic reference computed straight from the counts."""
    if cm.tl + cm.fl == 0 or cm.tl + cm.fa == 0:
        return UNDEFINED
    p = Fraction(cm.tl, cm.tl + cm.fl)
    r = Fraction(cm.tl, cm.tl + cm.fa)
    b2 = Fraction(beta) ** 2
    if b2 * p + r == 0:
        return Fraction(0)
    return (b2 + 1) * p * r / (b2 * p + r)


def verdict(legit, truth):
    return SimpleNamespace(legitimate=legit, ground_truth=truth)


def test_confusion_counting_example():
    vs = [verdict(True, True)] * 9 + [verdict(False, True)] + \
         [verdict(True, False)] * 2 + [verdict(False, False)] * 8
    assert confusion(vs) == ConfusionMatrix(9, 1, 2, 8)


def test_confusion_edge_cases():
    assert confusion([]) == ConfusionMatrix(0, 0, 0, 0)
    cm = confusion([verdict(t, t) for t in (True, False, True)])
    assert cm.fa == cm.fl == 0 and cm.alice_total == 2 and cm.eve_total == 1


def test_rate_examples():
    assert p_ca(ConfusionMatrix(tl=90, fl=10)) == 0.9
    assert p_noa(ConfusionMatrix(tl=90, fa=10)) == 0.9
    assert p_ca(ConfusionMatrix()) is UNDEFINED
    assert f_beta(ConfusionMatrix(tl=1, fa=1, fl=0)) == pytest.approx(2 / 3)
    assert f1(ConfusionMatrix(tl=5, ta=5)) == 1.0


def test_undefined_is_not_zero():
    assert UNDEFINED != 0 and UNDEFINED is not None and not UNDEFINED
    assert f1(ConfusionMatrix(fa=3)) is UNDEFINED


def test_invalid_inputs():
    with pytest.raises(ValueError):
        ConfusionMatrix(-1, 0, 0, 0)
    with pytest.raises(ValueError):
        f_beta(ConfusionMatrix(1, 0, 0, 0), 0.0)


def test_identities_exhaustive():
    for cm in all_matrices():
        p, r = p_ca(cm), p_noa(cm)
        assert (p is UNDEFINED) == (cm.tl + cm.fl == 0)
        assert (r is UNDEFINED) == (cm.tl + cm.fa == 0)
        if p is not UNDEFINED:
            assert p == cm.tl / (cm.tl + cm.fl)
        if r is not UNDEFINED:
            assert r == cm.tl / (cm.tl + cm.fa)
        one = f1(cm)
        assert one == f_beta(cm, 1.0)
        for beta in BETAS:
            got, want = f_beta(cm, beta), exact_f_beta(cm, beta)
            if want is UNDEFINED:
                assert got is UNDEFINED
            else:
                assert got == pytest.approx(float(want), rel=1e-12, abs=1e-15)
        if one is not UNDEFINED:
            assert 0.0 <= one <= 1.0
            assert (one == 1.0) == (cm.fa == 0 and cm.fl == 0 and cm.tl > 0)
            if p == r:
                for beta in BETAS:
                    assert f_beta(cm, beta) == pytest.approx(p, rel=1e-12, abs=1e-15)


def test_f_beta_nondecreasing_in_tl():
    for fa, fl in itertools.product(COUNTS, COUNTS):
        for beta in BETAS:
            prev = None
            for tl in COUNTS:
                v = f_beta(ConfusionMatrix(tl, fa, fl, 0), beta)
                if v is UNDEFINED:
                    continue
                if prev is not None:
                    assert v >= prev - 1e-15
                prev = v


def test_beta_weighting_exhaustive():
    for tl, fa, fl in itertools.product(range(1, 21), COUNTS, COUNTS):
        cm = ConfusionMatrix(tl, fa, fl, 0)
        p, r = p_ca(cm), p_noa(cm)
        vals = [f_beta(cm, b) for b in BETAS]
        # larger beta pulls F_beta toward p_noa
        if p < r:
            assert all(a < b for a, b in zip(vals, vals[1:]))
        elif p > r:
            assert all(a > b for a, b in zip(vals, vals[1:]))


def test_f1_score_averaging_rule():
    assert f1_score(ConfusionMatrix(fa=4)) == 0.0
    assert f1_score(ConfusionMatrix(ta=4)) == 1.0
    assert f1_score(ConfusionMatrix(fl=1, ta=3)) == 0.0
    assert f1_score(ConfusionMatrix(tl=3, fl=1)) == f1(ConfusionMatrix(tl=3, fl=1))
