"""Classification metrics and two-sample t-tests.

The Student t CDF is evaluated through the regularized incomplete beta
function, computed here with a modified Lentz continued fraction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class DegenerateVarianceError(ValueError):
    """Both samples have zero spread but different means."""


class TTestVariant(enum.Enum):
    POOLED = "POOLED"
    WELCH = "WELCH"

    @classmethod
    def parse(cls, value) -> "TTestVariant":
        if isinstance(value, TTestVariant):
            return value
        return cls(str(value).upper())


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    variant: TTestVariant

    def to_dict(self) -> dict:
        return {
            "t": self.t_statistic,
            "df": self.degrees_of_freedom,
            "p": self.p_value,
            "variant": self.variant.value,
        }


@dataclass(frozen=True)
class MetricSample:
    accuracy: float
    f1: float
    seed: int


# -- metrics ---------------------------------------------------------------


def _check_pair(predictions, labels):
    preds = np.asarray(predictions, dtype=np.intp).ravel()
    labs = np.asarray(labels, dtype=np.intp).ravel()
    if preds.size == 0:
        raise ValueError("metrics need at least one prediction")
    if preds.shape != labs.shape:
        raise ValueError(f"length mismatch: {preds.size} predictions vs {labs.size} labels")
    return preds, labs


def accuracy(predictions, labels) -> float:
    preds, labs = _check_pair(predictions, labels)
    return float(np.count_nonzero(preds == labs)) / preds.size


def confusion_matrix(predictions, labels, num_classes: int) -> np.ndarray:
    """``cm[true, pred]`` counts."""
    preds, labs = _check_pair(predictions, labels)
    for name, arr in (("labels", labs), ("predictions", preds)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise ValueError(f"{name} must lie in [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labs, preds), 1)
    return cm


def f1_score(predictions, labels, num_classes: int) -> float:
    """Macro-averaged F1; a class with a zero denominator scores 0."""
    cm = confusion_matrix(predictions, labels, num_classes)
    per_class = []
    for c in range(num_classes):
        tp = int(cm[c, c])
        predicted = int(cm[:, c].sum())
        actual = int(cm[c, :].sum())
        precision = tp / predicted if predicted else 0.0
        recall = tp / actual if actual else 0.0
        denom = precision + recall
        per_class.append(2 * precision * recall / denom if denom else 0.0)
    return sum(per_class) / num_classes


# -- incomplete beta -------------------------------------------------------

_TINY = 1e-300


def _beta_cf(a: float, b: float, x: float, eps: float = 1e-15, max_iter: int = 10_000) -> float:
    """Continued fraction for I_x(a, b) (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        # even step
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        # odd step
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # the fraction converges fast on this side of the mean; use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def student_t_two_tailed_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0
    p = regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)
    return min(1.0, max(0.0, p))


# -- t-tests ---------------------------------------------------------------


def t_test_from_summary(mean_a, sd_a, n_a, mean_b, sd_b, n_b, variant=TTestVariant.POOLED) -> TTestResult:
    """Two-tailed unpaired t-test from means, sample sds (n-1) and sizes."""
    variant = TTestVariant.parse(variant)
    if n_a < 2 or n_b < 2:
        raise ValueError(f"each sample needs n >= 2, got n_a={n_a}, n_b={n_b}")
    if sd_a < 0 or sd_b < 0:
        raise ValueError("standard deviations must be >= 0")
    diff = float(mean_a) - float(mean_b)
    va, vb = float(sd_a) ** 2, float(sd_b) ** 2
    if variant is TTestVariant.POOLED:
        df = float(n_a + n_b - 2)
        pooled = ((n_a - 1) * va + (n_b - 1) * vb) / df
        se = math.sqrt(pooled * (1.0 / n_a + 1.0 / n_b))
    else:
        qa, qb = va / n_a, vb / n_b
        se = math.sqrt(qa + qb)
        df = (qa + qb) ** 2 / (qa * qa / (n_a - 1) + qb * qb / (n_b - 1)) if se > 0 else float(n_a + n_b - 2)
    if se == 0.0:
        if diff == 0.0:
            return TTestResult(0.0, df, 1.0, variant)
        raise DegenerateVarianceError(
            f"zero variance in both samples with different means ({mean_a} vs {mean_b})"
        )
    t = diff / se
    return TTestResult(t, df, student_t_two_tailed_p(t, df), variant)


def _mean_sd(values):
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size < 2:
        raise ValueError(f"need at least 2 values, got {arr.size}")
    return float(arr.mean()), float(arr.std(ddof=1)), arr.size


def t_test(sample_a, sample_b, variant=TTestVariant.POOLED) -> TTestResult:
    ma, sa, na = _mean_sd(sample_a)
    mb, sb, nb = _mean_sd(sample_b)
    return t_test_from_summary(ma, sa, na, mb, sb, nb, variant)


def aggregate_runs(samples) -> dict:
    """Mean and sample sd (n-1) of accuracy and F1 over runs."""
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError(f"aggregate_runs needs at least 2 runs, got {len(samples)}")
    acc_mean, acc_sd, _ = _mean_sd([s.accuracy for s in samples])
    f1_mean, f1_sd, _ = _mean_sd([s.f1 for s in samples])
    return {"mean_acc": acc_mean, "sd_acc": acc_sd, "mean_f1": f1_mean, "sd_f1": f1_sd}
