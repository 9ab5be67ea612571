"""Authentication protocol: reference selection, training, scoring and decisions.

Two decision rules are provided. The rank rule accepts the ``round(alpha * q)``
smallest difference scores of a batch of ``q`` signals, where ``alpha`` is the
expected share of legitimate traffic. The threshold rule accepts every signal
whose score is below ``xi``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .baselines import AutoEncoder, PlainVAE
from .channel import Dataset, normalize
from .hvae import HvaeConfig, HvaeModel, train as train_hvae
from .metrics import ConfusionMatrix, confusion, f1, f1_score, p_ca, p_noa

log = logging.getLogger(__name__)

MODEL_KINDS = ("tf_hvae", "tf_ae", "tb_ae", "tf_vae")
THRESHOLD_GRID_POINTS = 200


class UntrainedModelError(RuntimeError):
    pass


class ProtocolError(ValueError):
    pass


@dataclass
class AuthConfig:
    alpha: float | None = 0.5
    f_alice: float | None = None
    f_eve: float | None = None
    mode: str = "threshold_free"
    threshold_grid: list[float] | None = None
    grid_points: int = THRESHOLD_GRID_POINTS

    def __post_init__(self):
        if self.f_alice is not None or self.f_eve is not None:
            if not (self.f_alice and self.f_eve and self.f_alice > 0 and self.f_eve > 0):
                raise ValueError("f_alice and f_eve must both be positive")
            self.alpha = self.f_alice / (self.f_alice + self.f_eve)
        if self.alpha is None or not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.mode not in ("threshold_free", "threshold_sweep"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.threshold_grid is not None and len(self.threshold_grid) == 0:
            raise ValueError("threshold_grid must be nonempty")


@dataclass
class AuthVerdict:
    index: int
    score: float
    legitimate: bool
    ground_truth: bool
    node_id: int = -1
    time_index: int = -1
    group: int = -1

    @property
    def decision(self) -> str:
        return "legitimate" if self.legitimate else "attack"


def _check_trained(model):
    if not getattr(model, "trained", False):
        raise UntrainedModelError(f"{type(model).__name__} has not been trained")


def channel_difference(model, reference, samples):
    """Squared Euclidean distance between latent codes of ``samples`` and ``reference``.

    Returns a float for one sample or an array for a ``(n, d)`` batch.
    """
    _check_trained(model)
    ref = np.asarray(reference, dtype=float).reshape(1, -1)
    x = np.asarray(samples, dtype=float)
    single = x.ndim == 1
    # one batched pass, so a sample equal to the reference maps to the same code exactly
    codes = np.atleast_2d(model.embed(np.vstack([ref, np.atleast_2d(x)])))
    diff = codes[1:] - codes[0]
    scores = np.sum(diff * diff, axis=1)
    return float(scores[0]) if single else scores


def accepted_count(alpha: float, q: int) -> int:
    """``round(alpha * q)`` with halves rounded up, clamped to ``[0, q]``."""
    return min(q, max(0, math.floor(alpha * q + 0.5 + 1e-9)))


def alpha_rule(scores, alpha: float) -> np.ndarray:
    """Accept the ``accepted_count(alpha, q)`` smallest scores; ties go to the lower index."""
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(scores, kind="stable")
    keep = np.zeros(len(scores), dtype=bool)
    keep[order[:accepted_count(alpha, len(scores))]] = True
    return keep


def threshold_rule(scores, threshold: float) -> np.ndarray:
    return np.asarray(scores, dtype=float) < threshold


def _verdicts(scores, accepted, truth, records=None, group=-1):
    out = []
    for i, (s, a, t) in enumerate(zip(scores, accepted, truth)):
        node = records[i].node_id if records is not None else -1
        tix = records[i].time_index if records is not None else -1
        out.append(AuthVerdict(i, float(s), bool(a), bool(t), node, tix, group))
    return out


def authenticate_batch(model, reference, samples, config: AuthConfig, ground_truth=None):
    """Score a batch against the reference and apply the rank rule."""
    scores = np.atleast_1d(channel_difference(model, reference, samples))
    truth = np.zeros(len(scores), bool) if ground_truth is None else ground_truth
    return _verdicts(scores, alpha_rule(scores, config.alpha), truth)


def threshold_authenticate(model, reference, samples, threshold: float, ground_truth=None):
    scores = np.atleast_1d(channel_difference(model, reference, samples))
    truth = np.zeros(len(scores), bool) if ground_truth is None else ground_truth
    return _verdicts(scores, threshold_rule(scores, threshold), truth)


def threshold_grid(scores, points: int = THRESHOLD_GRID_POINTS) -> np.ndarray:
    """``points`` thresholds spanning ``[min(scores), max(scores)]``, nudged past the top."""
    lo, hi = float(np.min(scores)), float(np.max(scores))
    return np.linspace(lo, np.nextafter(hi, np.inf), points)


def _cm(accepted, truth) -> ConfusionMatrix:
    accepted = np.asarray(accepted, bool)
    truth = np.asarray(truth, bool)
    return ConfusionMatrix(int(np.sum(accepted & truth)), int(np.sum(~accepted & truth)),
                           int(np.sum(accepted & ~truth)), int(np.sum(~accepted & ~truth)))


@dataclass
class EvalGroup:
    """One authentication session: Alice's and one spoofer's test signals against a reference."""

    spoofer: int
    alice_node: int
    reference: object
    records: list
    distance: float = float("nan")


@dataclass
class AuthReport:
    model_kind: str
    verdicts: list[AuthVerdict]
    per_node_f1: dict[int, float]
    per_node_distance: dict[int, float]
    confusion: ConfusionMatrix
    loss_history: list[float] = field(default_factory=list)
    sweep: list[tuple[float, float, float]] = field(default_factory=list)
    threshold: float | None = None

    @property
    def average_f1(self) -> float:
        return float(np.mean(list(self.per_node_f1.values()))) if self.per_node_f1 else float("nan")

    @property
    def p_ca(self):
        return p_ca(self.confusion)

    @property
    def p_noa(self):
        return p_noa(self.confusion)

    @property
    def f1(self):
        return f1(self.confusion)

    def summary(self) -> dict:
        cm = self.confusion
        return {"model": self.model_kind, "average_f1": self.average_f1,
                "tl": cm.tl, "fa": cm.fa, "fl": cm.fl, "ta": cm.ta,
                "p_ca": self.p_ca, "p_noa": self.p_noa, "f1": self.f1,
                "groups": len(self.per_node_f1),
                "threshold": "" if self.threshold is None else self.threshold}

    def to_csv(self, path):
        """One row per scored record, then a ``# summary`` block of ``key,value`` rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["group", "node_id", "time_index", "score", "decision", "ground_truth"])
            for v in self.verdicts:
                w.writerow([v.group, v.node_id, v.time_index, repr(v.score), v.decision,
                            "alice" if v.ground_truth else "eve"])
            w.writerow(["# summary"])
            for k, val in self.summary().items():
                w.writerow([k, val])


def split_records(dataset: Dataset, n_train: int, n_test: int):
    """Per-transmitter split in time order: first ``n_train`` train, next ``n_test`` test."""
    groups: dict[tuple[int, bool], list] = {}
    for r in dataset.records:
        groups.setdefault((r.node_id, r.is_alice), []).append(r)
    train, test = {}, {}
    for key, recs in groups.items():
        recs = sorted(recs, key=lambda r: r.time_index)
        if len(recs) < n_train + n_test:
            raise ProtocolError(f"transmitter {key} has {len(recs)} records, "
                                f"need {n_train + n_test}")
        train[key] = recs[:n_train]
        test[key] = recs[n_train:n_train + n_test]
    return train, test


def _pilot(records):
    """First record whose trusted upper-layer check says it came from Alice."""
    for r in records:
        if r.is_alice:
            return r
    raise ProtocolError("no record passes the pilot check")


def build_model(kind: str, config: HvaeConfig):
    if kind == "tf_hvae":
        return HvaeModel.build(config)
    if kind in ("tf_ae", "tb_ae"):
        return AutoEncoder.build(config)
    if kind == "tf_vae":
        return PlainVAE.build(config)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def fit_model(model, samples):
    if isinstance(model, HvaeModel):
        return train_hvae(model, samples)
    return model.fit(samples)


def plan_protocol(dataset: Dataset, n_train: int, n_test: int, alice_node: int | None = None):
    """Training records, evaluation groups and validation groups for a dataset.

    Fixed-node datasets: train on every node's first ``n_train`` records; one
    group per spoofing node, all sharing Alice's first record as reference.
    Mobile datasets: train on Alice's records at every position; one group per
    Alice position ``k`` that has a trailing spoofer at ``k - eve_interval``, with
    Alice's first record at ``k`` as reference.

    Validation groups mirror the evaluation groups but draw both sides from the
    training split (the reference itself excluded); they are only used to pick
    a threshold for the threshold-based baseline.
    """
    if not any(r.is_alice for r in dataset.records):
        raise ProtocolError("dataset has no Alice records")
    if n_test < 1:
        raise ProtocolError("empty test split")
    if n_train < 1:
        raise ProtocolError("empty training split")
    train, test = split_records(dataset, n_train, n_test)
    geo = dataset.geometry
    groups, val_groups = [], []

    def add(spoofer, alice, ref):
        dist = geo.distance(alice, spoofer) if geo is not None else float("nan")
        groups.append(EvalGroup(spoofer, alice, ref, test[(alice, True)] + test[(spoofer, False)], dist))
        val = [r for r in train[(alice, True)] if r is not ref] + train[(spoofer, False)]
        val_groups.append(EvalGroup(spoofer, alice, ref, val, dist))

    if dataset.kind == "mobile":
        lag = dataset.eve_interval
        train_records = [r for (node, alice), recs in sorted(train.items()) if alice for r in recs]
        for k in sorted(n for (n, alice) in train if alice):
            if (k - lag, False) in test:
                add(k - lag, k, _pilot(train[(k, True)]))
    else:
        alice = alice_node if alice_node is not None else (geo.alice_node if geo else None)
        if alice is None or (alice, True) not in train:
            raise ProtocolError(f"Alice node {alice} has no legitimate records")
        train_records = [r for key in sorted(train) for r in train[key]]
        ref = _pilot(train[(alice, True)])
        for (node, is_alice) in sorted(test):
            if not is_alice:
                add(node, alice, ref)
    if not groups:
        raise ProtocolError("no evaluation groups: nothing to authenticate")
    return train_records, groups, val_groups


def _score_groups(model, stats, groups, rng):
    """Shuffle each group into a random arrival order, then score it against its reference."""
    out = []
    for g in groups:
        # arrival order is random so rank ties carry no label information
        g.records = [g.records[i] for i in rng.permutation(len(g.records))]
        x = stats.apply(np.array([r.cir for r in g.records]))
        ref = stats.apply(g.reference.cir[None, :])[0]
        out.append((channel_difference(model, ref, x), np.array([r.is_alice for r in g.records])))
    return out


def _mean_f1(scored, xi) -> float:
    return float(np.mean([f1_score(_cm(threshold_rule(s, xi), t)) for s, t in scored]))


def run_protocol(dataset: Dataset, model_kind: str, hvae_config: HvaeConfig,
                 auth_config: AuthConfig | None = None, n_train: int = 30, n_test: int = 10,
                 alice_node: int | None = None, model=None,
                 feature_mode: str = "magnitude") -> tuple[AuthReport, object]:
    """Initialisation, training and authentication phases end to end.

    ``tb_ae`` (or ``mode="threshold_sweep"``) selects one threshold: the grid
    point with the best average F1 on the validation groups. The grid is the
    configured one or ``grid_points`` values spanning the validation scores.
    That threshold is applied to every evaluation group, and the test-set
    average F1 at every grid point is kept as ``report.sweep``. Other kinds
    apply the rank rule. Pass a trained ``model`` to skip training. Returns the
    report and the model.
    """
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}; expected one of {MODEL_KINDS}")
    auth_config = auth_config or AuthConfig()
    train_records, groups, val_groups = plan_protocol(dataset, n_train, n_test, alice_node)
    samples, stats = normalize(train_records, feature_mode)
    if samples.shape[1] != hvae_config.input_dim:
        raise ProtocolError(f"features have {samples.shape[1]} dimensions but input_dim is "
                            f"{hvae_config.input_dim}")
    if model is None:
        model = build_model(model_kind, hvae_config)
        history = fit_model(model, samples)
    else:
        history = []
    sweep_mode = model_kind == "tb_ae" or auth_config.mode == "threshold_sweep"

    rng = np.random.default_rng([hvae_config.train.seed, 2])
    scored = _score_groups(model, stats, groups, rng)
    sweep, threshold = [], None
    if sweep_mode:
        val_scored = _score_groups(model, stats, val_groups, rng)
        grid = (np.asarray(auth_config.threshold_grid, float) if auth_config.threshold_grid
                else threshold_grid(np.concatenate([s for s, _ in val_scored]),
                                    auth_config.grid_points))
        val_f1 = [_mean_f1(val_scored, xi) for xi in grid]
        threshold = float(grid[int(np.argmax(val_f1))])
        sweep = [(float(xi), _mean_f1(scored, xi), vf) for xi, vf in zip(grid, val_f1)]

    verdicts, per_node, per_dist = [], {}, {}
    for gi, (g, (scores, truth)) in enumerate(zip(groups, scored)):
        accepted = (threshold_rule(scores, threshold) if sweep_mode
                    else alpha_rule(scores, auth_config.alpha))
        verdicts.extend(_verdicts(scores, accepted, truth, g.records, gi))
        per_node[g.spoofer] = f1_score(_cm(accepted, truth))
        per_dist[g.spoofer] = g.distance

    report = AuthReport(model_kind, verdicts, per_node, per_dist, confusion(verdicts),
                        list(history), sweep, threshold)
    log.info("%s: average F1 %.4f over %d groups", model_kind, report.average_f1, len(per_node))
    return report, model
