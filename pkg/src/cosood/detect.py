"""OOD scoring, thresholding, ensembling and evaluation metrics."""
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyScoreSet, MixedHeadKinds, ShapeMismatch
from .heads import HeadKind
from .kernels import average_precision_sorted, rank_sum_auroc
from .ndcore import Tensor, softmax

SUCC_ERR_CONFIDENCE = "pred_prob"


@dataclass
class ScoreRecord:
    score: float
    pred_class: int
    pred_prob: float
    is_id: bool
    correct: Optional[bool] = None


@dataclass
class ScoreSet:
    """Column-wise scores for one batch of inputs."""

    score: np.ndarray
    pred_class: np.ndarray
    pred_prob: np.ndarray
    is_id: bool
    correct: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.score)

    def records(self):
        out = []
        for i in range(len(self)):
            ok = None if self.correct is None else bool(self.correct[i])
            out.append(ScoreRecord(float(self.score[i]), int(self.pred_class[i]), float(self.pred_prob[i]),
                                   self.is_id, ok))
        return out


@dataclass
class ModelScores:
    """Raw per-class scores of one model (or an ensemble) on a batch."""

    kind: HeadKind
    class_scores: np.ndarray  # (B, C)
    scale: np.ndarray  # (B,)


def model_scores(model, x, batch_size=1024):
    model.eval()
    x = np.asarray(x, dtype=model.dtype)
    cs, sc = [], []
    for i in range(0, len(x), batch_size):
        out = model(Tensor(x[i:i + batch_size]))
        cs.append(out.class_scores.data)
        sc.append(out.scale)
    return ModelScores(model.kind, np.concatenate(cs), np.concatenate(sc))


def score_set(ms, labels=None, is_id=True):
    """Turn raw class scores into detection scores and predictions.

    Cosine heads score by the largest cosine; the other heads by the largest
    softmax probability. Ties in the argmax go to the lowest class index.
    """
    cs = ms.class_scores
    if cs.ndim != 2:
        raise ShapeMismatch(f"class scores must be (B, C), got {cs.shape}")
    pred = np.argmax(cs, axis=1)
    rows = np.arange(len(cs))
    probs = softmax(cs * ms.scale[:, None]) if ms.kind is not HeadKind.STANDARD else softmax(cs)
    if HeadKind(ms.kind).is_cosine:
        score = cs[rows, pred]
    else:
        score = probs.max(axis=1)
    correct = None
    if is_id and labels is not None:
        correct = pred == np.asarray(labels)
    return ScoreSet(score, pred, probs[rows, pred], is_id, correct)


def score_batch(model, inputs, labels=None, is_id=True):
    """One :class:`ScoreRecord` per input row."""
    return score_set(model_scores(model, inputs), labels, is_id).records()


def detect_ood(records, threshold):
    """Flag as OOD every record whose score is below ``threshold``."""
    scores = records.score if isinstance(records, ScoreSet) else np.array([r.score for r in records])
    return scores < threshold


def _mean_exact(arrays):
    # shifted mean: identical members give back the first member bit for bit
    first = arrays[0]
    if len(arrays) == 1:
        return first.copy()
    acc = np.zeros_like(first)
    for a in arrays[1:]:
        acc += a - first
    return first + acc / len(arrays)


def ensemble_scores(members):
    """Average the class scores (and scales) of several models elementwise."""
    if not members:
        raise ValueError("ensemble needs at least one member")
    kinds = {HeadKind(m.kind) for m in members}
    if len(kinds) > 1:
        raise MixedHeadKinds(f"ensemble members mix head kinds {sorted(k.value for k in kinds)}")
    shapes = {m.class_scores.shape for m in members}
    if len(shapes) > 1:
        raise ShapeMismatch(f"ensemble members disagree on output shape: {sorted(shapes)}")
    return ModelScores(members[0].kind, _mean_exact([m.class_scores for m in members]),
                       _mean_exact([m.scale for m in members]))


def _nonempty(name, a):
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size == 0:
        raise EmptyScoreSet(f"{name} is empty")
    return a


def auroc(id_scores, ood_scores):
    """P(random ID score > random OOD score), ties counted 1/2."""
    return float(rank_sum_auroc(_nonempty("id_scores", id_scores), _nonempty("ood_scores", ood_scores)))


def aupr(pos_scores, neg_scores):
    """Non-interpolated area under precision-recall, ``pos_scores`` positive."""
    pos = _nonempty("pos_scores", pos_scores)
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    return average_precision_sorted(pos, neg)


def fpr_at_tpr(id_scores, ood_scores, tpr=0.95):
    """Fraction of OOD accepted at the largest threshold that keeps ``tpr`` of ID."""
    ids = np.sort(_nonempty("id_scores", id_scores))[::-1]
    ood = _nonempty("ood_scores", ood_scores)
    k = int(np.ceil(tpr * ids.size)) - 1
    return float(np.mean(ood >= ids[k]))


@dataclass
class MetricsReport:
    auroc: float
    aupr_in: float
    aupr_out: float
    aupr_succ: Optional[float]
    aupr_err: Optional[float]
    id_accuracy: float
    n_id: int
    n_ood: int
    fpr_at_95_tpr: float  # extra metric, not part of the reference protocol
    ood_name: str = ""
    head: str = ""
    seed: Optional[object] = None
    succ_err_confidence: str = SUCC_ERR_CONFIDENCE
    config: dict = field(default_factory=dict)

    METRICS = ("auroc", "aupr_in", "aupr_out", "aupr_succ", "aupr_err", "id_accuracy", "fpr_at_95_tpr")

    def metrics(self):
        return {k: getattr(self, k) for k in self.METRICS}

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self):
        flat = {}
        for k, v in self.to_dict().items():
            if k == "config":
                v = json.dumps(v, sort_keys=True, separators=(",", ":"))
            flat[k] = "null" if v is None else (f"{v:.10f}" if isinstance(v, float) else v)
        return "".join(f"{k} = {flat[k]}\n" for k in sorted(flat))


def compute_metrics(id_set, ood_set, **provenance):
    """Full report for one ID/OOD pair.

    AUPR-Succ and AUPR-Err rank ID samples by their predicted probability;
    either is ``None`` when its positive class is empty.
    """
    if id_set.correct is None:
        raise ValueError("ID scores need ground-truth correctness")
    ids, ood = id_set.score, ood_set.score
    conf = id_set.pred_prob
    ok = id_set.correct
    succ = aupr(conf[ok], conf[~ok]) if ok.any() else None
    err = aupr(-conf[~ok], -conf[ok]) if (~ok).any() else None
    return MetricsReport(
        auroc=auroc(ids, ood),
        aupr_in=aupr(ids, ood),
        aupr_out=aupr(-ood, -ids),
        aupr_succ=succ,
        aupr_err=err,
        id_accuracy=float(ok.mean()),
        n_id=len(ids),
        n_ood=len(ood),
        fpr_at_95_tpr=fpr_at_tpr(ids, ood),
        **provenance,
    )


def aggregate_reports(reports):
    """Mean and (population) std of every metric across reports."""
    out = {}
    for k in MetricsReport.METRICS:
        vals = [getattr(r, k) for r in reports if getattr(r, k) is not None]
        out[k] = {"mean": float(np.mean(vals)) if vals else None,
                  "std": float(np.std(vals)) if vals else None,
                  "n": len(vals)}
    return out
