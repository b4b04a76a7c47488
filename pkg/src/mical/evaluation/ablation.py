"""Cross-validated ablation over the pipeline variants.

Variants:

* ``cnn``        raw CNN soft decisions
* ``cnn-fg``     CNN soft decisions smoothed by chain inference
* ``cnn-smile``  CNN fused with MI features
* ``mical``      MI-fused CNN followed by chain inference
"""

from dataclasses import dataclass, field, replace
import csv
import json
import logging

import numpy as np

from .. import chain_fg, cnn
from ..mi import MiConfig, clamp_features, estimate_all_pairs, feature_matrix
from ..preprocess import MI_SECONDS, NotchSpec, balance, blockify, notch_filter
from .metrics import auc_pr, auc_roc, precision_recall_f1
from .synth import SynthSpec, generate_synthetic

__all__ = [
    "VARIANTS",
    "PatientData",
    "prepare_patient",
    "synthetic_cohort",
    "SYNTH_MI_CONFIG",
    "MetricReport",
    "AblationSettings",
    "run_ablation",
    "fit_model",
    "transition_model",
    "write_report_json",
    "write_report_csv",
]

log = logging.getLogger(__name__)

VARIANTS = ("cnn", "cnn-fg", "cnn-smile", "mical")
METRICS = ("auc_roc", "auc_pr", "f1")
_USES_MI = {"cnn-smile", "mical"}
_USES_FG = {"cnn-fg", "mical"}


@dataclass
class PatientData:
    """All windowed records of one patient, with optional per-block MI features."""

    patient_id: str
    windows: list
    mi: list = None  # one (n_blocks, n_pairs) array per record

    @property
    def has_mi(self):
        return self.mi is not None and len(self.mi) == len(self.windows)

    def blocks(self):
        return np.concatenate([np.asarray(w.cnn_windows) for w in self.windows])

    def labels(self):
        return np.concatenate([w.labels for w in self.windows])

    def mi_features(self):
        return np.concatenate(self.mi)


# Warm-started critics keep the synthetic ablation inside a desk budget.
SYNTH_MI_CONFIG = MiConfig(warm_start=True, warm_steps=30)


def prepare_patient(patient_id, records, mi_cfg=None, notch=True, jobs=1):
    """Notch, balance, blockify and (optionally) estimate MI for each record.

    Records without seizures, or whose balanced span is shorter than the MI
    window, contribute no blocks and are skipped. ``mi_cfg=None`` skips MI
    estimation, which leaves the patient usable only by the variants without
    MI features.
    """
    windows, mi = [], []
    for rec in records:
        if not rec.annotations:
            log.info("%s: skipping a record without seizures", patient_id)
            continue
        if notch:
            rec = notch_filter(rec, NotchSpec(fs=rec.fs))
        rec = balance(rec)
        if rec.duration_s < MI_SECONDS + 1:
            log.warning("%s: balanced record of %.0f s is too short, skipped", patient_id, rec.duration_s)
            continue
        ws = blockify(rec)
        windows.append(ws)
        if mi_cfg is not None:
            mi.append(feature_matrix(estimate_all_pairs(ws, mi_cfg, jobs=jobs)))
    if not windows:
        raise ValueError(f"patient {patient_id} has no usable seizure records")
    return PatientData(patient_id, windows, mi if mi_cfg is not None else None)


def synthetic_cohort(n_patients=4, base_seed=100, spec=None, mi_cfg=SYNTH_MI_CONFIG, jobs=1):
    """One synthetic record per patient; patient ``k`` uses seed ``base_seed + k``."""
    spec = spec or SynthSpec()
    out = []
    for k in range(n_patients):
        rec = generate_synthetic(replace(spec, seed=base_seed + k))
        cfg = None if mi_cfg is None else replace(mi_cfg, seed=mi_cfg.seed + k)
        out.append(prepare_patient(f"synth{k:02d}", [rec], cfg, jobs=jobs))
    return out


@dataclass
class MetricReport:
    per_fold: dict = field(default_factory=lambda: {m: [] for m in METRICS})
    test_patients: list = field(default_factory=list)

    def mean(self, metric):
        return float(np.mean(self.per_fold[metric]))

    def std(self, metric):
        return float(np.std(self.per_fold[metric]))

    def as_dict(self):
        return {
            m: {"mean": self.mean(m), "std": self.std(m), "per_fold": [float(v) for v in self.per_fold[m]]}
            for m in METRICS
        }


@dataclass
class AblationSettings:
    epochs: int = 20
    lr: float = 1e-3
    batch: int = 32
    threshold: float = 0.5
    # None: histogram estimate from training labels; else (p11, p10)
    transition: tuple = None
    seed: int = 0
    cnn_conv: tuple = ((32, 256, 32), (64, 4, 2))
    cnn_dense: tuple = (64,)


def fit_model(train, use_mi, settings, fold=0):
    """Train one CNN on every block of ``train``; the seed is ``settings.seed + fold``."""
    blocks = np.concatenate([p.blocks() for p in train])
    labels = np.concatenate([p.labels() for p in train])
    mi = clamp_features(np.concatenate([p.mi_features() for p in train])) if use_mi else None
    first = train[0].windows[0]
    cfg = cnn.CnnConfig(
        n_channels=first.n_channels,
        input_length=first.cnn_length,
        fs=first.fs,
        conv=settings.cnn_conv,
        dense=settings.cnn_dense,
        mi_dim=mi.shape[1] if use_mi else 0,
        seed=settings.seed + fold,
        input_scale=1.0 / float(blocks.std()),
    )
    model = cnn.build_model(cfg)
    cnn.train(model, blocks, labels, mi, epochs=settings.epochs, lr=settings.lr,
              batch=settings.batch, seed=settings.seed + fold)
    return model


def transition_model(train, settings):
    """Transition model for smoothing; the initial distribution is the training class prior."""
    seqs = [w.labels for p in train for w in p.windows]
    if settings.transition is None:
        p11, p10 = chain_fg.estimate_transitions(seqs)
    else:
        p11, p10 = settings.transition
    prior = float(np.mean(np.concatenate(seqs)))
    return chain_fg.TransitionModel(p11, p10, (1.0 - prior, prior))


def _scores(model, patients, use_mi, use_fg, tm):
    """Concatenated per-block scores over every test record."""
    out = []
    for p in patients:
        for r, w in enumerate(p.windows):
            mi = clamp_features(p.mi[r]) if use_mi else None
            raw = cnn.predict_proba(model, w.cnn_windows, mi)
            out.append(chain_fg.smooth(raw, tm, prior=model.prior) if use_fg else raw)
    return np.concatenate(out)


def run_ablation(patients, variants, plan, settings=None, folds=None):
    """Train and score every variant on every selected fold of ``plan``.

    Returns ``{variant: MetricReport}``; all variants see identical splits.
    """
    settings = settings or AblationSettings()
    variants = tuple(variants)
    unknown = set(variants) - set(VARIANTS)
    if unknown:
        raise ValueError(f"unknown variant(s): {sorted(unknown)}")
    by_id = {p.patient_id: p for p in patients}
    if any(v in _USES_MI for v in variants) and not all(p.has_mi for p in patients):
        raise ValueError("MI variants requested but MI features are missing")
    reports = {v: MetricReport() for v in variants}
    for fold in range(len(plan)) if folds is None else folds:
        train_ids, test_ids = plan.split(fold)
        train = [by_id[i] for i in train_ids]
        test = [by_id[i] for i in test_ids]
        labels = np.concatenate([p.labels() for p in test])
        tm = transition_model(train, settings)
        models = {}
        for v in variants:
            use_mi = v in _USES_MI
            if use_mi not in models:
                log.info("fold %d: training %s model", fold, "MI-fused" if use_mi else "plain")
                models[use_mi] = fit_model(train, use_mi, settings, fold)
            scores = _scores(models[use_mi], test, use_mi, v in _USES_FG, tm)
            rep = reports[v]
            rep.per_fold["auc_roc"].append(auc_roc(scores, labels))
            rep.per_fold["auc_pr"].append(auc_pr(scores, labels))
            rep.per_fold["f1"].append(
                precision_recall_f1(chain_fg.detect(scores, settings.threshold), labels)["f1"]
            )
            rep.test_patients.append(list(test_ids))
            log.info("fold %d %-9s auc_roc=%.4f", fold, v, rep.per_fold["auc_roc"][-1])
    return reports


def write_report_json(path, reports, reference=None):
    payload = {v: r.as_dict() for v, r in reports.items()}
    if reference:
        payload["_reference"] = reference
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def write_report_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "metric", "mean", "std", "per_fold"])
        for v, r in reports.items():
            for m in METRICS:
                w.writerow([v, m, repr(r.mean(m)), repr(r.std(m)),
                            ";".join(repr(float(x)) for x in r.per_fold[m])])
