"""Command-line pipeline: ``synth``, ``preprocess``, ``train``, ``run`` and ``eval``.

Settings come from three layers, later ones winning: built-in defaults, a
flat ``key = value`` file given with ``--config``, then command-line flags.
Recognised keys are the fields of :class:`RunConfig`; list values are comma
separated and booleans accept true/false/yes/no/1/0.

Every random stage draws its seed from :func:`stage_seed`, so a single
``seed`` reproduces a whole run.

Dataset layouts
---------------
Raw input (``preprocess``) follows CHB-MIT: one directory per patient holding
``<patient>-summary.txt`` and the EDF files it lists. ``synth`` writes the same
layout. ``preprocess`` writes one ``.npz`` per seizure-bearing record plus
``manifest.json``; ``train``, ``run`` and ``eval`` read that directory.
"""

import argparse
import configparser
import dataclasses
from dataclasses import dataclass, fields
import json
import logging
from pathlib import Path
import sys
import zlib

import numpy as np

from . import chain_fg, cnn
from ._backend import BACKEND
from .edf import (
    EdfError,
    parse_edf,
    parse_summary,
    read_header,
    select_channels,
    usable_labels,
    write_edf,
)
from .evaluation import (
    VARIANTS,
    AblationSettings,
    PatientData,
    SynthSpec,
    auc_pr,
    auc_roc,
    fit_model,
    generate_synthetic,
    make_folds,
    precision_recall_f1,
    run_ablation,
    synthetic_cohort,
    write_report_csv,
    write_report_json,
)
from .mi import MiConfig, clamp_features, estimate_all_pairs, feature_matrix, write_mi_csv
from .preprocess import MI_SECONDS, NotchSpec, WindowSet, balance, blockify, notch_filter, write_labels_csv

__all__ = ["RunConfig", "load_config", "stage_seed", "build_parser", "main", "CliError"]

log = logging.getLogger("mical")

# published CHB-MIT figures for the full model, in percent; printed next to measured results
REFERENCE_RESULTS = {"mical": {"auc_roc": 83.8, "auc_pr": 50.38, "f1": 93.42}}
_MI_VARIANTS = {"cnn-smile", "mical"}
_FG_VARIANTS = {"cnn-fg", "mical"}


class CliError(RuntimeError):
    pass


@dataclass
class RunConfig:
    data: str = ""
    out: str = "mical-out"
    # empty: channels shared by every selected record, in first-record order
    channels: tuple = ()
    notch_hz: float = 60.0
    notch_q: float = 30.0
    mi: bool = True
    mi_tau: float = 0.9
    mi_steps: int = 200
    mi_batch: int = 256
    mi_hidden: int = 64
    mi_lr: float = 1e-3
    mi_warm_start: bool = False
    mi_warm_steps: int = 50
    epochs: int = 20
    lr: float = 1e-3
    batch: int = 32
    p11: float = chain_fg.REFERENCE_P11
    p10: float = chain_fg.REFERENCE_P10
    # estimate transitions from training labels instead of using p11/p10
    fit_transition: bool = False
    threshold: float = 0.5
    variant: str = "mical"
    seed: int = 0
    jobs: int = 1
    folds: int = 6
    holdout: int = 4
    # fold indices evaluated by ``eval``; empty means all
    eval_folds: tuple = ()
    patients: int = 4
    num_channels: int = 3
    duration_s: int = 900

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise CliError(f"threshold {self.threshold} must lie in (0, 1)")
        if self.variant not in VARIANTS:
            raise CliError(f"variant must be one of {', '.join(VARIANTS)}")
        if not (0.0 <= self.p11 <= 1.0 and 0.0 <= self.p10 <= 1.0):
            raise CliError("transition probabilities must lie in [0, 1]")
        if self.jobs < 1:
            raise CliError("jobs must be >= 1")
        if self.seed < 0:
            raise CliError("seed must be non-negative")

    def mi_config(self, seed):
        return MiConfig(tau=self.mi_tau, steps=self.mi_steps, batch=self.mi_batch, hidden=self.mi_hidden,
                        lr=self.mi_lr, seed=seed, warm_start=self.mi_warm_start, warm_steps=self.mi_warm_steps)

    def notch(self, fs):
        return NotchSpec(self.notch_hz, self.notch_q, fs)

    def ablation_settings(self, seed):
        return AblationSettings(epochs=self.epochs, lr=self.lr, batch=self.batch, threshold=self.threshold,
                                transition=None if self.fit_transition else (self.p11, self.p10), seed=seed)

    def as_dict(self):
        return {f.name: list(v) if isinstance(v, tuple) else v
                for f in fields(self) for v in [getattr(self, f.name)]}


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(name, default, text):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in _TRUE | _FALSE:
                raise ValueError(text)
            return low in _TRUE
        if isinstance(default, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            return tuple(int(t) for t in items) if name == "eval_folds" else tuple(items)
        return type(default)(text)
    except ValueError:
        raise CliError(f"config key {name!r}: cannot parse {text!r}") from None


def load_config(path):
    """Read a flat ``key = value`` file into a dict of typed overrides."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror}") from None
    parser.read_string("[run]\n" + text, source=str(path))
    defaults = {f.name: f.default for f in fields(RunConfig)}
    out = {}
    for key, value in parser["run"].items():
        if key not in defaults:
            raise CliError(f"unknown config key {key!r} in {path}")
        out[key] = _coerce(key, defaults[key], value)
    return out


def stage_seed(seed, stage):
    """32-bit sub-seed for a named stage, derived from the run seed."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(stage.encode("utf-8"))])
    return int(ss.generate_state(1, np.uint32)[0])


def _resolve(args):
    values = load_config(args.config) if getattr(args, "config", None) else {}
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = tuple(flag) if isinstance(f.default, tuple) else flag
    if getattr(args, "transition", None) is not None:
        values["p11"], values["p10"] = args.transition
    return RunConfig(**values)


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _manifest(command, cfg, **extra):
    return {"command": command, "config": cfg.as_dict(), **extra}


# ---------------------------------------------------------------- synth


def cmd_synth(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for k in range(cfg.patients):
        pid = f"synth{k + 1:02d}"
        spec = SynthSpec(num_channels=cfg.num_channels, duration_s=cfg.duration_s,
                         seed=stage_seed(cfg.seed, f"synth/{pid}"))
        rec = generate_synthetic(spec)
        pdir = out / pid
        pdir.mkdir(exist_ok=True)
        name = f"{pid}_01.edf"
        (pdir / name).write_bytes(write_edf(rec, patient_id=pid, recording_id=f"synthetic seed {spec.seed}"))
        lines = [f"File Name: {name}", f"Number of Seizures in File: {len(rec.annotations)}"]
        for a in rec.annotations:
            lines += [f"Seizure Start Time: {a.start_s} seconds", f"Seizure End Time: {a.end_s} seconds"]
        (pdir / f"{pid}-summary.txt").write_text("\n".join(lines) + "\n")
        entries.append({"patient": pid, "edf": f"{pid}/{name}", "seed": spec.seed,
                        "seizures": [[a.start_s, a.end_s] for a in rec.annotations]})
        log.info("%s: %d seizure(s)", pid, len(rec.annotations))
    _write_json(out / "manifest.json", _manifest("synth", cfg, patients=entries))
    return out


# ---------------------------------------------------------------- preprocess


def _discover(root):
    root = Path(root)
    if not root.is_dir():
        raise CliError(f"data directory {root} does not exist")
    summaries = sorted(root.glob("*/*-summary.txt"))
    if not summaries:
        n_files = sum(1 for p in root.rglob("*") if p.is_file())
        raise CliError(f"no '<patient>-summary.txt' files under {root} ({n_files} file(s) found)")
    selected = []
    for summary in summaries:
        patient = summary.name[: -len("-summary.txt")]
        for name, anns in parse_summary(summary.read_text()):
            if anns:
                path = summary.parent / name
                if not path.is_file():
                    raise CliError(f"{summary.name} lists {name}, which is missing")
                selected.append((patient, path, anns))
    if not selected:
        raise CliError(f"no seizures annotated in any of {len(summaries)} summary file(s)")
    return selected


def _common_labels(paths):
    shared = None
    for path in paths:
        with open(path, "rb") as fh:
            head = fh.read(256)
            try:
                ns = int(head[252:256].decode("ascii").strip())
            except (UnicodeDecodeError, ValueError):
                raise CliError(f"{path}: unreadable signal count") from None
            head += fh.read(256 * max(ns, 0))
        try:
            _, signals = read_header(head)
        except EdfError as exc:
            raise CliError(f"{path}: {exc}") from None
        keep, _ = usable_labels(signals)
        labels = [signals[k].label.strip() for k in keep]
        shared = labels if shared is None else [c for c in shared if c in set(labels)]
    return shared


def _save_windows(path, ws, channels, mi=None):
    arrays = dict(signal=ws.signal, fs=np.int64(ws.fs), block_times=ws.block_times, labels=ws.labels,
                  channels=np.array(channels))
    if mi is not None:
        arrays["mi"] = mi
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def _load_windows(path):
    with np.load(path) as z:
        ws = WindowSet(signal=z["signal"], fs=int(z["fs"]), block_times=z["block_times"], labels=z["labels"])
        mi = z["mi"] if "mi" in z.files else None
    return ws, mi


def cmd_preprocess(cfg):
    if not cfg.data:
        raise CliError("preprocess needs --data")
    selected = _discover(cfg.data)
    channels = list(cfg.channels) or _common_labels([p for _, p, _ in selected])
    if len(channels) < 2:
        raise CliError(f"fewer than two channels shared by all records: {channels}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    mi_seed = stage_seed(cfg.seed, "mi")
    entries = []
    for patient, path, anns in selected:
        try:
            rec = select_channels(parse_edf(path.read_bytes(), anns), channels)
        except EdfError as exc:
            raise CliError(f"{path}: {exc}") from None
        for w in rec.warnings:
            log.warning("%s: %s", path.name, w)
        rec = balance(notch_filter(rec, cfg.notch(rec.fs)))
        if rec.duration_s < MI_SECONDS + 1:
            log.warning("%s: balanced span of %.0f s is shorter than the MI window, skipped", path.name,
                        rec.duration_s)
            continue
        ws = blockify(rec)
        mi = None
        pdir = out / patient
        pdir.mkdir(exist_ok=True)
        stem = path.stem
        if cfg.mi:
            vectors = estimate_all_pairs(ws, cfg.mi_config(mi_seed), jobs=cfg.jobs)
            mi = feature_matrix(vectors)
            write_mi_csv(pdir / f"{stem}_mi.csv", vectors, len(channels))
        _save_windows(pdir / f"{stem}.npz", ws, channels, mi)
        write_labels_csv(pdir / f"{stem}_labels.csv", ws)
        entries.append({"patient": patient, "source": str(path.relative_to(cfg.data)),
                        "windows": f"{patient}/{stem}.npz", "blocks": len(ws),
                        "seizure_blocks": int(ws.labels.sum()),
                        "seizures": [[a.start_s, a.end_s] for a in rec.annotations]})
        log.info("%s: %d blocks, %d seizure", stem, len(ws), int(ws.labels.sum()))
    if not entries:
        raise CliError("every seizure record was too short after balancing")
    _write_json(out / "manifest.json", _manifest("preprocess", cfg, channels=channels, mi=cfg.mi,
                                                 mi_seed=mi_seed if cfg.mi else None, records=entries))
    return out


def load_dataset(root):
    """Patients of a preprocessed directory, grouped in manifest order."""
    root = Path(root)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except OSError:
        raise CliError(f"{root} has no manifest.json; run 'mical preprocess' first") from None
    if manifest.get("command") != "preprocess":
        raise CliError(f"{root} is not a preprocessed dataset")
    patients, entries = {}, {}
    for entry in manifest["records"]:
        ws, mi = _load_windows(root / entry["windows"])
        p = patients.setdefault(entry["patient"], PatientData(entry["patient"], [], []))
        p.windows.append(ws)
        p.mi.append(mi)
        entries.setdefault(entry["patient"], []).append(entry)
    for p in patients.values():
        if any(m is None for m in p.mi):
            p.mi = None
    return list(patients.values()), entries, manifest


# ---------------------------------------------------------------- train / run


def _require_mi(patients, variant):
    if variant in _MI_VARIANTS and not all(p.has_mi for p in patients):
        raise CliError(f"variant {variant!r} needs MI features; preprocess with mi = true")


def cmd_train(cfg):
    if not cfg.data:
        raise CliError("train needs --data (a preprocessed directory)")
    patients, _, _ = load_dataset(cfg.data)
    _require_mi(patients, cfg.variant)
    seed = stage_seed(cfg.seed, "cnn")
    model = fit_model(patients, cfg.variant in _MI_VARIANTS, cfg.ablation_settings(seed))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cnn.save_model(model, out / "model.micl")
    labels = [w.labels for p in patients for w in p.windows]
    p11, p10 = chain_fg.estimate_transitions(labels)
    _write_json(out / "train.json", _manifest("train", cfg, cnn_seed=seed, prior=model.prior,
                                              fitted_transition=[p11, p10]))
    return out / "model.micl"


def _metrics(scores, detected, labels):
    out = {"f1": precision_recall_f1(detected, labels)["f1"]}
    both = 0 < labels.sum() < len(labels)
    out["auc_roc"] = auc_roc(scores, labels) if both else None
    out["auc_pr"] = auc_pr(scores, labels) if labels.sum() else None
    return out


def cmd_run(cfg, model_path=None, train=False):
    if not cfg.data:
        raise CliError("run needs --data (a preprocessed directory)")
    patients, entries, _ = load_dataset(cfg.data)
    _require_mi(patients, cfg.variant)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    use_mi = cfg.variant in _MI_VARIANTS
    if model_path:
        try:
            model = cnn.load_model(model_path)
        except OSError:
            raise CliError(f"checkpoint {model_path} not found") from None
    elif train:
        model = fit_model(patients, use_mi, cfg.ablation_settings(stage_seed(cfg.seed, "cnn")))
        cnn.save_model(model, out / "model.micl")
    else:
        raise CliError("no checkpoint: pass --model PATH or --train")
    if bool(model.config.mi_dim) != use_mi:
        raise CliError(f"checkpoint {'has' if model.config.mi_dim else 'lacks'} MI inputs; "
                       f"incompatible with variant {cfg.variant!r}")
    labels_all = [w.labels for p in patients for w in p.windows]
    if cfg.fit_transition:
        p11, p10 = chain_fg.estimate_transitions(labels_all)
    else:
        p11, p10 = cfg.p11, cfg.p10
    tm = chain_fg.TransitionModel(p11, p10)
    tm = tm.with_initial(tm.stationary)
    scores, detected, labels, rows = [], [], [], []
    for p in patients:
        for r, ws in enumerate(p.windows):
            mi = clamp_features(p.mi[r]) if use_mi else None
            raw = cnn.predict_proba(model, ws.cnn_windows, mi)
            marg = chain_fg.smooth(raw, tm, prior=model.prior) if cfg.variant in _FG_VARIANTS else raw
            det = chain_fg.detect(marg, cfg.threshold)
            stem = Path(entries[p.patient_id][r]["windows"]).stem
            (out / p.patient_id).mkdir(exist_ok=True)
            csv_path = out / p.patient_id / f"{stem}_detections.csv"
            chain_fg.write_detections_csv(csv_path, ws.block_times, raw, marg, det)
            rows.append({"patient": p.patient_id, "record": stem, "detections": str(csv_path.relative_to(out)),
                         **_metrics(marg, det, ws.labels)})
            scores.append(marg)
            detected.append(det)
            labels.append(ws.labels)
    overall = _metrics(np.concatenate(scores), np.concatenate(detected), np.concatenate(labels))
    _write_json(out / "metrics.json", {"variant": cfg.variant, "overall": overall, "records": rows})
    _write_json(out / "manifest.json", _manifest("run", cfg, backend=BACKEND, transition=[p11, p10],
                                                 initial=list(tm.initial), prior=model.prior))
    return overall


# ---------------------------------------------------------------- eval


def cmd_eval(cfg, synthetic=False):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if synthetic:
        mi_cfg = dataclasses.replace(cfg.mi_config(stage_seed(cfg.seed, "mi")), warm_start=True) \
            if cfg.mi else None
        base = SynthSpec(num_channels=cfg.num_channels, duration_s=cfg.duration_s)
        patients = synthetic_cohort(cfg.patients, base_seed=stage_seed(cfg.seed, "synth"), spec=base,
                                    mi_cfg=mi_cfg, jobs=cfg.jobs)
        k, holdout = cfg.patients, 1
    else:
        if not cfg.data:
            raise CliError("eval needs --data or --synthetic")
        patients, _, _ = load_dataset(cfg.data)
        k, holdout = cfg.folds, cfg.holdout
    variants = VARIANTS if all(p.has_mi for p in patients) else ("cnn", "cnn-fg")
    if len(variants) < len(VARIANTS):
        log.warning("no MI features; evaluating %s only", ", ".join(variants))
    try:
        plan = make_folds([p.patient_id for p in patients], k=k, holdout=holdout, seed=stage_seed(cfg.seed, "folds"))
    except ValueError as exc:
        raise CliError(str(exc)) from None
    folds = list(cfg.eval_folds) or None
    reports = run_ablation(patients, variants, plan, cfg.ablation_settings(stage_seed(cfg.seed, "cnn")), folds)
    write_report_json(out / "report.json", reports, reference=None if synthetic else REFERENCE_RESULTS)
    write_report_csv(out / "report.csv", reports)
    _write_json(out / "manifest.json", _manifest("eval", cfg, synthetic=synthetic, backend=BACKEND,
                                                 folds=[list(g) for g in plan.groups]))
    return reports


# ---------------------------------------------------------------- argument parsing


def _common(p):
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--seed", type=int, help="run seed (default 0)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="worker processes for pairwise MI (results do not depend on it)")
    p.add_argument("-v", "--verbose", action="store_true")


def _model_flags(p):
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)


def _fg_flags(p):
    p.add_argument("--threshold", type=float, help="detection threshold T (default 0.5)")
    p.add_argument("--transition", nargs=2, type=float, metavar=("P11", "P10"),
                   help="seizure persistence and onset probabilities (default 0.8954 0.1790)")
    p.add_argument("--fit-transition", dest="fit_transition", action="store_const", const=True,
                   help="estimate transitions from the training labels instead")


def build_parser():
    parser = argparse.ArgumentParser(prog="mical", description="MI + CNN + chain-inference seizure detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic CHB-MIT-layout dataset")
    _common(p)
    p.add_argument("--patients", type=int)
    p.add_argument("--num-channels", dest="num_channels", type=int)
    p.add_argument("--duration", dest="duration_s", type=int, help="seconds per record")

    p = sub.add_parser("preprocess", help="notch, balance, window and estimate MI")
    _common(p)
    p.add_argument("--data", help="CHB-MIT-layout input directory")
    p.add_argument("--channels", type=lambda s: [c for c in s.split(",") if c], help="comma-separated labels")
    p.add_argument("--no-mi", dest="mi", action="store_const", const=False, help="skip MI estimation")
    p.add_argument("--mi-steps", dest="mi_steps", type=int)
    p.add_argument("--warm-start", dest="mi_warm_start", action="store_const", const=True,
                   help="carry each pair's critic across consecutive blocks")

    p = sub.add_parser("train", help="train the block classifier on a preprocessed dataset")
    _common(p)
    p.add_argument("--data", help="preprocessed directory")
    _model_flags(p)

    p = sub.add_parser("run", help="detect seizures on a preprocessed dataset")
    _common(p)
    p.add_argument("--data", help="preprocessed directory")
    p.add_argument("--model", help="checkpoint written by 'mical train'")
    p.add_argument("--train", action="store_true", help="train on --data when no checkpoint is given")
    _model_flags(p)
    _fg_flags(p)

    p = sub.add_parser("eval", help="cross-validated ablation over the four variants")
    _common(p)
    p.add_argument("--data", help="preprocessed directory")
    p.add_argument("--synthetic", action="store_true", help="generate a synthetic cohort instead")
    p.add_argument("--patients", type=int, help="synthetic cohort size")
    p.add_argument("--folds", type=int)
    p.add_argument("--holdout", type=int)
    p.add_argument("--eval-folds", dest="eval_folds", type=lambda s: [int(v) for v in s.split(",") if v],
                   help="comma-separated fold indices (default all)")
    _model_flags(p)
    _fg_flags(p)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        if args.command == "synth":
            cmd_synth(cfg)
        elif args.command == "preprocess":
            cmd_preprocess(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "run":
            overall = cmd_run(cfg, args.model, args.train)
            print(json.dumps(overall, sort_keys=True))
        elif args.command == "eval":
            if args.synthetic and args.transition is None and args.fit_transition is None:
                # the CHB-MIT reference transitions do not describe the generator's chain
                cfg = dataclasses.replace(cfg, fit_transition=True)
            reports = cmd_eval(cfg, args.synthetic)
            for v, r in reports.items():
                print(f"{v:<10} auc_roc={r.mean('auc_roc'):.4f} auc_pr={r.mean('auc_pr'):.4f} f1={r.mean('f1'):.4f}")
    except (CliError, EdfError) as exc:
        print(f"mical {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
