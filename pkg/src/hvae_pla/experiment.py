"""Experiment runner: data, training, authentication and CSV artifacts.

Files written into the output directory (headers are fixed for every model kind):

==========================  =====================================================
``config.txt``              effective configuration, ``key = value``
``dataset.cir``             generated dataset (binary, not written by sweeps)
``model.ckpt``              trained model (not written by sweeps)
``loss_history.csv``        ``epoch,loss``
``per_node_f1.csv``         ``spoofer_node,distance_m,f1``
``threshold_sweep.csv``     ``threshold,test_average_f1,validation_average_f1``
                            (threshold-based runs only)
``verdicts.csv``            one row per scored record plus a summary block
``summary.csv``             one row per run, see ``SUMMARY_FIELDS``
``interval_sweep.csv``      ``eve_interval,model,seed,average_f1`` (interval sweeps)
==========================  =====================================================
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .auth import build_model, fit_model, plan_protocol, run_protocol
from .channel import gen_mobile_dataset, gen_static_dataset, normalize
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, _parse_hz, format_config
from .dataset_io import MAGIC, import_csv, load_dataset, save_dataset
from .metrics import UNDEFINED

log = logging.getLogger(__name__)

THREADS_ENV = "CIR_AUTH_THREADS"
SUMMARY_FIELDS = ("scenario", "model", "seed", "alice_node", "eve_interval", "h", "z",
                  "average_f1", "p_ca", "p_noa", "f1", "tl", "fa", "fl", "ta", "threshold",
                  "epochs", "first_loss", "final_loss")


def _fmt(v) -> str:
    if v is UNDEFINED:
        return "undefined"
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def load_or_generate(cfg: ExperimentConfig):
    """Return ``(dataset, generated)``."""
    if cfg.scenario_kind == "file":
        path = cfg.dataset_path
        with open(path, "rb") as fh:
            head = fh.read(len(MAGIC))
        ds = load_dataset(path) if head == MAGIC else import_csv(path, seed=cfg.seed)
        return ds, False
    scenario = cfg.scenario_params()
    if cfg.scenario == "mobile":
        return gen_mobile_dataset(cfg.seed, cfg.samples_per_node, cfg.eve_interval, scenario), True
    return gen_static_dataset(cfg.seed, cfg.samples_per_node, scenario, cfg.effective_alice_node), True


def _alice_arg(cfg: ExperimentConfig):
    return None if cfg.scenario == "mobile" else cfg.effective_alice_node


def summary_row(cfg: ExperimentConfig, report) -> list:
    cm = report.confusion
    hist = report.loss_history
    return [cfg.scenario_kind, report.model_kind, cfg.seed, cfg.effective_alice_node,
            cfg.eve_interval if cfg.scenario == "mobile" else "", cfg.h, cfg.z,
            report.average_f1, report.p_ca, report.p_noa, report.f1, cm.tl, cm.fa, cm.fl, cm.ta,
            report.threshold, len(hist), hist[0] if hist else None, hist[-1] if hist else None]


def write_report(out: Path, cfg: ExperimentConfig, report) -> None:
    if report.loss_history:
        _write_csv(out / "loss_history.csv", ["epoch", "loss"],
                   [(i + 1, v) for i, v in enumerate(report.loss_history)])
    _write_csv(out / "per_node_f1.csv", ["spoofer_node", "distance_m", "f1"],
               [(n, report.per_node_distance[n], f) for n, f in sorted(report.per_node_f1.items())])
    if report.sweep:
        _write_csv(out / "threshold_sweep.csv",
                   ["threshold", "test_average_f1", "validation_average_f1"], report.sweep)
    report.to_csv(out / "verdicts.csv")
    _write_csv(out / "summary.csv", SUMMARY_FIELDS, [summary_row(cfg, report)])


def _prepare(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(cfg))
    return out


def generate(cfg: ExperimentConfig):
    out = _prepare(cfg)
    ds, _ = load_or_generate(cfg)
    save_dataset(ds, out / "dataset.cir")
    return ds


def run_experiment(cfg: ExperimentConfig, save_artifacts: bool = True):
    """One end-to-end run; returns the report."""
    out = _prepare(cfg)
    ds, generated = load_or_generate(cfg)
    if generated and save_artifacts:
        save_dataset(ds, out / "dataset.cir")
    report, model = run_protocol(ds, cfg.model_kind, cfg.hvae_config(), cfg.auth_config(),
                                 cfg.n_train, cfg.n_test, _alice_arg(cfg),
                                 feature_mode=cfg.feature_mode)
    if save_artifacts:
        save_checkpoint(model, out / "model.ckpt")
    write_report(out, cfg, report)
    log.info("%s seed %d: average F1 %.4f", cfg.model_kind, cfg.seed, report.average_f1)
    return report


def train_only(cfg: ExperimentConfig):
    """Train on the protocol's training split and save the checkpoint and loss history."""
    out = _prepare(cfg)
    ds, generated = load_or_generate(cfg)
    if generated:
        save_dataset(ds, out / "dataset.cir")
    train_records, _, _ = plan_protocol(ds, cfg.n_train, cfg.n_test, _alice_arg(cfg))
    samples, _ = normalize(train_records, cfg.feature_mode)
    model = build_model(cfg.model_kind, cfg.hvae_config())
    history = fit_model(model, samples)
    save_checkpoint(model, out / "model.ckpt")
    _write_csv(out / "loss_history.csv", ["epoch", "loss"],
               [(i + 1, v) for i, v in enumerate(history)])
    return model, history


def auth_only(cfg: ExperimentConfig):
    """Authenticate with a saved checkpoint (``checkpoint`` key, else ``<output_dir>/model.ckpt``)."""
    out = _prepare(cfg)
    ckpt = cfg.checkpoint or str(out / "model.ckpt")
    model = load_checkpoint(ckpt)
    ds, _ = load_or_generate(cfg)
    report, _ = run_protocol(ds, cfg.model_kind, cfg.hvae_config(), cfg.auth_config(),
                             cfg.n_train, cfg.n_test, _alice_arg(cfg), model=model,
                             feature_mode=cfg.feature_mode)
    write_report(out, cfg, report)
    return report


def expand_sweep(cfg: ExperimentConfig) -> list[ExperimentConfig]:
    """Cartesian product of the ``sweep_*`` lists; empty lists keep the base value."""
    seeds = cfg.sweep_seeds or [cfg.seed]
    models = cfg.sweep_models or [cfg.model_kind]
    intervals = cfg.sweep_eve_interval or [cfg.eve_interval]
    hz = [_parse_hz(s) for s in cfg.sweep_hz] or [(cfg.h, cfg.z)]
    runs = []
    for (h, z), iv, model, seed in itertools.product(hz, intervals, models, seeds):
        name = f"{model}_s{seed}_i{iv}_h{h}z{z}"
        run = dataclasses.replace(cfg, seed=seed, model_kind=model, eve_interval=iv, h=h, z=z,
                                  output_dir=str(Path(cfg.output_dir) / "runs" / name),
                                  sweep_seeds=[], sweep_models=[], sweep_eve_interval=[],
                                  sweep_hz=[])
        runs.append(run.validate())
    return runs


def _sweep_worker(run: ExperimentConfig):
    report = run_experiment(run, save_artifacts=False)
    return summary_row(run, report)


def sweep_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def run_sweep(cfg: ExperimentConfig) -> list[list]:
    """Run every expanded configuration; results are identical for any thread count."""
    out = _prepare(cfg)
    runs = expand_sweep(cfg)
    workers = min(sweep_threads(), len(runs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_worker, runs))
    else:
        rows = [_sweep_worker(r) for r in runs]
    _write_csv(out / "summary.csv", SUMMARY_FIELDS, rows)
    if cfg.sweep_eve_interval:
        idx = SUMMARY_FIELDS.index
        _write_csv(out / "interval_sweep.csv", ["eve_interval", "model", "seed", "average_f1"],
                   [(r[idx("eve_interval")], r[idx("model")], r[idx("seed")], r[idx("average_f1")])
                    for r in rows])
    return rows
