"""Seeded ensemble experiments: train a target, sweep query sizes, attack, score.

A run is a pure function of its JSON configuration.  Trial ``t`` uses seed
``seed_base + t`` for its data split, target initialisation, query sampling
and surrogate initialisation.  Rows are written in trial order regardless of
how many worker processes ran the trials.
"""

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from cfx import data, metrics, nn
from cfx.attacks import (as_baseline, attack_set_from_responses, polytope_from_responses,
                         train_surrogate)
from cfx.counterfactuals import CfConfig, MccfGenerator, NearestNeighborGenerator
from cfx.errors import CfxError, ConfigError, FormatError, InputError
from cfx.losses import LossKind
from cfx.oracle import TargetOracle

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("dataset", "attack", "surrogate_arch", "n_queries", "trial",
                  "fidelity_test", "fidelity_uniform")
ATTACKS = ("baseline", "cca", "soft_bce", "polytope")
SEED_ENV = "CFX_SEED"


@dataclass
class ExperimentConfig:
    dataset: dict = field(default_factory=lambda: {"kind": "two_moons", "n": 1000, "noise": 0.1})
    split: dict = field(default_factory=lambda: {"train": 0.5, "test": 0.25, "attack": 0.25})
    target_arch: tuple = (20, 10)
    surrogate_archs: tuple = ((20, 10), (20, 10, 5))
    attacks: tuple = ("baseline", "cca")
    schedule: dict = field(default_factory=lambda: {"T": 20, "N": 20})
    ensemble_size: int = 100
    seed_base: int = 0
    k: float = 0.5
    cf: dict = field(default_factory=dict)
    target_training: dict = field(default_factory=dict)
    surrogate_training: dict = field(default_factory=dict)
    uniform_size: int = metrics.DEFAULT_UNIFORM_SIZE
    workers: int = 1
    output_dir: str = "cfx-out"

    @property
    def query_sizes(self):
        return [self.schedule["N"] * t for t in range(1, self.schedule["T"] + 1)]

    def to_dict(self):
        return json.loads(json.dumps(asdict(self)))


def _arch(value, path):
    try:
        arch = tuple(int(h) for h in value)
    except (TypeError, ValueError):
        raise ConfigError(path, "architecture must be a list of positive integers") from None
    if not arch or min(arch) < 1:
        raise ConfigError(path, "architecture must be a nonempty list of positive integers")
    return arch


def _training(section, path):
    try:
        return nn.TrainingConfig(**{k: v for k, v in section.items() if k != "shuffle_seed"})
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from None
    except InputError as exc:
        raise ConfigError(path, str(exc)) from None


def parse_config(payload, env=None):
    """Validate a config mapping; unknown keys and bad values raise :class:`ConfigError`."""
    if not isinstance(payload, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    known = ExperimentConfig.__dataclass_fields__
    for key in payload:
        if key not in known:
            raise ConfigError(key, "unknown key")
    for key in ("dataset", "split", "schedule", "cf", "target_training", "surrogate_training"):
        if key in payload and not isinstance(payload[key], dict):
            raise ConfigError(key, "must be a JSON object")
    for key in ("ensemble_size", "seed_base", "uniform_size", "workers"):
        if key in payload and (isinstance(payload[key], bool) or not isinstance(payload[key], int)):
            raise ConfigError(key, "must be an integer")
    if "k" in payload and not isinstance(payload["k"], (int, float)):
        raise ConfigError("k", "must be a number")
    cfg = ExperimentConfig(**payload)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            cfg.seed_base = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(SEED_ENV, "must be an integer") from None

    kind = cfg.dataset.get("kind")
    if kind not in ("two_moons", "sphere", "csv"):
        raise ConfigError("dataset.kind", "must be two_moons, sphere or csv")
    if kind == "csv" and "path" not in cfg.dataset:
        raise ConfigError("dataset.path", "required for csv datasets")
    try:
        cfg.split = dict(cfg.split)
        data.SplitSpec(cfg.split.get("train", 0.5), cfg.split.get("test", 0.25),
                       cfg.split.get("attack", 0.25), 0,
                       cfg.split.get("attack_class_balance"))
    except (InputError, TypeError, ValueError) as exc:
        raise ConfigError("split", str(exc)) from None
    cfg.target_arch = _arch(cfg.target_arch, "target_arch")
    if not cfg.surrogate_archs:
        raise ConfigError("surrogate_archs", "must be nonempty")
    cfg.surrogate_archs = tuple(_arch(a, f"surrogate_archs[{i}]") for i, a in enumerate(cfg.surrogate_archs))
    cfg.attacks = tuple(cfg.attacks)
    for i, a in enumerate(cfg.attacks):
        if a not in ATTACKS:
            raise ConfigError(f"attacks[{i}]", f"unknown attack {a!r}")
    if not cfg.attacks:
        raise ConfigError("attacks", "must be nonempty")
    for key in ("T", "N"):
        if not isinstance(cfg.schedule.get(key), int) or cfg.schedule[key] < 1:
            raise ConfigError(f"schedule.{key}", "must be a positive integer")
    if not isinstance(cfg.ensemble_size, int) or cfg.ensemble_size < 1:
        raise ConfigError("ensemble_size", "must be >= 1")
    if not 0 < cfg.k <= 1:
        raise ConfigError("k", "must lie in (0, 1]")
    if cfg.uniform_size < 1:
        raise ConfigError("uniform_size", "must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("workers", "must be >= 1")
    method = cfg.cf.get("method", "mccf")
    if method not in ("mccf", "nearest_neighbor"):
        raise ConfigError("cf.method", "must be mccf or nearest_neighbor")
    try:
        CfConfig(**{k: v for k, v in cfg.cf.items() if k != "method"})
    except (TypeError, InputError) as exc:
        raise ConfigError("cf", str(exc)) from None
    _training(cfg.target_training, "target_training")
    _training(cfg.surrogate_training, "surrogate_training")
    return cfg


def load_config(path, env=None):
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from None
    return parse_config(payload, env)


def load_dataset(spec, seed=0):
    kind = spec["kind"]
    if kind == "two_moons":
        return data.make_two_moons(spec.get("n", 1000), spec.get("noise", 0.1), spec.get("seed", seed))
    if kind == "sphere":
        return data.make_sphere_quadrant(spec.get("n", 2000), spec.get("d", 2), spec.get("seed", seed))
    ds = data.load_csv(spec["path"], spec.get("label_column", "y"),
                       spec.get("categorical_columns", ()), spec.get("feature_columns"))
    if spec.get("balance", False):
        ds = data.balance_classes(ds, spec.get("seed", seed))
    return ds


def _arch_name(arch):
    return "-".join(str(h) for h in arch)


def _generator(cfg, train_set):
    cf = dict(cfg.cf)
    if cf.pop("method", "mccf") == "nearest_neighbor":
        return NearestNeighborGenerator(train_set.features)
    return MccfGenerator(CfConfig(**cf))


def run_trial(cfg, dataset, trial, models_dir=None):
    """One ensemble member; returns its result rows."""
    seed = cfg.seed_base + trial
    split = data.SplitSpec(cfg.split.get("train", 0.5), cfg.split.get("test", 0.25),
                           cfg.split.get("attack", 0.25), seed, cfg.split.get("attack_class_balance"))
    train_set, test_set, attack_pool = data.split(dataset, split)
    d = dataset.dim
    t_cfg = nn.TrainingConfig(**{**cfg.target_training, "shuffle_seed": seed})
    s_cfg = nn.TrainingConfig(**{**cfg.surrogate_training, "shuffle_seed": seed})
    target = nn.train(nn.init_network(nn.NetworkArchitecture(d, cfg.target_arch, seed)),
                      (train_set.features, train_set.labels.astype(float)), t_cfg)
    if models_dir:
        nn.save(target, os.path.join(models_dir, f"target_{trial}.json"))
    oracle = TargetOracle(target, _generator(cfg, train_set))
    uniform = metrics.uniform_reference(d, cfg.uniform_size, seed)
    name = cfg.dataset.get("name", cfg.dataset["kind"])
    rows = []
    for step, n in enumerate(cfg.query_sizes, start=1):
        rng = np.random.default_rng([seed, step])
        idx = rng.choice(len(attack_pool), n, replace=n > len(attack_pool))
        queries = attack_pool.features[idx]
        responses = oracle.batch_query(queries)
        clamped = attack_set_from_responses(queries, responses, clamp_mode=True)

        def record(attack, arch_name, model):
            rows.append({
                "dataset": name, "attack": attack, "surrogate_arch": arch_name, "n_queries": n,
                "trial": trial,
                "fidelity_test": metrics.fidelity(target, model, test_set.features, "test").fidelity,
                "fidelity_uniform": metrics.fidelity(target, model, uniform).fidelity,
            })

        for arch in cfg.surrogate_archs:
            s_arch = nn.NetworkArchitecture(d, arch, seed)
            for attack in cfg.attacks:
                if attack == "baseline":
                    model = train_surrogate(as_baseline(clamped), s_arch, s_cfg, LossKind.baseline())
                elif attack == "cca":
                    model = train_surrogate(clamped, s_arch, s_cfg, LossKind.cca(cfg.k))
                elif attack == "soft_bce":
                    model = train_surrogate(clamped, s_arch, s_cfg, LossKind.soft_bce())
                else:
                    continue
                record(attack, _arch_name(arch), model)
        if "polytope" in cfg.attacks:
            record("polytope", "halfspaces", polytope_from_responses(d, queries, responses))
    return rows


def _run_trial_safe(args):
    cfg, dataset, trial, models_dir = args
    try:
        return trial, run_trial(cfg, dataset, trial, models_dir), None
    except (CfxError, ArithmeticError, ValueError) as exc:
        return trial, [], f"{type(exc).__name__}: {exc}"


def _fmt(value):
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])
    return buf.getvalue()


def read_results(paths):
    """Parse result CSVs back into typed rows; raises :class:`FormatError` on bad rows."""
    rows = []
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
                raise FormatError(f"{path}: unexpected header {reader.fieldnames}")
            for lineno, rec in enumerate(reader, start=2):
                try:
                    rows.append({**rec, "n_queries": int(rec["n_queries"]), "trial": int(rec["trial"]),
                                 "fidelity_test": float(rec["fidelity_test"]),
                                 "fidelity_uniform": float(rec["fidelity_uniform"])})
                except (TypeError, ValueError) as exc:
                    raise FormatError(f"{path}:{lineno}: {exc}", [(lineno, str(exc))]) from None
    return rows


def summarize(rows):
    """Ensemble mean/std per (dataset, attack, surrogate_arch, n_queries)."""
    groups = {}
    for row in rows:
        key = (row["dataset"], row["attack"], row["surrogate_arch"], row["n_queries"])
        groups.setdefault(key, []).append(row)
    out = []
    for (ds, attack, arch, n), grp in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2], kv[0][3])):
        entry = {"dataset": ds, "attack": attack, "surrogate_arch": arch, "n_queries": n}
        for col in ("fidelity_test", "fidelity_uniform"):
            s = metrics.ensemble_summary(r[col] for r in grp)
            entry[col] = {"mean": s.mean, "std": s.std, "count": s.count}
        out.append(entry)
    return out


def run_experiment(cfg):
    """Run every trial and write ``results.csv``, ``summary.json`` and ``models/``."""
    out_dir = cfg.output_dir
    models_dir = os.path.join(out_dir, "models")
    os.makedirs(models_dir, exist_ok=True)
    dataset = load_dataset(cfg.dataset, cfg.seed_base)
    jobs = [(cfg, dataset, t, models_dir) for t in range(cfg.ensemble_size)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_trial_safe, jobs))
    else:
        results = [_run_trial_safe(j) for j in jobs]
    rows, failures = [], []
    for trial, trial_rows, err in sorted(results, key=lambda r: r[0]):
        if err:
            log.error("trial %d failed: %s", trial, err)
            failures.append({"trial": trial, "error": err})
        rows.extend(trial_rows)
    with open(os.path.join(out_dir, "results.csv"), "w", newline="", encoding="utf-8") as fh:
        fh.write(rows_to_csv(rows))
    summary = {"config": cfg.to_dict(), "failures": failures, "groups": summarize(rows)}
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return rows, summary
