"""Command-line entry point: ``cfx <subcommand> [--config FILE] [flags]``.

Every subcommand reads defaults from the optional JSON config (top-level keys
shared by all subcommands, plus a section named after the subcommand) and then
applies explicit flags, which always win.  Exit status is 0 on success, 1 for
usage or configuration errors and 2 for runtime errors.
"""

import argparse
import json
import logging
import sys

import numpy as np

from cfx import data, metrics, nn, theory
from cfx.attacks import (HalfspaceModel, as_baseline, attack_set_from_responses, build_attack_set,
                         polytope_from_responses, train_surrogate)
from cfx.counterfactuals import AnalyticGenerator, CfConfig, MccfGenerator
from cfx.errors import CfxError, ConfigError, FormatError
from cfx.experiment import (load_dataset, parse_config, read_results, run_experiment,
                            summarize)
from cfx.losses import LossKind
from cfx.oracle import TargetOracle
from cfx.targets import LinearTarget, SphereTarget

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
SUBCOMMANDS = ("run", "gen-data", "train-target", "attack", "eval", "theorem1", "theorem2",
               "clamp-diag", "lipschitz", "report")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _emit(payload, out=None):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def load_model(path):
    """A saved network or halfspace model, detected from its JSON keys."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from None
    if isinstance(payload, dict) and "halfspaces" in payload:
        return HalfspaceModel.from_dict(payload)
    return nn.deserialize(raw)


def _dataset_spec(args):
    spec = dict(args.config_data.get("dataset", {}))
    for key in ("kind", "n", "noise", "d", "path", "label_column", "seed"):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            spec[key] = value
    spec.setdefault("kind", "two_moons")
    return spec


def _training(args, section, seed):
    cfg = dict(args.config_data.get(section, {}))
    if getattr(args, "epochs", None) is not None:
        cfg["epochs"] = args.epochs
    cfg["shuffle_seed"] = seed
    try:
        return nn.TrainingConfig(**cfg)
    except TypeError as exc:
        raise ConfigError(section, str(exc)) from None


def cmd_run(args):
    payload = dict(args.config_data)
    for name in SUBCOMMANDS:
        payload.pop(name, None)
        payload.pop(name.replace("-", "_"), None)
    for key in ("output_dir", "ensemble_size", "workers", "seed_base", "k"):
        value = getattr(args, key)
        if value is not None:
            payload[key] = value
    cfg = parse_config(payload)
    rows, summary = run_experiment(cfg)
    print(f"wrote {len(rows)} rows to {cfg.output_dir}/results.csv "
          f"({len(summary['failures'])} failed trials)")
    return EXIT_OK


def cmd_gen_data(args):
    ds = load_dataset(_dataset_spec(args), args.seed or 0)
    ds.to_csv(args.out)
    c0, c1 = ds.class_counts()
    print(f"wrote {len(ds)} rows ({c0} class 0, {c1} class 1) to {args.out}")
    return EXIT_OK


def cmd_train_target(args):
    ds = data.load_csv(args.data, args.label_column or "y")
    arch = nn.NetworkArchitecture(ds.dim, tuple(args.arch), args.seed)
    net = nn.train(nn.init_network(arch), (ds.features, ds.labels.astype(float)),
                   _training(args, "target_training", args.seed))
    nn.save(net, args.out)
    acc = float(np.mean(net.predict_class(ds.features) == ds.labels))
    print(f"saved target to {args.out} (training accuracy {acc:.4f})")
    return EXIT_OK


def cmd_attack(args):
    target = load_model(args.target)
    pool = data.load_csv(args.data, args.label_column or "y").features
    rng = np.random.default_rng(args.seed)
    queries = pool[rng.choice(len(pool), args.n, replace=args.n > len(pool))]
    cf = {k: v for k, v in args.config_data.get("cf", {}).items() if k != "method"}
    try:
        cf_cfg = CfConfig(**cf)
    except TypeError as exc:
        raise ConfigError("cf", str(exc)) from None
    oracle = TargetOracle(target, MccfGenerator(cf_cfg))
    responses = oracle.batch_query(queries)
    if args.kind == "polytope":
        model = polytope_from_responses(queries.shape[1], queries, responses)
        model.save(args.out)
        print(f"saved polytope with {len(model)} halfspaces to {args.out}")
        return EXIT_OK
    attack_set = attack_set_from_responses(queries, responses, clamp_mode=True)
    loss = LossKind.cca(args.k) if args.kind == "cca" else LossKind.baseline()
    if args.kind == "baseline":
        attack_set = as_baseline(attack_set)
    arch = nn.NetworkArchitecture(queries.shape[1], tuple(args.arch), args.seed)
    model = train_surrogate(attack_set, arch, _training(args, "surrogate_training", args.seed), loss)
    nn.save(model, args.out)
    n_cf = sum(p.is_counterfactual for p in attack_set)
    print(f"saved {args.kind} surrogate to {args.out} ({len(queries)} queries, {n_cf} counterfactuals)")
    return EXIT_OK


def cmd_eval(args):
    target, surrogate = load_model(args.target), load_model(args.surrogate)
    d = target.architecture.input_dim if isinstance(target, nn.DenseNetwork) else target.input_dim
    uniform = metrics.uniform_reference(d, args.uniform_size, args.seed)
    out = {"fidelity_uniform": metrics.fidelity(target, surrogate, uniform).fidelity}
    if args.data:
        test = data.load_csv(args.data, args.label_column or "y").features
        out["fidelity_test"] = metrics.fidelity(target, surrogate, test, "test").fidelity
    if args.bins and isinstance(surrogate, nn.DenseNetwork):
        out["histogram"] = metrics.prediction_histogram(surrogate, uniform, args.bins).tolist()
    _emit(out, args.out)
    return EXIT_OK


def cmd_theorem1(args):
    print(f"{'d':>3} {'slope':>9} {'required':>9} {'pass':>5}")
    rows = []
    for d in args.dims:
        fit = theory.theorem1_convergence(d, args.n, args.trials, args.mc_samples, args.seed)
        required = fit.theoretical_slope + 0.15
        rows.append({"d": d, "slope": fit.slope, "theoretical": fit.theoretical_slope,
                     "mean_errors": fit.mean_errors.tolist()})
        print(f"{d:>3} {fit.slope:>9.4f} {required:>9.4f} {str(fit.slope <= required):>5}")
    if args.out:
        _emit({"ns": list(args.n), "rows": rows}, args.out)
    return EXIT_OK


def cmd_theorem2(args):
    if args.target == "sphere":
        target = SphereTarget.quadrant(2, steepness=5.0)
    else:
        target = LinearTarget(np.array([1.0, 0.0]), -0.5)
    reports = theory.coverage_curve(target, AnalyticGenerator(), theory.GridSpec(args.epsilon, 2),
                                    args.n, args.trials, args.seed)
    print(f"{'n':>5} {'k_eps':>5} {'v_star':>8} {'bound':>8} {'empirical':>9} {'se':>7}")
    for r in reports:
        print(f"{r.n:>5} {r.k_eps:>5} {r.v_star:>8.4f} {r.bound:>8.4f} "
              f"{r.empirical_success:>9.4f} {r.std_error:>7.4f}")
    if args.out:
        _emit([{**r.row(), "std_error": r.std_error} for r in reports], args.out)
    return EXIT_OK


def cmd_clamp_diag(args):
    target, surrogate = load_model(args.target), load_model(args.surrogate)
    pool = data.load_csv(args.data, args.label_column or "y").features
    attack_set = build_attack_set(TargetOracle(target, MccfGenerator()), pool, clamp_mode=True)
    cf_points = np.array([p.x for p in attack_set if p.is_counterfactual])
    if len(cf_points) == 0:
        raise CfxError("no counterfactuals were produced for the supplied queries")
    boundary = theory.sample_boundary_points(target, args.samples, args.seed)
    diag = theory.clamp_bound_diagnostic(target, surrogate, cf_points, boundary)
    _emit({**diag.summary(), "holds": diag.holds, "pointwise_holds": diag.pointwise_holds}, args.out)
    return EXIT_OK


def cmd_lipschitz(args):
    model = load_model(args.model)
    norms = [nn.spectral_norm(w) for w in model.weights]
    _emit({"layer_spectral_norms": norms, "logit_lipschitz": nn.lipschitz_upper_bound(model),
           "probability_lipschitz": theory.SIGMOID_SLOPE * nn.lipschitz_upper_bound(model)}, args.out)
    return EXIT_OK


def cmd_report(args):
    rows = read_results(args.inputs)
    _emit({"rows": len(rows), "groups": summarize(rows)}, args.out)
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="cfx", description="Model extraction from counterfactual explanations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="SUBCOMMAND")
    sub.required = True

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.set_defaults(func=func)
        return p

    p = add("run", cmd_run, "run a seeded ensemble experiment")
    p.add_argument("--output-dir")
    p.add_argument("--ensemble-size", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed-base", type=int)
    p.add_argument("--k", type=float)

    p = add("gen-data", cmd_gen_data, "synthesise or ingest a dataset and write a normalised CSV")
    p.add_argument("--kind", choices=("two_moons", "sphere", "csv"))
    p.add_argument("--n", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--d", type=int)
    p.add_argument("--path")
    p.add_argument("--label-column")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("train-target", cmd_train_target, "train a target network on a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--label-column")
    p.add_argument("--arch", type=_ints, default=[20, 10])
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("attack", cmd_attack, "extract a surrogate from a saved target")
    p.add_argument("--target", required=True)
    p.add_argument("--data", required=True, help="CSV whose rows form the query pool")
    p.add_argument("--label-column")
    p.add_argument("--kind", choices=("baseline", "cca", "polytope"), default="cca")
    p.add_argument("--k", type=float, default=0.5)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--arch", type=_ints, default=[20, 10])
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, "fidelity of a surrogate to a target")
    p.add_argument("--target", required=True)
    p.add_argument("--surrogate", required=True)
    p.add_argument("--data", help="optional test CSV")
    p.add_argument("--label-column")
    p.add_argument("--uniform-size", type=int, default=metrics.DEFAULT_UNIFORM_SIZE)
    p.add_argument("--bins", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = add("theorem1", cmd_theorem1, "polytope error decay on the sphere target")
    p.add_argument("--dims", type=_ints, default=[2, 3, 4])
    p.add_argument("--n", type=_ints, default=[25, 50, 100, 200, 400])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = add("theorem2", cmd_theorem2, "coverage bound against empirical coverage")
    p.add_argument("--target", choices=("linear", "sphere"), default="linear")
    p.add_argument("--epsilon", type=float, default=0.25)
    p.add_argument("--n", type=_ints, default=[10, 50, 200])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = add("clamp-diag", cmd_clamp_diag, "boundary deviation against its Lipschitz bound")
    p.add_argument("--target", required=True)
    p.add_argument("--surrogate", required=True)
    p.add_argument("--data", required=True, help="CSV of queries used to obtain counterfactuals")
    p.add_argument("--label-column")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = add("lipschitz", cmd_lipschitz, "spectral-norm Lipschitz bound of a network")
    p.add_argument("--model", required=True)
    p.add_argument("--out")

    p = add("report", cmd_report, "aggregate results CSVs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out")
    return parser


def _apply_config(parser, argv):
    """Two-pass parse so config values act as defaults beneath explicit flags."""
    args = parser.parse_args(argv)
    config = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(args.config, f"invalid JSON: {exc}") from None
        if not isinstance(config, dict):
            raise ConfigError(args.config, "config must be a JSON object")
        section = config.get(args.command, config.get(args.command.replace("-", "_"), {}))
        if not isinstance(section, dict):
            raise ConfigError(args.command, "subcommand section must be a JSON object")
        defaults = {}
        for key, value in section.items():
            dest = key.replace("-", "_")
            if not hasattr(args, dest) or dest in ("func", "command"):
                raise ConfigError(f"{args.command}.{key}", "unknown option")
            defaults[dest] = value
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    args.config_data = config
    return args


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except ConfigError as exc:
        print(f"cfx: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cfx: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"cfx: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CfxError, OSError, ValueError, TypeError) as exc:
        print(f"cfx: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
