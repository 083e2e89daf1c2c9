"""Command-line entry point: ``lstdq-lab <subcommand>`` or ``python3 -m lstdq_lab``.

Exit codes: 0 success, 2 configuration error, 3 a verify run had failures.
"""

import argparse
import json
import sys
from pathlib import Path

import jsonschema

from . import coverage as cov
from . import estimators as est
from . import experiments as exp
from . import fileio
from . import instances as inst
from .features import (SPAN_RTOL, AbstractionSpec, abstraction_features,
                       realizable_random_features, tabular_features)
from .mdp import Policy, StateActionDist, exact_return, occupancy
from .sampling import sample_dataset, substream_seed

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_PROB = {"type": "number", "minimum": 0}
_GAMMA = {"type": "number", "minimum": 0, "exclusiveMaximum": 1}
_SEED = {"type": "integer", "minimum": 0}
_ABSTRACTION = _obj({"state_to_block": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                     "num_blocks": {"type": "integer", "minimum": 1}},
                    ["state_to_block", "num_blocks"])

CONFIG_SCHEMA = _obj({
    "schema_version": {"const": 1},
    "seed": _SEED,
    "mdp": {"oneOf": [
        _obj({"source": {"const": "file"}, "path": {"type": "string"}}, ["source", "path"]),
        _obj({"source": {"const": "random"},
              "num_states": {"type": "integer", "minimum": 1},
              "num_actions": {"type": "integer", "minimum": 1},
              "gamma": _GAMMA,
              "reward_noise": {"type": "number", "minimum": 0},
              "r_max": {"type": "number", "exclusiveMinimum": 0},
              "concentration": {"type": "number", "exclusiveMinimum": 0}},
             ["source", "num_states", "num_actions", "gamma"]),
        _obj({"source": {"const": "alternating_chain"}, "gamma": _GAMMA}, ["source", "gamma"]),
    ]},
    "policy": {"oneOf": [
        _obj({"source": {"enum": ["uniform", "random"]}}, ["source"]),
        _obj({"source": {"const": "file"}, "path": {"type": "string"}}, ["source", "path"]),
        _obj({"source": {"const": "inline"},
              "action_probs": {"type": "array", "items": {"type": "array", "items": _PROB}}},
             ["source", "action_probs"]),
    ]},
    "features": {"oneOf": [
        _obj({"kind": {"const": "tabular"}}, ["kind"]),
        _obj({"kind": {"const": "abstraction"}, "abstraction": _ABSTRACTION}, ["kind", "abstraction"]),
        _obj({"kind": {"const": "realizable_random"}, "dim": {"type": "integer", "minimum": 2},
              "bound": {"type": "number", "exclusiveMinimum": 0}}, ["kind", "dim"]),
        _obj({"kind": {"const": "file"}, "path": {"type": "string"}}, ["kind", "path"]),
    ]},
    "data_distribution": {"oneOf": [
        _obj({"kind": {"enum": ["uniform", "onpolicy"]}}, ["kind"]),
        _obj({"kind": {"const": "random"}, "floor": {"type": "number", "minimum": 0, "maximum": 1}},
             ["kind"]),
        _obj({"kind": {"const": "inline"}, "probs": {"type": "array", "items": _PROB}},
             ["kind", "probs"]),
        _obj({"kind": {"const": "file"}, "path": {"type": "string"}}, ["kind", "path"]),
    ]},
    "dataset": _obj({"n": {"type": "integer", "minimum": 1},
                     "next_feature_mode": {"enum": [est.SAMPLED, est.EXPECTED]}}, ["n"]),
    "coverage": _obj({"delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                      "abstraction": _ABSTRACTION}),
    "sweep": _obj({"n_grid": {"type": "array", "items": {"type": "integer", "minimum": 1},
                              "minItems": 1},
                   "num_seeds": {"type": "integer", "minimum": 1},
                   "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                   "estimator": {"enum": [est.INVERSE, est.LOSS_MIN]},
                   "b_theta": {"type": "number", "exclusiveMinimum": 0},
                   "tolerance": {"type": "number", "exclusiveMinimum": 0},
                   "next_feature_mode": {"enum": [est.SAMPLED, est.EXPECTED]},
                   "realizability_rtol": {"type": "number", "exclusiveMinimum": 0}},
                  ["n_grid"]),
}, ["schema_version", "seed", "mdp"])


class ConfigError(Exception):
    """Raised for any problem that should end the run with exit code 2."""


def load_config(path):
    """Read, parse and validate a config file.  Relative paths resolve against it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"{path}: cannot read config ({err.strerror})") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from None
    errors = sorted(jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(cfg),
                    key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{path}: field {where}: {_describe(err)}")
    cfg["_base"] = path.parent
    return cfg


def _describe(err):
    # oneOf failures are reported through the most specific sub-error.
    if err.validator == "oneOf" and err.context:
        best = jsonschema.exceptions.best_match(err.context)
        return best.message
    return err.message


def _resolve(cfg, rel):
    p = Path(rel)
    return p if p.is_absolute() else cfg["_base"] / p


def _read_doc(cfg, rel, loader):
    path = _resolve(cfg, rel)
    try:
        return loader(fileio.read_json(path))
    except OSError as err:
        raise ConfigError(f"{path}: cannot read ({err.strerror})") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from None


def build_instance(cfg):
    """MDP, policy, features and data distribution described by a config.

    Every random component draws from the ``instance:<part>`` substream of
    the top-level seed.
    """
    seed = cfg["seed"]
    sub = lambda part: substream_seed(seed, f"instance:{part}")  # noqa: E731
    m = cfg["mdp"]
    if m["source"] == "file":
        mdp = _read_doc(cfg, m["path"], fileio.mdp_from_dict)
    elif m["source"] == "random":
        mdp = inst.random_mdp(m["num_states"], m["num_actions"], m["gamma"], sub("mdp"),
                              reward_noise=m.get("reward_noise", 0.0), r_max=m.get("r_max", 1.0),
                              concentration=m.get("concentration", 1.0))
    else:
        mdp = inst.alternating_chain(m["gamma"])
    S, A = mdp.num_states, mdp.num_actions

    p = cfg.get("policy", {"source": "uniform"})
    if p["source"] == "uniform":
        pi = Policy.uniform(S, A)
    elif p["source"] == "random":
        pi = inst.random_policy(S, A, sub("policy"))
    elif p["source"] == "file":
        pi = _read_doc(cfg, p["path"], fileio.policy_from_dict)
    else:
        pi = Policy(p["action_probs"])

    f = cfg.get("features", {"kind": "tabular"})
    spec = None
    if f["kind"] == "tabular":
        fmap = tabular_features(mdp)
    elif f["kind"] == "abstraction":
        spec = AbstractionSpec(f["abstraction"]["state_to_block"], f["abstraction"]["num_blocks"])
        fmap = abstraction_features(mdp, spec)
    elif f["kind"] == "realizable_random":
        fmap = realizable_random_features(mdp, pi, f["dim"], sub("features"), f.get("bound", 1.0))
    else:
        fmap = _read_doc(cfg, f["path"], fileio.features_from_dict)

    dd = cfg.get("data_distribution", {"kind": "uniform"})
    if dd["kind"] == "uniform":
        mu_d = StateActionDist.uniform(S * A)
    elif dd["kind"] == "onpolicy":
        mu_d = occupancy(mdp, pi)
    elif dd["kind"] == "random":
        mu_d = inst.random_mu_d(S * A, sub("mu_d"), dd.get("floor", 0.0))
    elif dd["kind"] == "inline":
        mu_d = StateActionDist(dd["probs"])
    else:
        mu_d = _read_doc(cfg, dd["path"], fileio.dist_from_dict)

    cov_spec = cfg.get("coverage", {}).get("abstraction")
    if cov_spec is not None:
        spec = AbstractionSpec(cov_spec["state_to_block"], cov_spec["num_blocks"])
    return inst.Instance(mdp, pi, mu_d, fmap, spec, label="config")


def _dataset_for(cfg, x):
    ds = cfg.get("dataset")
    if ds is None:
        raise ConfigError("config has no 'dataset' section")
    return sample_dataset(x.mdp, x.pi, x.mu_d, ds["n"], substream_seed(cfg["seed"], "dataset"))


def _empirical(cfg, x, data):
    mode = cfg.get("dataset", {}).get("next_feature_mode", est.SAMPLED)
    return est.empirical_moments(data, x.fmap, x.mdp.gamma, x.pi, mode,
                                 initial_dist=x.mdp.initial_dist)


# --- subcommands -------------------------------------------------------------

def cmd_generate(args):
    cfg = load_config(args.config)
    x = build_instance(cfg)
    out = Path(args.out)
    fileio.write_json(out / "mdp.json", fileio.mdp_to_dict(x.mdp))
    fileio.write_json(out / "policy.json", fileio.policy_to_dict(x.pi))
    fileio.write_json(out / "features.json", fileio.features_to_dict(x.fmap))
    fileio.write_json(out / "mu_d.json", fileio.dist_to_dict(x.mu_d))
    written = ["mdp.json", "policy.json", "features.json", "mu_d.json"]
    if x.spec is not None:
        fileio.write_json(out / "abstraction.json", fileio.abstraction_to_dict(x.spec))
        written.append("abstraction.json")
    if "dataset" in cfg:
        fileio.save_dataset(_dataset_for(cfg, x), out / "dataset.csv")
        written += ["dataset.csv", "dataset.meta.json"]
    for name in written:
        print(out / name)
    return EXIT_OK


def cmd_coverage(args):
    cfg = load_config(args.config)
    x = build_instance(cfg)
    empirical = _empirical(cfg, x, _dataset_for(cfg, x)) if "dataset" in cfg else None
    delta = cfg.get("coverage", {}).get("delta", 0.05)
    report = cov.coverage_report(x.mdp, x.pi, x.mu_d, x.fmap, empirical, x.spec, delta)
    rows = [(0, report)]
    if args.out:
        fileio.write_coverage(args.out, rows)
    else:
        sys.stdout.write(fileio.csv_text(fileio.coverage_columns(), fileio.coverage_rows(rows)))
    return EXIT_OK


def cmd_estimate(args):
    cfg = load_config(args.config)
    x = build_instance(cfg)
    if args.dataset:
        try:
            data = fileio.load_dataset(args.dataset)
        except OSError as err:
            raise ConfigError(f"{args.dataset}: cannot read dataset ({err.strerror})") from None
        data.validate_for(x.mdp)
    else:
        data = _dataset_for(cfg, x)
    m = _empirical(cfg, x, data)
    if args.solver == est.LOSS_MIN:
        if args.b_theta is None:
            raise ConfigError("--solver loss_min needs --b-theta")
        sol = est.lossmin_solve(m, est.LossMinConfig(args.b_theta))
    else:
        sol = est.lstdq_solve(m)
    j_hat = float(m.phi0 @ sol.theta) if sol.theta is not None else float("nan")
    out = {
        "n": data.n,
        "j_hat": j_hat,
        "c_hat": cov.cvrg_empirical(m),
        "j_true": exact_return(x.mdp, x.pi),
        "invertible": sol.invertible,
        "min_singular_a": sol.min_singular_a,
    }
    for k, v in out.items():
        print(f"{k} {fileio.fmt_float(v)}")
    if args.out:
        fileio.write_json(args.out, fileio.solution_to_dict(sol))
    return EXIT_OK


def cmd_sweep(args):
    cfg = load_config(args.config)
    if "sweep" not in cfg:
        raise ConfigError("config has no 'sweep' section")
    x = build_instance(cfg)
    s = cfg["sweep"]
    lossmin = None
    if s.get("estimator", est.INVERSE) == est.LOSS_MIN:
        if "b_theta" not in s:
            raise ConfigError("field sweep/b_theta: required for the loss_min estimator")
        lossmin = est.LossMinConfig(s["b_theta"], s.get("tolerance", 1e-12))
    sc = exp.SweepConfig(x.mdp, x.pi, x.fmap, x.mu_d, s["n_grid"],
                         num_seeds=s.get("num_seeds", 100), seed=cfg["seed"],
                         delta=s.get("delta", 0.05), estimator=s.get("estimator", est.INVERSE),
                         next_feature_mode=s.get("next_feature_mode", est.SAMPLED),
                         lossmin=lossmin,
                         realizability_rtol=s.get("realizability_rtol", SPAN_RTOL))
    result = exp.run_sweep(sc)
    fileio.write_sweep(args.out, result)
    print(f"slope {fileio.fmt_float(result.slope)}")
    print(f"burn_in_n0 {fileio.fmt_float(result.burn_in_n0)}")
    return EXIT_OK


def cmd_verify(args):
    rows, passed = exp.run_suite(args.suite, args.seeds, args.seed)
    text = fileio.csv_text(exp.AUDIT_COLUMNS, fileio.audit_rows(rows))
    if args.out:
        fileio.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    failures = sum(not r.passed for r in rows)
    print(f"{len(rows) - failures} passed, {failures} failed", file=sys.stderr)
    return EXIT_OK if passed else EXIT_VERIFY


def cmd_counterexample(args):
    try:
        m = exp.counterexample_instance(args.epsilon, args.gamma)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    lhs, rhs = cov.perdomo_comparison(m)
    # Shown to 12 significant digits; the SVD leaves ~1e-13 relative noise.
    for key, val in (("lhs", lhs), ("rhs", rhs), ("ratio", rhs / lhs),
                     ("c_phi", cov.cvrg_population(m))):
        print(f"{key} {float(format(val, '.12g'))!r}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="lstdq-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write MDP, policy, features, mu_d and dataset files")
    g.add_argument("config")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("coverage", help="coverage report as one CSV row")
    c.add_argument("config")
    c.add_argument("--out", help="CSV path (default: stdout)")
    c.set_defaults(func=cmd_coverage)

    e = sub.add_parser("estimate", help="run LSTDQ on a dataset")
    e.add_argument("config")
    e.add_argument("--dataset", help="dataset CSV (default: sample from the config)")
    e.add_argument("--solver", choices=[est.INVERSE, est.LOSS_MIN], default=est.INVERSE)
    e.add_argument("--b-theta", type=float, dest="b_theta")
    e.add_argument("--out", help="write the solution as JSON")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("sweep", help="Monte-Carlo rate sweep")
    s.add_argument("config")
    s.add_argument("--out", required=True, help="directory for cells.csv and aggregate.csv")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="audit identities on a seeded instance suite")
    v.add_argument("--suite", required=True, choices=sorted(exp.SUITES))
    v.add_argument("--seeds", type=int, default=20, help="number of instances")
    v.add_argument("--seed", type=int, default=0, help="root seed")
    v.add_argument("--out", help="audit CSV path (default: stdout)")
    v.set_defaults(func=cmd_verify)

    x = sub.add_parser("counterexample", help="sigma_min bound counterexample report")
    x.add_argument("--epsilon", type=float, required=True)
    x.add_argument("--gamma", type=float, required=True)
    x.set_defaults(func=cmd_counterexample)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as stop:
        # argparse exits with 2 on usage errors, which is our config code too.
        return int(stop.code or 0)
    try:
        return args.func(args)
    except (ConfigError, exp.ConfigurationError, fileio.FormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as err:
        # Domain validation of config-supplied values (bad probabilities, shapes).
        print(f"error: invalid configuration: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
