"""Command-line entry point: generate | train | eval | graph | report.

Every run is deterministic under its seed and writes its fully resolved
configuration next to the outputs. Exit codes: 2 bad arguments, 3 I/O
failure, 4 non-finite training loss, 5 environment/checkpoint mismatch.
"""

import argparse
import hashlib
import json
import sys

import numpy as np

from . import __version__, config as cfg
from .evalkit import evaluate_model, minimal_variable_check, triplet_eval
from .graphlearn import GraphLearner
from .models import (CitrisNF, CitrisVAE, IVAEStar, StateAutoencoder,
                     TrainingError, load_checkpoint)
from .scmsim import (generate_dataset, load, make_env, parse_policy,
                     sample_independent_factors)

EXIT_BAD_ARGS = 2
EXIT_IO = 3
EXIT_NONFINITE = 4
EXIT_MISMATCH = 5


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _file_fingerprint(path):
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    except OSError as err:
        raise CliError(f"cannot read {path}: {err}", EXIT_IO)
    return h.hexdigest()


def _write_json(path, payload):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as err:
        raise CliError(f"cannot write {path}: {err}", EXIT_IO)


def cmd_generate(args):
    try:
        env = make_env(args.env)
    except ValueError as err:
        raise CliError(str(err), EXIT_BAD_ARGS)
    if args.policy == "default":
        policy = env.default_policy()
    else:
        try:
            policy = parse_policy(args.policy)
        except ValueError as err:
            raise CliError(str(err), EXIT_BAD_ARGS)
    if args.policy == "independent-eval":
        ds = sample_independent_factors(env, n=args.steps, seed=args.seed)
    else:
        try:
            ds = generate_dataset(env, policy, steps=args.steps, seed=args.seed)
        except ValueError as err:
            raise CliError(str(err), EXIT_BAD_ARGS)
    try:
        ds.save(args.out)
    except OSError as err:
        raise CliError(f"cannot write {args.out}: {err}", EXIT_IO)
    sections = {"run": {"command": "generate", "env": args.env,
                        "steps": args.steps, "seed": args.seed,
                        "policy": args.policy, "out": args.out,
                        "version": __version__}}
    chash = cfg.write_resolved(args.out + ".config", sections)
    rates = ds.intervention_rates()
    print(f"wrote {args.out}: env={env.name} K={ds.n_targets} "
          f"state_dim={ds.states.shape[1]} obs_dim={ds.obs_dim} T={ds.n_steps}")
    print(f"intervention rates: {np.round(rates, 4).tolist()}")
    print(f"config hash: {chash}")
    return 0


_MODEL_CLASSES = {"vae": CitrisVAE, "ivae-star": IVAEStar, "ae": StateAutoencoder,
                  "nf": CitrisNF}


def cmd_train(args):
    if args.model not in _MODEL_CLASSES:
        raise CliError(f"unknown model {args.model!r}", EXIT_BAD_ARGS)
    try:
        ds = load(args.data)
    except (OSError, ValueError) as err:
        raise CliError(f"cannot load dataset {args.data}: {err}", EXIT_IO)
    try:
        params = cfg.model_config(args.model, env_name=ds.env_name,
                                  config_file=args.config,
                                  overrides={"seed": args.seed}
                                  if args.seed is not None else None)
    except cfg.ConfigError as err:
        raise CliError(str(err), EXIT_BAD_ARGS)

    if args.model == "nf":
        if not args.ae_ckpt:
            raise CliError("--model nf requires --ae-ckpt "
                           "(pretrained autoencoder)", EXIT_BAD_ARGS)
        ae = load_checkpoint(args.ae_ckpt)
        if not isinstance(ae, StateAutoencoder):
            raise CliError(f"{args.ae_ckpt} is not an autoencoder checkpoint",
                           EXIT_MISMATCH)
        if ae.obs_dim_ != ds.obs_dim:
            raise CliError("autoencoder obs dim does not match dataset",
                           EXIT_MISMATCH)
        model = CitrisNF(autoencoder=ae, **params)
    else:
        model = _MODEL_CLASSES[args.model](**params)

    log_path = args.ckpt_out + ".log.jsonl"
    try:
        log_fh = open(log_path, "w", encoding="utf-8")
    except OSError as err:
        raise CliError(f"cannot write {log_path}: {err}", EXIT_IO)

    def log_fn(entry):
        log_fh.write(json.dumps(entry, sort_keys=True) + "\n")

    try:
        if args.model == "ae":
            model.fit(ds.observations, log_fn=log_fn)
        else:
            model.fit(ds.observations, ds.interventions, log_fn=log_fn)
    except TrainingError as err:
        log_fh.close()
        raise CliError(str(err), EXIT_NONFINITE)
    finally:
        if not log_fh.closed:
            log_fh.close()

    extra = {"env_id": ds.env_id, "env_name": ds.env_name,
             "dataset_fingerprint": ds.fingerprint(),
             "dataset_obs_dim": ds.obs_dim}
    from .models.checkpoint import save_checkpoint
    try:
        save_checkpoint(args.ckpt_out, model, extra_meta=extra)
    except OSError as err:
        raise CliError(f"cannot write {args.ckpt_out}: {err}", EXIT_IO)
    sections = {"run": {"command": "train", "model": args.model,
                        "data": args.data, "ckpt_out": args.ckpt_out,
                        "version": __version__},
                "model": {"kind": args.model, **params}}
    chash = cfg.write_resolved(args.ckpt_out + ".config", sections)
    final = model.history_[-1]["loss"] if model.history_ else float("nan")
    print(f"wrote {args.ckpt_out}: model={args.model} "
          f"steps={len(model.history_)} final_loss={final:.4f}")
    print(f"training log: {log_path}")
    print(f"config hash: {chash}")
    return 0


def _load_model_for_eval(ckpt_path, dataset):
    model = load_checkpoint(ckpt_path)
    meta_env = None
    from .models.checkpoint import checkpoint_meta
    _, config, _ = checkpoint_meta(ckpt_path)
    meta_env = config.get("meta", {}).get("env_id")
    if meta_env is not None and meta_env != dataset.env_id:
        raise CliError(
            f"checkpoint trained on env {meta_env}, dataset is env "
            f"{dataset.env_id}", EXIT_MISMATCH)
    return model


def cmd_eval(args):
    try:
        indep = load(args.indep_data)
    except (OSError, ValueError) as err:
        raise CliError(f"cannot load dataset {args.indep_data}: {err}", EXIT_IO)
    model = _load_model_for_eval(args.ckpt, indep)
    if isinstance(model, StateAutoencoder):
        raise CliError("autoencoder checkpoints are pretraining artifacts; "
                       "evaluate a vae/nf/ivae-star checkpoint", EXIT_MISMATCH)
    try:
        options = cfg.eval_config(config_file=args.config)
    except cfg.ConfigError as err:
        raise CliError(str(err), EXIT_BAD_ARGS)
    probe_kw = {"epochs": options["probe_epochs"],
                "batch_size": options["probe_batch_size"]}
    seed = options["seed"]

    reports, assignment_info = evaluate_model(model, indep, seed=seed,
                                              **probe_kw)
    payload = {
        "version": __version__,
        "seed": seed,
        "checkpoint": args.ckpt,
        "checkpoint_fingerprint": _file_fingerprint(args.ckpt),
        "independent_dataset_fingerprint": indep.fingerprint(),
        "r2": reports["r2"].to_dict(),
        "spearman": reports["spearman"].to_dict(),
        "assignment": assignment_info,
    }

    if args.triplet_data:
        try:
            trip_ds = load(args.triplet_data)
        except (OSError, ValueError) as err:
            raise CliError(f"cannot load dataset {args.triplet_data}: {err}",
                           EXIT_IO)
        if trip_ds.env_id != indep.env_id:
            raise CliError("triplet dataset environment mismatch",
                           EXIT_MISMATCH)
        report = triplet_eval(model, trip_ds, n_triplets=options["n_triplets"],
                              seed=seed)
        payload["triplets"] = report.to_dict()
        payload["triplet_dataset_fingerprint"] = trip_ds.fingerprint()

    if indep.env_name == "ball-in-boxes":
        check, _, _ = minimal_variable_check(model, indep, seed=seed,
                                             **probe_kw)
        payload["minimal_variable_check"] = check

    sections = {"run": {"command": "eval", "ckpt": args.ckpt,
                        "indep_data": args.indep_data,
                        "triplet_data": args.triplet_data or "",
                        "report": args.report, "version": __version__},
                "eval": options}
    payload["config_hash"] = cfg.write_resolved(args.report + ".config",
                                                sections)
    _write_json(args.report, payload)
    r2 = reports["r2"]
    print(f"wrote {args.report}: R2 diag={r2.diag:.3f} sep={r2.sep:.3f}; "
          f"Spearman diag={reports['spearman'].diag:.3f} "
          f"sep={reports['spearman'].sep:.3f}")
    return 0


def cmd_graph(args):
    try:
        ds = load(args.data)
    except (OSError, ValueError) as err:
        raise CliError(f"cannot load dataset {args.data}: {err}", EXIT_IO)
    try:
        options = cfg.graph_config(config_file=args.config)
    except cfg.ConfigError as err:
        raise CliError(str(err), EXIT_BAD_ARGS)

    env = ds.environment()
    if args.oracle_latents:
        Z = ds.states
        assignment = np.zeros(ds.states.shape[1], dtype=int)
        col = 0
        for i, f in enumerate(env.factors):
            block = i + 1 if i < ds.n_targets else 0
            assignment[col:col + f.dim] = block
            col += f.dim
        source = "oracle-latents"
    else:
        if not args.ckpt:
            raise CliError("provide --ckpt or --oracle-latents", EXIT_BAD_ARGS)
        model = _load_model_for_eval(args.ckpt, ds)
        hard = model.hard_assignment()
        if hard is None:
            raise CliError("checkpoint has no latent-to-block assignment; "
                           "graph extraction needs one", EXIT_MISMATCH)
        Z = model.transform(ds.observations)
        assignment = hard
        source = args.ckpt

    seed = options.pop("seed")
    learner = GraphLearner(seed=seed, **{k: v for k, v in options.items()})
    learner.fit(Z, ds.interventions, assignment)
    reference = env.reference_graph
    result = learner.result(reference=reference)
    payload = {
        "version": __version__,
        "seed": seed,
        "latents": source,
        "dataset_fingerprint": ds.fingerprint(),
        "blocks": [f"block{b}" for b in range(ds.n_targets + 1)],
        "factors": [f.name for f in env.factors],
        **result,
    }
    sections = {"run": {"command": "graph", "data": args.data,
                        "ckpt": args.ckpt or "", "out": args.out,
                        "oracle_latents": args.oracle_latents,
                        "version": __version__},
                "graph": {**options, "seed": seed}}
    payload["config_hash"] = cfg.write_resolved(args.out + ".config", sections)
    _write_json(args.out, payload)
    msg = f"wrote {args.out}"
    if "shd" in payload:
        msg += f": SHD vs reference = {payload['shd']}"
    print(msg)
    return 0


def cmd_report(args):
    try:
        with open(args.report, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as err:
        raise CliError(f"cannot read {args.report}: {err}", EXIT_IO)
    except json.JSONDecodeError as err:
        raise CliError(f"not a JSON report: {err}", EXIT_BAD_ARGS)
    print(f"report: {args.report} (version {payload.get('version', '?')})")
    for key in ("r2", "spearman"):
        if key in payload:
            rep = payload[key]
            print(f"\n{key} matrix (rows=blocks, cols={rep['col_labels']}):")
            for label, row in zip(rep["row_labels"], rep["matrix"]):
                cells = " ".join("  n/a " if v is None else f"{v:6.3f}"
                                 for v in row)
                print(f"  {label:>8} {cells}")
            print(f"  diag={rep['diag']:.3f} sep={rep['sep']:.3f} "
                  f"block0_max_unmatched={rep['block0_max_unmatched']:.3f}")
    if "triplets" in payload:
        trip = payload["triplets"]
        pf = {k: round(v, 3) for k, v in trip["per_factor"].items()}
        print(f"\ntriplets (n={trip['n_triplets']}): mean={trip['mean']:.3f} "
              f"per-factor={pf}")
    if "minimal_variable_check" in payload:
        mv = payload["minimal_variable_check"]
        print(f"\nminimal-variable check: passed={mv['passed']} "
              f"(diag={mv['r2_diag']:.3f}, sep={mv['r2_sep']:.3f}, "
              f"b->block{mv['ball_b_block']}, xin->block{mv['ball_xin_block']})")
    if "shd" in payload:
        print(f"\ngraph: SHD={payload['shd']}")
        print(f"edge probabilities: {np.round(payload['edge_probabilities'], 3)}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="citris",
        description="Temporal intervened sequences: simulation, causal "
                    "representation learning, evaluation, graph extraction.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a dataset")
    g.add_argument("--env", required=True)
    g.add_argument("--steps", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--policy", default="default",
                   help="default | bernoulli:p | grouped:<preset> | "
                        "independent-eval")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="train a model on a dataset")
    t.add_argument("--model", required=True,
                   choices=["vae", "nf", "ivae-star", "ae"])
    t.add_argument("--data", required=True)
    t.add_argument("--config", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--ae-ckpt", default=None)
    t.add_argument("--ckpt-out", required=True)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="disentanglement evaluation")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--indep-data", required=True)
    e.add_argument("--triplet-data", default=None)
    e.add_argument("--config", default=None)
    e.add_argument("--report", required=True)
    e.set_defaults(fn=cmd_eval)

    gr = sub.add_parser("graph", help="extract the temporal causal graph")
    gr.add_argument("--ckpt", default=None)
    gr.add_argument("--data", required=True)
    gr.add_argument("--config", default=None)
    gr.add_argument("--oracle-latents", action="store_true")
    gr.add_argument("--out", required=True)
    gr.set_defaults(fn=cmd_graph)

    r = sub.add_parser("report", help="pretty-print a JSON report")
    r.add_argument("--report", required=True)
    r.set_defaults(fn=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        # argparse uses exit code 2 for usage errors already
        raise
    try:
        return args.fn(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
