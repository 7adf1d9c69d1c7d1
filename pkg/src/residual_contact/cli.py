"""Command-line entry point: ``residual-contact <subcommand> --config cfg.json``.

Every subcommand writes its artifacts (CSV tables, JSON records and PNG
figures) into ``--out``. Exit status is 0 on success, 1 for invalid input
and 2 for numerical failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import plotting
from .analytic import ContactParams
from .belief import GaussianMixture, predict
from .dataset import Dataset, load_dataset, save_dataset
from .dynamics import BodyModel, State
from .errors import NumericalError, ValidationError
from .experiment import evaluate, split_dataset, sweep, write_rows
from .oracle import OracleConfig, generate_oracle_dataset
from .policy import PolicyParams
from .simulator import simulate
from .sysid import MhConfig, chain_point_estimate, metropolis_hastings, save_chain
from .trainer import RolloutConfig, TrainConfig, train

log = logging.getLogger("residual_contact")


class Context:
    def __init__(self, args):
        self.seed = args.seed
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        if args.config:
            cfg_path = Path(args.config)
            try:
                self.cfg = json.loads(cfg_path.read_text())
            except FileNotFoundError:
                raise ValidationError(f"config file {cfg_path} not found") from None
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{cfg_path}: invalid JSON ({exc})") from None
            self.base = cfg_path.parent
        else:
            self.cfg, self.base = {}, Path.cwd()

    def path(self, key, required=True):
        value = self.cfg.get(key)
        if value is None:
            if required:
                raise ValidationError(f"config is missing {key!r}")
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base / p

    def seed_or(self, default=0) -> int:
        return self.seed if self.seed is not None else int(self.cfg.get("seed", default))

    def written(self, *paths):
        for p in paths:
            log.info("wrote %s", p)


def _dataclass_from(cls, d: dict, **overrides):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ValidationError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {**d, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None


def _body(ctx) -> BodyModel:
    spec = ctx.cfg.get("body")
    if spec is None:
        return BodyModel.square()
    if "vertices" in spec:
        return BodyModel.from_dict(spec)
    return BodyModel.square(**spec)


def _contact_params(ctx) -> ContactParams:
    if "contact_params" in ctx.cfg:
        cp = ctx.cfg["contact_params"]
        return ContactParams(float(cp["mu"]), float(cp["eps"]))
    summary = ctx.path("sysid_summary", required=False)
    if summary is not None:
        d = json.loads(summary.read_text())
        return ContactParams(d["mu_median"], d["eps_median"])
    raise ValidationError("config needs 'contact_params' or 'sysid_summary'")


def _dataset(ctx) -> Dataset:
    return load_dataset(ctx.path("dataset"))


def cmd_gen_data(ctx):
    body = _body(ctx)
    cfg = OracleConfig.from_dict({**{k: v for k, v in ctx.cfg.items()
                                     if k not in ("body", "name")},
                                  **({"seed": ctx.seed} if ctx.seed is not None else {})})
    ds = generate_oracle_dataset(cfg, body)
    name = ctx.cfg.get("name", "oracle")
    path = ctx.out / f"{name}.jsonl"
    save_dataset(ds, path)
    rows = [(k, len(tr), tr.data[0, 2], tr.data[-1, 2]) for k, tr in enumerate(ds.trajectories)]
    csv_path = write_rows(ctx.out / f"{name}_summary.csv", ["trajectory", "samples", "z_start",
                                                           "z_end"], rows)
    fig = plotting.plot_trajectories(ds.trajectories, ds.trajectories, ctx.out / f"{name}.png")
    ctx.written(path, csv_path, fig)


def cmd_sysid(ctx):
    ds = _dataset(ctx)
    trajs = ds.trajectories
    if "test_count" in ctx.cfg:
        trajs, _ = split_dataset(ds, int(ctx.cfg["test_count"]))
    cfg = _dataclass_from(MhConfig, ctx.cfg.get("mh", {}), seed=ctx.seed)
    chain = metropolis_hastings(trajs, ds.body, cfg)
    csv_path, json_path = save_chain(chain, ctx.out)
    fig = plotting.plot_chain(chain, ctx.out / "chain.png")
    est = chain_point_estimate(chain)
    log.info("median mu=%.4f eps=%.4f acceptance=%.3f", est.mu, est.eps, chain.acceptance_rate)
    ctx.written(csv_path, json_path, fig)


def cmd_train(ctx):
    ds = _dataset(ctx)
    params = _contact_params(ctx)
    trajs = ds.trajectories
    if "test_count" in ctx.cfg:
        trajs, _ = split_dataset(ds, int(ctx.cfg["test_count"]))
    rc = _dataclass_from(RolloutConfig, {"dt": ds.dt, **ctx.cfg.get("rollout", {})},
                         seed=ctx.seed)
    tc = _dataclass_from(TrainConfig, ctx.cfg.get("train", {}))
    res = train(trajs, ds.body, params, rc, tc,
                callback=lambda g, b: log.debug("generation %d best %.6g", g, b))
    policy_path = ctx.out / "policy.json"
    res.policy.save(policy_path, contact_params=asdict(params), best_fitness=res.best_fitness,
                    evaluations=res.evaluations, n_train=len(trajs))
    csv_path = write_rows(ctx.out / "training.csv", ["generation", "best_loss"],
                          [(g, repr(v)) for g, v in enumerate(res.history)])
    fig = plotting.plot_training(res.history, ctx.out / "training.png")
    log.info("best training loss %.6g after %d evaluations", res.best_fitness, res.evaluations)
    ctx.written(policy_path, csv_path, fig)


def cmd_eval(ctx):
    ds = _dataset(ctx)
    params = _contact_params(ctx)
    trajs = ds.trajectories
    if "test_count" in ctx.cfg:
        _, trajs = split_dataset(ds, int(ctx.cfg["test_count"]))
    pol_path = ctx.path("policy", required=False)
    policy = PolicyParams.load(pol_path) if pol_path else None
    seed = ctx.seed_or()
    n_roll = int(ctx.cfg.get("n_eval_rollouts", 8))
    base = evaluate(None, trajs, ds.body, params)
    rows = [("analytical", repr(base[0]), repr(base[1]))]
    if policy is not None:
        res = evaluate(policy, trajs, ds.body, params, n_roll, seed=seed)
        rows.append(("residual", repr(res[0]), repr(res[1])))
        log.info("test RMSE %.5f (analytical %.5f, %.1f%% lower)", res[0], base[0],
                 100 * (1 - res[0] / base[0]))
    else:
        log.info("test RMSE %.5f (analytical)", base[0])
    csv_path = write_rows(ctx.out / "eval.csv", ["model", "mean_rmse", "std_rmse"], rows)
    preds = [simulate(tr.states[0], ds.body, params, len(tr), tr.dt, policy=policy, seed=seed)[0]
             for tr in trajs[:4]]
    fig = plotting.plot_trajectories(trajs, preds, ctx.out / "eval.png")
    ctx.written(csv_path, fig)


def cmd_sweep(ctx):
    ds = _dataset(ctx)
    params = _contact_params(ctx)
    tc = _dataclass_from(TrainConfig, ctx.cfg.get("train", {}))
    seeds = ctx.cfg.get("seeds", [0, 1, 2]) if ctx.seed is None else [ctx.seed]
    res = sweep(ds, ctx.cfg.get("train_sizes", [0, 5, 10, 20, 40]),
                int(ctx.cfg.get("test_count", max(1, len(ds) // 5))), ds.body, params, tc,
                seeds=seeds, samples_per_loss=int(ctx.cfg.get("samples_per_loss", 4)),
                progress=lambda s, n, m, b: log.info("seed %d n=%d test %.5f (analytical %.5f)",
                                                     s, n, m, b))
    res.save_csv(ctx.out / "sweep.csv")
    res.save_per_seed_csv(ctx.out / "sweep_per_seed.csv")
    fig = plotting.plot_sweep(res, ctx.out / "sweep.png")
    (ctx.out / "sweep_meta.json").write_text(json.dumps(res.metadata, indent=2))
    log.info("residual first beats analytical at n=%s (%.1f contact events per trajectory)",
             res.crossover(), res.metadata["events_per_trajectory"])
    ctx.written(ctx.out / "sweep.csv", ctx.out / "sweep_per_seed.csv", fig)


def cmd_propagate(ctx):
    body = _body(ctx)
    params = _contact_params(ctx)
    pol_path = ctx.path("policy", required=False)
    policy = PolicyParams.load(pol_path) if pol_path else None
    try:
        s0 = np.array(ctx.cfg["initial_state"], dtype=float)
        cov = np.array(ctx.cfg.get("initial_cov", [1e-6] * 6), dtype=float)
    except KeyError as exc:
        raise ValidationError(f"config is missing {exc}") from None
    if cov.ndim == 1:
        cov = np.diag(cov)
    belief = GaussianMixture.single(s0, cov)
    results = predict(belief, body, params, policy, int(ctx.cfg.get("n_events", 5)),
                      m_samples=int(ctx.cfg.get("m_samples", 50)), seed=ctx.seed_or(),
                      dt=float(ctx.cfg.get("dt", 0.004)), t_end=float(ctx.cfg.get("t_end", 2.0)))
    rows = [(0, 0.0, 1, repr(belief.trace()), 0, 0, 0)]
    (ctx.out / "belief_000.json").write_text(json.dumps(belief.to_dict()))
    for k, r in enumerate(results, start=1):
        r.save(ctx.out / f"belief_{k:03d}.json")
        rows.append((k, repr(r.event_time), r.belief.K, repr(r.belief.trace()),
                     r.samples_discarded, r.samples_drawn, r.particles_dropped))
        log.info("event %d at t=%.4f: K=%d trace=%.4g discarded %d/%d", k, r.event_time,
                 r.belief.K, r.belief.trace(), r.samples_discarded, r.samples_drawn)
    csv_path = write_rows(ctx.out / "events.csv", ["event", "time", "components", "trace",
                                                    "discarded", "drawn", "dropped"], rows)
    n = int(round(max(r.event_time for r in results) / 0.004)) + 2 if results else 2
    mean_traj, _ = simulate(State.from_array(s0), body, params, n, 0.004, policy=policy,
                            stochastic=False)
    fig = plotting.plot_beliefs([belief] + [r.belief for r in results], ctx.out / "beliefs.png",
                                truth=mean_traj.data[:, 1:3])
    ctx.written(csv_path, fig)


COMMANDS = {
    "gen-data": (cmd_gen_data, "generate an oracle dataset"),
    "sysid": (cmd_sysid, "identify friction and restitution by MCMC"),
    "train": (cmd_train, "train a residual policy"),
    "eval": (cmd_eval, "score analytical and residual models on a dataset"),
    "sweep": (cmd_sweep, "test RMSE as a function of training-set size"),
    "propagate": (cmd_propagate, "propagate a state belief through contact events"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="residual-contact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--quiet", action="store_true", help="only report errors")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command][0](Context(args))
    except ValidationError as exc:
        log.error("%s", exc)
        return 1
    except NumericalError as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
