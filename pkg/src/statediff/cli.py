"""Command-line entry point.

Subcommands wire the library into reproducible runs:

    gen-data       config -> JSON-Lines dataset
    train          config + dataset -> checkpoint + loss history CSV
    sample         checkpoint + conditions file -> samples JSON Lines
    verify-bounds  checkpoint + config -> bound report (CSV + text)
    gradcheck      finite-difference gradient verification

Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
3 bound violation in verify-bounds.  Every command is deterministic given
(config bytes, seed); --seed overrides the config's seed.
"""

import argparse
import json
import sys

import numpy as np

from .analysis import (
    conditional_variance,
    error_propagation_mc,
    evaluate_theorem1,
    evaluate_theorem2,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config, make_sched, make_task, make_train_config, task_meta
from .errors import CheckpointError, ConfigError, NumericalError
from .gradcheck import check_loss_gradients, check_network_gradients, random_check_case
from .latent import head_forward_batch, kl_diag_gaussians_batch
from .model import make_model, sample, train, training_loss
from .schedule import build_schedule
from .tasks import (
    ConditionalGMM,
    RolloutSpec,
    generate_dataset,
    gmm_sample,
    load_dataset,
    save_dataset,
)
from .streams import child_seed, rng_stream

VERIFY_SAMPLES = 4000
VERIFY_KL_DRAWS = 1024
VERIFY_MC_TRIALS = 100_000


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the documented usage-error code is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="statediff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a dataset from a task config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path; history CSV lands next to it")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw states from a trained checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--x-file", required=True, help='JSON Lines of {"x": [...]} conditions')
    p.add_argument("--n", type=int, default=100, help="samples per condition")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("verify-bounds", help="measure the error bounds on an analytic task")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="report base path; writes .csv and .txt")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_verify_bounds)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--dims", default="3,8,2", help="comma-separated layer dims (small nets only)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _load(path_config, seed_override):
    cfg = load_config(path_config)
    if seed_override is not None:
        cfg.seed = seed_override
    return cfg


def cmd_gen_data(args) -> int:
    cfg = _load(args.config, args.seed)
    source = make_task(cfg)
    dataset = generate_dataset(source, cfg.task_pairs, cfg.seed, extra_meta=task_meta(cfg))
    save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} pairs to {args.out}")
    return 0


def _expected_dims(cfg):
    source = make_task(cfg)
    if isinstance(source, ConditionalGMM):
        return source.cond_dim, source.state_dim
    world = source.world
    if source.aux_mode == "history":
        return world.obs_dim * (source.window + 1), world.state_dim
    return world.obs_dim * world.n_agents, world.state_dim


def cmd_train(args) -> int:
    cfg = _load(args.config, args.seed)
    dataset = load_dataset(args.data)
    x_dim, s_dim = dataset.xs.shape[1], dataset.ss.shape[1]
    want_x, want_s = _expected_dims(cfg)
    if (x_dim, s_dim) != (want_x, want_s):
        raise ConfigError(
            f"dataset dims (x={x_dim}, s={s_dim}) do not match config task dims "
            f"(x={want_x}, s={want_s})"
        )
    sched = make_sched(cfg)
    model = make_model(
        s_dim,
        x_dim,
        cfg.model_latent_dim,
        sched,
        denoiser_hidden=cfg.model_denoiser_hidden,
        head_hidden=cfg.model_head_hidden,
        seed=cfg.seed,
        beta_kl=cfg.train_beta_kl,
    )
    history_path = str(args.out) + ".history.csv"

    rows = []

    def keep_last_good(record, current):
        rows.append(record)
        save_checkpoint(current, args.out)

    try:
        train(model, dataset, make_train_config(cfg), on_interval=keep_last_good)
    except NumericalError as exc:
        _write_history(history_path, rows)
        print(f"numerical failure: {exc}; last-good checkpoint kept at {args.out}", file=sys.stderr)
        return 2
    save_checkpoint(model, args.out)
    _write_history(history_path, rows)
    print(f"wrote checkpoint {args.out} and history {history_path}")
    return 0


def _write_history(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mse,kl,total\n")
        for r in records:
            fh.write(f"{r.epoch},{r.mse_term!r},{r.kl_term!r},{r.total_loss!r}\n")


def cmd_sample(args) -> int:
    model = load_checkpoint(args.ckpt)
    if args.n < 0:
        raise ConfigError("--n must be >= 0")
    with open(args.x_file, "r", encoding="utf-8") as fh:
        conditions = [json.loads(line)["x"] for line in fh if line.strip()]
    with open(args.out, "w", encoding="utf-8") as fh:
        for j, x in enumerate(conditions):
            draws = sample(model, np.asarray(x, dtype=np.float64), args.n,
                           seed=child_seed(args.seed, "sample-x", j))
            record = {
                "x": [float(v) for v in x],
                "samples": [[float(v) for v in row] for row in draws],
            }
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
    print(f"wrote {len(conditions)} condition records to {args.out}")
    return 0


def _measure_model_mse(model, task, x, seed, draws):
    """Fresh estimate of the noise-prediction MSE at condition x."""
    rng = rng_stream(seed, "verify-mse")
    ss = np.stack([gmm_sample(task, x, rng) for _ in range(draws)])
    xs = np.broadcast_to(x, (draws, model.cond_dim))
    eps = rng.standard_normal((draws, model.state_dim))
    z_eps = rng.standard_normal((draws, model.latent_dim))
    ks = rng.integers(1, model.sched.num_steps + 1, size=draws)
    _, mse, _ = training_loss(model, xs, ss, eps, z_eps, ks)
    return float(mse)


def _measure_eps_kl(model, task, x, seed, draws):
    """Mean divergence from posterior to prior over fresh true states at x."""
    rng = rng_stream(seed, "verify-kl")
    ss = np.stack([gmm_sample(task, x, rng) for _ in range(draws)])
    xs = np.broadcast_to(x, (draws, model.cond_dim))
    mu_q, logvar_q = head_forward_batch(model.posterior, np.concatenate([xs, ss], axis=1))
    mu_p, logvar_p = head_forward_batch(model.prior, xs)
    return float(np.mean(kl_diag_gaussians_batch(mu_q, logvar_q, mu_p, logvar_p)))


def cmd_verify_bounds(args) -> int:
    cfg = _load(args.config, args.seed)
    model = load_checkpoint(args.ckpt)
    source = make_task(cfg)
    if isinstance(source, RolloutSpec):
        raise ConfigError("verify-bounds needs an analytic task (bimodal/unimodal), not gridworld")
    task = source
    if (model.cond_dim, model.state_dim) != (task.cond_dim, task.state_dim):
        raise ConfigError("checkpoint dims do not match the configured task")

    x = np.zeros(task.cond_dim)  # reference evaluation condition
    n = VERIFY_SAMPLES
    model_samples = sample(model, x, n, seed=child_seed(cfg.seed, "verify-model"))
    rng = rng_stream(cfg.seed, "verify-true")
    true_samples = np.stack([gmm_sample(task, x, rng) for _ in range(n)])

    var_true = conditional_variance(task, x)
    paired = evaluate_theorem1(model_samples, true_samples, var_true, seed=cfg.seed)

    delta_sq = model.delta_sq_hat
    if not np.isfinite(delta_sq):
        delta_sq = _measure_model_mse(model, task, x, cfg.seed, VERIFY_KL_DRAWS)
    eps_kl = _measure_eps_kl(model, task, x, cfg.seed, VERIFY_KL_DRAWS)

    report = evaluate_theorem2(
        model_samples, task, x, delta_sq, eps_kl, model.sched, paired_check=paired
    )
    prop = error_propagation_mc(
        model.sched, float(np.sqrt(delta_sq)), task.state_dim, VERIFY_MC_TRIALS, seed=cfg.seed
    )

    pair_err = np.sum((model_samples - true_samples) ** 2, axis=1)
    mc_slack = 3.0 * float(np.std(pair_err) / np.sqrt(n))

    csv_path, txt_path = str(args.out) + ".csv", str(args.out) + ".txt"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    prop_ok = (
        abs(prop.measured - prop.exact) <= 3.0 * prop.stderr + 1e-12
        and prop.measured <= prop.bound + 3.0 * prop.stderr + 1e-12
    )
    bounds_ok = report.all_bounds_hold(mc_slack=mc_slack) and prop_ok
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
        fh.write(
            f"propagation: measured={prop.measured:.6g} exact={prop.exact:.6g} "
            f"bound={prop.bound:.6g} stderr={prop.stderr:.3g} ok={prop_ok}\n"
        )
    print(f"wrote {csv_path} and {txt_path}")
    if not bounds_ok:
        print("bound violation beyond Monte-Carlo slack", file=sys.stderr)
        return 3
    return 0


_GRADCHECK_PARAM_CAP = 64


def cmd_gradcheck(args) -> int:
    try:
        dims = tuple(int(v) for v in args.dims.split(","))
    except ValueError:
        raise ConfigError(f"bad --dims {args.dims!r}") from None
    if len(dims) < 2:
        raise ConfigError("--dims needs at least two sizes")
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        if fan_in * fan_out + fan_out > _GRADCHECK_PARAM_CAP:
            raise ConfigError(
                f"layer pair ({fan_in},{fan_out}) exceeds the "
                f"{_GRADCHECK_PARAM_CAP}-parameter gradcheck cap"
            )

    worst_net = 0.0
    for activation in ("relu", "mish"):
        net, x, g = random_check_case(dims, activation, args.seed)
        worst_net = max(worst_net, check_network_gradients(net, x, g))

    sched = build_schedule("linear", 2, 1e-4, 0.02)
    tiny = make_model(2, 2, 2, sched, denoiser_hidden=(6,), head_hidden=(6,), seed=args.seed)
    rng = rng_stream(args.seed, "gradcheck-loss")
    nb = 4
    xs = rng.standard_normal((nb, 2))
    ss = rng.standard_normal((nb, 2))
    eps = rng.standard_normal((nb, 2))
    z_eps = rng.standard_normal((nb, 2))
    ks = rng.integers(1, 3, size=nb)
    worst_loss = check_loss_gradients(tiny, xs, ss, eps, z_eps, ks)

    ok = worst_net < 1e-5 and worst_loss < 1e-5
    print(f"network gradients: max relative error {worst_net:.3e}")
    print(f"full-loss gradients: max relative error {worst_loss:.3e}")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 2


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
