"""Command-line front end.

simulate   run the scenarios of a config file and write results.csv
bound      compute the theoretical power bounds for the same scenarios
oneshot    solve one random instance and print its diagnostics

Exit codes: 0 success, 2 configuration error, 3 numerical failure in oneshot.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .ci_closed_form import cizf_precoder, cimrt_precoder
from .ci_power import SnrTargets, cimm_solve, cipm_solve
from .ci_sumrate import cisr_g, cisr_pa
from .errors import ConfigError, ToolkitError
from .harness import (
    KNOWN_ALGORITHMS,
    ScenarioConfig,
    _genie_bound,
    parse_config,
    run_montecarlo,
    write_csv,
)
from .model_core import SymbolVector, generate_channel

_BOUND_TAGS = ("genie_pwr", "multicast_pwr", "multicast_pwr_rank1")


def _add_common(sub):
    sub.add_argument("--config", required=True, help="scenario file (INI sections)")
    sub.add_argument("--out", required=True, help="output directory for CSV files")
    sub.add_argument("--seed", type=int, default=None, help="override every scenario seed")
    sub.add_argument("--trials", type=int, default=None, help="override trial counts")
    sub.add_argument("--threads", type=int, default=1, help="worker threads over trials")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cislp", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="run Monte-Carlo scenarios")
    _add_common(sim)

    bnd = subs.add_parser("bound", help="evaluate theoretical bounds per scenario")
    _add_common(bnd)

    one = subs.add_parser("oneshot", help="solve one instance and print diagnostics")
    one.add_argument("--K", type=int, required=True)
    one.add_argument("--M", type=int, required=True)
    one.add_argument("--psk", type=int, default=4)
    one.add_argument("--algorithm", required=True, choices=sorted(KNOWN_ALGORITHMS))
    one.add_argument("--seed", type=int, default=1)
    one.add_argument("--sigma2", type=float, default=1.0)
    one.add_argument("--power-budget", type=float, default=1.0)
    one.add_argument("--target", type=float, default=1.0, help="per-user linear SNR target")
    return parser


def _run_batch(args, transform=None) -> int:
    try:
        configs = parse_config(args.config)
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for cfg in configs:
        if overrides:
            cfg = replace(cfg, **overrides)
        if transform is not None:
            cfg = transform(cfg)
        errs = cfg.validate()
        if errs:
            for violation in errs:
                print(f"config error: {violation}", file=sys.stderr)
            return 2
        records.extend(run_montecarlo(cfg, threads=args.threads))
    name = "bounds.csv" if transform is not None else "results.csv"
    write_csv(records, out_dir / name)
    print(f"wrote {len(records)} records to {out_dir / name}")
    return 0


def _bounds_only(cfg: ScenarioConfig) -> ScenarioConfig:
    return replace(cfg, algorithms=_BOUND_TAGS, coherence_block=1, noise=False)


def _print_vector(label, vec):
    body = ", ".join(f"{v:.6g}" for v in np.asarray(vec).reshape(-1).real)
    print(f"  {label}: [{body}]")


def _oneshot(args) -> int:
    if args.K < 1 or args.M < 1 or args.psk < 2 or args.psk & (args.psk - 1):
        print("config error: K, M >= 1 and psk a power of two are required", file=sys.stderr)
        return 2
    cfg = ScenarioConfig(
        scenario_id="oneshot", n_users=args.K, n_antennas=args.M, sigma2=args.sigma2,
        power_budget=args.power_budget, zeta=(args.target,), psk_order=args.psk,
        trials=1, seed=args.seed, algorithms=(args.algorithm,)).resolved()
    errs = cfg.validate()
    if errs:
        for violation in errs:
            print(f"config error: {violation}", file=sys.stderr)
        return 2

    channel = generate_channel(cfg.n_users, cfg.n_antennas, 1.0, cfg.seed,
                               sigma2_noise=cfg.sigma2)
    rng = np.random.default_rng(cfg.seed + 1)
    d = SymbolVector.uniform(cfg.psk_order, cfg.n_users, rng)

    print(f"oneshot {args.algorithm}: K={cfg.n_users} M={cfg.n_antennas} "
          f"psk={cfg.psk_order} seed={cfg.seed}")
    _print_vector("symbol indices", [s.index for s in d])
    zeta = np.array(cfg.zeta)
    try:
        if args.algorithm == "CIPM":
            sol = cipm_solve(channel, d, SnrTargets(zeta, cfg.sigma2))
            print(f"  power: {sol.power:.9g}")
            _print_vector("received magnitudes", np.abs(sol.per_user_rx))
        elif args.algorithm == "CIMM":
            sol = cimm_solve(channel, d, np.array(cfg.weights_r), cfg.power_budget)
            print(f"  t*: {sol.t_star:.9g}  iterations: {sol.iterations}")
            _print_vector("per-user SNR", np.abs(channel.h @ sol.q.x) ** 2 / cfg.sigma2)
        elif args.algorithm == "CIZF":
            out = cizf_precoder(channel, d, cfg.power_budget)
            print(f"  gamma: {out.gamma_or_powers['gamma']:.9g}  power: {out.x.power:.9g}")
            _print_vector("received magnitudes", np.abs(out.noiseless_rx))
        elif args.algorithm == "CIMRT":
            powers = _genie_bound(channel, cfg).certificate["p"]
            out = cimrt_precoder(channel, d, powers, cfg.power_budget)
            print(f"  power: {out.x.power:.9g}")
            _print_vector("angle errors (rad)", out.gamma_or_powers["angle_errors"])
            for entry in out.state.plane_log:
                print(f"  plane {entry['plane']}: {entry['status']} "
                      f"(residual {entry['residual']:.3g})")
        elif args.algorithm in ("CISR-PA", "CISR-G"):
            fn = cisr_pa if args.algorithm == "CISR-PA" else cisr_g
            sol = fn(channel, d, cfg.power_budget, np.array(cfg.weights_phi))
            print(f"  weighted sum rate: {sol.weighted_sum_rate:.9g}")
            print(f"  served users: {list(sol.served)}")
            _print_vector("per-user SNR", sol.per_user_snr)
        else:
            from .harness import _RUNNERS
            metrics = _RUNNERS[args.algorithm](channel, d, cfg, {}, None)
            for key, value in metrics.items():
                print(f"  {key}: {value:.9g}")
    except ToolkitError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        return _run_batch(args)
    if args.command == "bound":
        return _run_batch(args, transform=_bounds_only)
    return _oneshot(args)


if __name__ == "__main__":
    raise SystemExit(main())
