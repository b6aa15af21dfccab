"""Command-line interface.

Exit status is 0 on success, 1 on input errors, 2 on infeasible sizing and
64 on usage errors.
"""

import argparse
import json
import math
import sys
from dataclasses import replace

import numpy as np

from .agents import ExploreExploitDescriptor, UniformInterval, UnitPrior, verify_bic_mc
from .harness import (
    POLICIES,
    ExperimentConfig,
    gap_priors,
    impossibility_demo,
    run_experiment,
    run_sweep,
    sim_overlap_fixture,
    size_policy,
)
from .overlap_tests import asymptotic_overlap_test, nonasymptotic_overlap_test
from .panel_model import read_panel_csv
from .policy_two import (
    InfeasibleError,
    default_delta_split,
    default_num_batches,
    required_batch_L,
    required_n0,
)

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_USAGE = 0, 1, 2, 64
SWEEP_R = (2, 4, 6, 8, 10)
SWEEP_GAP = (0.2, 0.4, 0.6, 0.8)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def example_b1_prior():
    """Control fixed at 0.25 and treatment uniform on ``[0, 1]``."""
    return UnitPrior((UniformInterval(0.25, 0.25), UniformInterval(0.0, 1.0)))


def _load_config(args):
    payload = {}
    if args.config:
        with open(args.config) as fh:
            payload = json.load(fh)
        if not isinstance(payload, dict):
            raise ValueError("config file must hold a JSON object")
    cfg = ExperimentConfig.from_dict(payload)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    return cfg


def _print_terms(terms, indent="  "):
    for key in sorted(terms):
        print(f"{indent}{key} = {terms[key]!r}")


def _cmd_simulate(args):
    cfg = _load_config(args)
    overrides = {k: v for k, v in (("runs", args.runs), ("r", args.r), ("gap", args.gap),
                                   ("n_units", args.n_units), ("policy", args.policy),
                                   ("sizing", args.sizing), ("agent_mode", args.agent_mode))
                 if v is not None}
    if args.paper_scale:
        overrides["runs"] = 50
    if args.sweep:
        overrides.update(r_values=SWEEP_R, gap_values=SWEEP_GAP)
    cfg = replace(cfg, **overrides)
    if cfg.r_values or cfg.gap_values:
        results = run_sweep(cfg)
    else:
        results = {(cfg.r, cfg.gap): run_experiment(cfg)}
    for (r, gap), res in results.items():
        L = res.runs[0].sizing.value if res.runs[0].sizing is not None else 0
        print(f"r={r} gap={gap:g} N0={res.runs[0].N0} L={L} "
              f"ie_tail={res.tail_mean('ie'):.6f} baseline_tail={res.tail_mean('baseline'):.6f} "
              f"ratio={res.tail_ratio():.4f}")
    return EXIT_OK


def _cmd_batch_size(args):
    if args.preset == "example-b1":
        delta = 0.5 if args.delta is None else args.delta
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        n0 = required_n0(1, delta, p_min=0.5, method="geometric")
        B = required_n0(1, delta, p_min=0.5, method="geometric")
        res = required_batch_L(priors=[example_b1_prior()], C=args.C)
        print("preset=example-b1 (idealized: alpha=sigma=delta=0 in L)")
        print(f"delta={delta!r} p=0.5")
        print(f"N0={n0}")
        print(f"  rule = ceil(log(1/delta)/log(1/(1-p))) = {math.log(1 / delta) / math.log(2)!r}")
        print(f"B={B}")
        print(f"L={res.value}")
        _print_terms(res.terms)
        return EXIT_OK
    cfg = _load_config(args)
    if args.delta is not None:
        cfg = replace(cfg, delta=args.delta)
    if args.C != 0.125:
        cfg = replace(cfg, C=args.C)
    d0, dpcr, deps = default_delta_split(cfg.delta)
    r_tau = max(cfg.r // 2, 1)
    n0 = required_n0(r_tau, d0, p_min=0.5) if cfg.N0 is None else cfg.N0
    B = default_num_batches(r_tau, d0, 0.5) if cfg.B is None else cfg.B
    res = size_policy(replace(cfg, sizing="idealized"))
    print(f"policy={cfg.policy} r={cfg.r} gap={cfg.gap:g} C={cfg.C!r} delta={cfg.delta!r}")
    print(f"delta_split: delta0={d0!r} delta_pcr={dpcr!r} delta_eps={deps!r}")
    print(f"N0={n0}")
    print(f"B={B}")
    print(f"L={res.value}")
    _print_terms(res.terms)
    return EXIT_OK


def _cmd_overlap(args):
    if args.fixture == "sim":
        donors, test = sim_overlap_fixture(seed=args.seed or 0, r=args.rank)
    elif args.panel:
        if args.donor_ids is None or args.test_id is None:
            raise ValueError("--panel needs --donor-ids and --test-id")
        panel = read_panel_csv(args.panel)
        ids = [int(x) for x in args.donor_ids.split(",") if x.strip()]
        if not ids or max(ids + [args.test_id]) >= panel.shape[0] or min(ids + [args.test_id]) < 0:
            raise ValueError(f"unit ids must lie in 0..{panel.shape[0] - 1}")
        donors, test = panel[ids], panel[args.test_id]
    else:
        if not (args.donors and args.test):
            raise ValueError("need --fixture sim, --panel, or both --donors and --test")
        donors = read_panel_csv(args.donors)
        test = read_panel_csv(args.test)
        if test.shape[0] != 1:
            raise ValueError("--test must hold exactly one unit")
        test = test[0]
    if args.method == "asym":
        res = asymptotic_overlap_test(donors, test, args.rank)
    else:
        res = nonasymptotic_overlap_test(donors, test, args.delta, args.sigma, args.rank)
    print(res.line())
    for key in sorted(res.diagnostics):
        print(f"  {key} = {res.diagnostics[key]!r}")
    return EXIT_OK


def _cmd_impossibility(args):
    table = impossibility_demo(args.c, args.grid, args.draws, seed=args.seed or 0)
    for line in table.lines():
        print(line)
    print(f"min expected error {table.min_analytic:.4f}")
    return EXIT_OK


def _cmd_verify_bic(args):
    prior = gap_priors(args.gap)[1]
    if args.L is None:
        L = required_batch_L(priors=[prior], C=args.C).value
    else:
        L = args.L
    desc = ExploreExploitDescriptor(L, args.C, prior.means[0])
    rng = np.random.default_rng(args.seed)
    est, hw = verify_bic_mc(desc, prior, args.d, args.samples, rng)
    print(f"L={L} d={args.d} gap={args.gap:g} benefit={est:.6f} halfwidth={hw:.6f} "
          f"bic={'yes' if est >= -0.01 else 'no'}")
    return EXIT_OK


def _common_flags(default):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=default, help="master seed")
    common.add_argument("--config", default=default, help="JSON file with ExperimentConfig fields")
    common.add_argument("--out", default=default, help="output directory")
    return common


def build_parser():
    parser = _Parser(prog="iesc", description="Incentive-aware synthetic control simulator.",
                     parents=[_common_flags(None)])
    # sub-command copies must not reset values given before the sub-command
    common = _common_flags(argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="run the two-type simulation study")
    p.add_argument("--runs", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--gap", type=float)
    p.add_argument("--n-units", type=int)
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--sizing", choices=("idealized", "theory"))
    p.add_argument("--agent-mode", choices=("trusting", "rational"))
    p.add_argument("--paper-scale", action="store_true", help="50 repetitions")
    p.add_argument("--sweep", action="store_true", help="sweep r and the prior gap")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("batch-size", parents=[common], help="print N0, B, L and the term ledger")
    p.add_argument("--preset", choices=("example-b1",))
    p.add_argument("--delta", type=float)
    p.add_argument("--C", type=float, default=0.125)
    p.set_defaults(func=_cmd_batch_size)

    p = sub.add_parser("overlap-test", parents=[common], help="test for overlap violation")
    p.add_argument("--method", choices=("nonasym", "asym"), required=True)
    p.add_argument("--fixture", choices=("sim",))
    p.add_argument("--panel", help="CSV of pre-period rows, one per unit")
    p.add_argument("--donor-ids", help="comma-separated 0-based donor rows of --panel")
    p.add_argument("--test-id", type=int, help="0-based test row of --panel")
    p.add_argument("--donors", help="CSV of donor pre-period rows")
    p.add_argument("--test", help="CSV with the test unit's pre-period row")
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--sigma", type=float, default=0.1)
    p.set_defaults(func=_cmd_overlap)

    p = sub.add_parser("impossibility", parents=[common], help="expected error without overlap")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=21)
    p.add_argument("--draws", type=int, default=100_000)
    p.set_defaults(func=_cmd_impossibility)

    p = sub.add_parser("verify-bic", parents=[common], help="Monte Carlo incentive check")
    p.add_argument("--gap", type=float, default=0.4)
    p.add_argument("--L", type=int)
    p.add_argument("--C", type=float, default=0.125)
    p.add_argument("--d", type=int, default=0)
    p.add_argument("--samples", type=int, default=100_000)
    p.set_defaults(func=_cmd_verify_bic)
    return parser


def main(argv=None):
    """Parse ``argv`` and run a subcommand; returns the exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        for key in sorted(exc.terms or {}):
            print(f"  {key} = {exc.terms[key]!r}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entry():
    sys.exit(main())
