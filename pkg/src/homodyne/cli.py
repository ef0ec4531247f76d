"""Command-line driver: simulate, estimate, calibrate and bench.

Every command is a pure function of its resolved options and input files.
A JSON ``--config`` supplies option values; explicit flags override it.
"""
import argparse
import json
import os
import sys

import numpy as np

from . import photocounter as pc
from .metrics import EstimatorSpec, risk_monte_carlo
from .mle import MleConfig, MleOptions, mle_select
from .patterns import build_table
from .projection import PenaltyConfig, estimate_projection
from .sampling import CalibDataset, TomographyDataset, sample_photocounter, sample_tomography
from .states import parse_state

EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


def parse_range(text):
    """``"1..6"`` -> ``[1, ..., 6]``; also accepts ``"3"`` and ``"1,2,5"``."""
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            vals = list(range(lo, hi + 1))
        else:
            vals = [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"bad range {text!r}; expected like 1..6") from None
    if not vals or min(vals) < 1:
        raise UsageError(f"range {text!r} must be nonempty with entries >= 1")
    return vals


def parse_counter(text, dim):
    kind, _, arg = text.partition(":")
    if kind == "ideal":
        return pc.ideal_counter(dim)
    if kind == "binomial":
        return pc.binomial_counter(float(arg or 0.8), dim)
    raise UsageError(f"unknown counter {text!r}; use 'ideal' or 'binomial:<eff>'")


def _write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(obj if isinstance(obj, str) else json.dumps(obj, indent=2, sort_keys=True))
        fh.write("\n")


def _echo(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}


def _penalty(args):
    return PenaltyConfig(eps=args.eps, delta=args.delta, N_max=args.N_max, kappa=args.kappa,
                         penalty_kind=args.penalty)


def _require_deconvolution(eta):
    if eta <= 0.5:
        raise UsageError(f"data have eta={eta}: pattern-function deconvolution needs eta > 1/2")


def cmd_simulate(args):
    if args.n < 0:
        raise UsageError("n must be nonnegative")
    path = os.path.join(args.out, "data.csv")
    if args.counter:
        b2 = pc.geometric_b2(args.K_max, args.xi)
        P = parse_counter(args.counter, args.K_max + 1)
        data = sample_photocounter(P, b2, args.n, seed=args.seed, eta=args.eta,
                                   source=args.counter, threads=args.threads)
    else:
        rho = parse_state(args.state)
        data = sample_tomography(rho, args.n, eta=args.eta, seed=args.seed, source=args.state,
                                 threads=args.threads)
    data.to_csv(path)
    print(f"wrote {data.n} samples to {path}")


def _projection(args, data):
    _require_deconvolution(data.eta)
    cfg = _penalty(args)
    _, rep = estimate_projection(data, cfg, build_table(cfg.N_max, data.eta))
    out = json.loads(rep.to_json())
    out["run"] = _echo(args)
    _write_json(os.path.join(args.out, "projection.json"), out)
    print(f"kept {len(rep.kept)} coefficients: {rep.kept}")


def _mle(args, data):
    Ns = parse_range(args.N_range)
    if max(Ns) > 32:
        raise UsageError("MLE truncation is limited to N <= 32")
    cfg = MleConfig(kappa=args.kappa, threads=args.threads,
                    options=MleOptions(tol=args.tol, seed=args.seed))
    N_hat, fit, rep = mle_select(data, Ns, cfg)
    out = json.loads(rep.to_json())
    out["rho_hat"] = json.loads(fit.rho_hat.to_json())
    out["run"] = _echo(args)
    _write_json(os.path.join(args.out, "mle.json"), out)
    print(f"{'N':>3} {'nll':>12} {'penalty':>10} {'criterion':>12} conv")
    for row in rep.rows:
        print(f"{row['N']:>3} {row['nll']:>12.6f} {row['penalty']:>10.6f} {row['criterion']:>12.6f} "
              f"{'yes' if row['converged'] else 'no'}")
    print(f"selected N = {N_hat}")


def cmd_estimate(args):
    data = TomographyDataset.from_csv(args.data)
    kind = getattr(args, "kind", None) or args.command.split("-", 1)[1]
    if kind == "projection":
        _projection(args, data)
    elif kind == "mle":
        _mle(args, data)
    else:
        raise UsageError(f"unknown estimator kind {kind!r}")


def cmd_calibrate(args):
    data = CalibDataset.from_csv(args.data)
    b2 = np.asarray(data.b2, dtype=float)
    cfg = pc.CalibConfig(b2=b2, distance=args.distance, eps=args.eps, delta=args.delta,
                         I_max=args.I_max, K_max=args.K_max, kappa=args.kappa)
    if args.method == "mle":
        _, rep = pc.calib_mle(data, cfg)
    else:
        _require_deconvolution(data.eta)
        kind = args.method.split("-", 1)[1]
        _, rep = pc.calib_projection(data, cfg, build_table(cfg.K_max + 1, data.eta), kind)
    if args.truth:
        truth = parse_counter(args.truth, b2.size)
        rows = max(truth.I_dim, rep.raw.shape[0])
        P = pc.pad_to(truth.P, (rows, b2.size))
        rep.raw = pc.pad_to(rep.raw, P.shape)
        rep.stochastic = pc.pad_to(rep.stochastic, P.shape)
        rep.compare(P, cfg.a)
    out = json.loads(rep.to_json())
    out["run"] = _echo(args)
    _write_json(os.path.join(args.out, "calibration.json"), out)
    if rep.selected is not None:
        print(f"selected model (I, K) = {rep.selected}")
    else:
        print(f"kept {len(rep.kept)} entries")
    if rep.truth:
        print(" ".join(f"{k}={v:.6g}" for k, v in rep.truth.items()))


def cmd_bench(args):
    if args.reps < 1:
        raise UsageError("reps must be at least 1")
    rho = parse_state(args.state)
    if args.estimator == "projection":
        _require_deconvolution(args.eta)
        spec = EstimatorSpec(kind="projection", penalty=_penalty(args), use_raw=args.raw)
    else:
        spec = EstimatorSpec(kind="mle", N_range=tuple(parse_range(args.N_range)),
                             mle=MleConfig(kappa=args.kappa))
    report = risk_monte_carlo(rho, spec, args.n, args.reps, seed=args.seed, eta=args.eta,
                              loss=args.loss, threads=args.threads)
    out = json.loads(report.to_json())
    out["run"] = _echo(args)
    _write_json(os.path.join(args.out, "bench.json"), out)
    with open(os.path.join(args.out, "bench.csv"), "w") as fh:
        fh.write(report.to_csv())
    print(f"mean={report.mean:.6g} median={report.median:.6g} se={report.se:.3g} "
          f"failures={len(report.failures)}")


def _common(p):
    p.add_argument("--config", help="JSON file with option values (flags override)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.add_argument("--threads", type=int, default=1)


def _penalty_flags(p):
    p.add_argument("--N-max", dest="N_max", type=int, default=8)
    p.add_argument("--penalty", choices=["hoeffding", "bernstein"], default="hoeffding")
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--kappa", type=float, default=2.0)


def _mle_flags(p):
    p.add_argument("--N-range", dest="N_range", default="1..6")
    p.add_argument("--tol", type=float, default=1e-6)


def build_parser():
    parser = argparse.ArgumentParser(prog="homodyne", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    parser.commands = sub.choices

    p = sub.add_parser("simulate", help="draw tomography or calibration samples")
    _common(p)
    p.add_argument("--state", default="vacuum:1", help="vacuum:N, fock:n:N, coherent:re[:im]:N, thermal:mean:N")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--counter", default=None, help="ideal or binomial:<eff> (calibration data)")
    p.add_argument("--K-max", dest="K_max", type=int, default=8)
    p.add_argument("--xi", type=float, default=0.5)
    p.set_defaults(func=cmd_simulate)

    for name in ("estimate-projection", "estimate-mle", "estimate"):
        p = sub.add_parser(name, help="reconstruct a state from a dataset")
        _common(p)
        p.add_argument("--data", required=True)
        if name == "estimate":
            p.add_argument("--kind", choices=["projection", "mle"], required=True)
        _penalty_flags(p)
        _mle_flags(p)
        p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("calibrate", help="calibrate a photocounter from (i, x) samples")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=["projection-hoeffding", "projection-bernstein", "mle"],
                   default="projection-bernstein")
    p.add_argument("--distance", choices=["d1", "d2"], default="d2")
    p.add_argument("--I-max", dest="I_max", type=int, default=8)
    p.add_argument("--K-max", dest="K_max", type=int, default=8)
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--kappa", type=float, default=2.0)
    p.add_argument("--truth", default=None, help="ground-truth counter for d1/d2 reporting")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("bench", help="Monte-Carlo risk of an estimator")
    _common(p)
    p.add_argument("--state", default="vacuum:1")
    p.add_argument("--estimator", choices=["projection", "mle"], default="projection")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--loss", choices=["l2sq", "l2", "hellinger_sq"], default="l2sq")
    p.add_argument("--raw", action="store_true", help="projection loss on the raw matrix")
    _penalty_flags(p)
    _mle_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if args.config:
        with open(args.config) as fh:
            conf = json.load(fh)
        sub = parser.commands[args.command]
        unknown = [k for k in conf if sub.get_default(k) is None and k not in vars(args)]
        if unknown:
            parser.error(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**conf)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    parser = build_parser()
    try:
        args = _parse(parser, argv)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        os.makedirs(args.out, exist_ok=True)
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
