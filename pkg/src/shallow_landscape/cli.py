"""Command-line interface. Every command prints JSON lines to stdout.

Exit status: 0 on success, 1 on domain errors (bad data, missing files,
numerical failures), 2 on usage errors.
"""
import argparse
import json
import math
import sys
from dataclasses import asdict

import numpy as np

from . import dataio, landscape, network, optimizer
from .activations import parse_activation
from .errors import LandscapeError
from .landscape import SweepConfig
from .optimizer import GdConfig
from .rng import Stream


def _emit(obj):
    print(json.dumps(obj, sort_keys=True, default=_json_default), flush=True)


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _finite(x):
    return None if x is None or not math.isfinite(x) else x


def _step(text):
    if text in optimizer.STEP_RULES:
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or one of {optimizer.STEP_RULES}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("step size must be positive")
    return value


def _bool(text):
    low = text.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError("expected true or false")


def _activation(text):
    try:
        return parse_activation(text)
    except LandscapeError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _v_star(text):
    """``one``, ``nu:X``, ``mixed:P,M`` or ``custom:a,b,...``."""
    if text == "one":
        return {"v_star_kind": "all_one"}
    kind, _, rest = text.partition(":")
    try:
        if kind == "nu":
            return {"v_star_kind": "all_nu", "nu": float(rest)}
        if kind == "mixed":
            p, m = rest.split(",")
            return {"v_star_kind": "mixed_sign", "d_plus": int(p), "d_minus": int(m)}
        if kind == "custom":
            return {"v_star_kind": "custom", "custom_v": tuple(float(x) for x in rest.split(","))}
    except ValueError:
        pass
    raise argparse.ArgumentTypeError("expected one, nu:X, mixed:P,M or custom:a,b,...")


def _bounds(text):
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        vals = ()
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("expected v_min,v_max,w_min,w_max")
    return vals


def _gd_args(p):
    p.add_argument("--alpha", type=_step, default="auto",
                   help="step size: a number, auto (1/beta), hessian or adaptive (default auto)")
    p.add_argument("--step-scale", type=float, default=0.5,
                   help="multiplier on 1/lambda_max for hessian and adaptive steps (default 0.5)")
    p.add_argument("--max-iters", type=int, default=optimizer.DEFAULT_MAX_ITERS,
                   help="iteration budget (default %(default)s)")
    p.add_argument("--loss-tol", type=float, default=optimizer.DEFAULT_LOSS_TOL,
                   help="stop when the loss is at most this (default %(default)s)")
    p.add_argument("--grad-tol", type=float, default=optimizer.DEFAULT_GRAD_TOL,
                   help="stop when the gradient norm is at most this (default %(default)s)")
    p.add_argument("--record-every", type=int, default=optimizer.DEFAULT_RECORD_EVERY,
                   help="loss trace spacing in iterations (default %(default)s)")


def _gd_config(args):
    return GdConfig(step_size=args.alpha, max_iters=args.max_iters, loss_tol=args.loss_tol,
                    grad_tol=args.grad_tol, record_every=args.record_every,
                    step_scale=args.step_scale)


def _manifest(command, params, seed, outputs, out_path, force):
    m = dataio.RunManifest(command=command, parameters=params, master_seed=seed, outputs=outputs)
    dataio.save_manifest(dataio.manifest_path(out_path), m, force=force)
    return m


def cmd_gen_data(args):
    cfg = dataio.GeneratorConfig(
        d=args.d, n=args.n, k=args.k,
        label_kind="gaussian_random" if args.labels == "random" else "planted",
        activation=args.activation,
        weight_scheme="custom" if args.bounds else "gaussian_over_sqrt_d",
        bounds=args.bounds, master_seed=args.seed,
        require_sign_counts=args.require_sign_counts, **args.v_star)
    data = dataio.generate_dataset(cfg)
    written = dataio.save_dataset(args.out, data, force=args.force)
    m = _manifest("gen-data", cfg.to_dict(), args.seed, written, args.out, args.force)
    _emit({"event": "dataset", "path": str(args.out), "d": data.d, "n": data.n,
           "planted": data.planted is not None, "config_hash": m.config_hash})


def cmd_train(args):
    data = dataio.load_dataset(args.data)
    spec = args.activation
    if spec is None:
        if data.planted is None:
            raise LandscapeError("--activation is required for datasets without planted weights")
        spec = data.planted.activation
    k = args.k if args.k else (data.planted.v.shape[0] if data.planted is not None else None)
    if k is None:
        raise LandscapeError("--k is required for datasets without planted weights")
    if args.init == "near-planted":
        if data.planted is None:
            raise LandscapeError("near-planted initialization needs a planted dataset")
        radii = optimizer.paper_radii(data.planted.W, data.n,
                                      zero_curvature=spec.moment_class == "mu_nonzero_gamma_zero")
        p0 = optimizer.init_near_planted(data.planted.params, radii, args.seed)
    else:
        p0 = optimizer.init_random(k, data.d, args.seed)
    if args.fixed_v is not None:
        p0 = network.NetworkParams(np.full(k, args.fixed_v), p0.W)
    train_v = args.train_v and args.fixed_v is None
    rec = optimizer.gd_run(p0, data, spec, _gd_config(args), train_v=train_v, seed=args.seed,
                           init_kind=args.init)
    out = rec.to_dict()
    out["grad_norm"] = _finite(out["grad_norm"])
    out["event"] = "trial"
    if args.params_out:
        written = [dataio.save_params(args.params_out, rec.params, force=args.force)]
        _manifest("train", {"data": str(args.data), "activation": spec.label, "k": k,
                            "init": args.init, "train_v": train_v,
                            "gd": asdict(_gd_config(args))},
                  args.seed, written, args.params_out, args.force)
        out["params_path"] = str(args.params_out)
    if spec.kind == "quadratic" and rec.params is not None:
        cert = network.quadratic_global_certificate(rec.params, data)
        out["is_global"] = cert.is_global
    _emit(out)


def cmd_verify(args):
    data = dataio.load_dataset(args.data)
    params = dataio.load_params(args.params)
    spec = args.activation or (data.planted.activation if data.planted is not None else None)
    if spec is None:
        raise LandscapeError("--activation is required for datasets without planted weights")
    rep = optimizer.classify_point(params, data, spec, args.eps_g, args.eps_h, train_v=args.train_v)
    out = {"event": "verify", "loss": rep.loss_value, "grad_norm": rep.grad_norm,
           "min_hessian_eig": rep.min_hessian_eig, "is_approx_min": rep.is_approx_min,
           "thm2_rhs": rep.thm2_rhs}
    if spec.kind == "quadratic":
        cert = network.quadratic_global_certificate(params, data)
        out["is_global"] = cert.is_global
        out["residual_matrix_norm"] = cert.residual_matrix_norm
        if not cert.is_global:
            direction = network.negative_curvature_direction(params, data)
            out["negative_curvature"] = {"reason": direction.reason,
                                         "curvature": _finite(direction.curvature)}
    _emit(out)


def _write_table_outputs(table, args, command, params):
    written = []
    if args.out:
        written.append(dataio.save_table(args.out, table, force=args.force))
        fit_path = args.fit_out or dataio.sibling(args.out, ".fit.json")
        dat_path = args.dat_out or dataio.sibling(args.out, ".dat")
        if table.fit is not None:
            written.append(dataio.save_fit(fit_path, table.fit, force=args.force))
        written.append(dataio.save_dat(dat_path, table, force=args.force))
        _manifest(command, params, None, written, args.out, args.force)
    return written


def _fit_record(fit):
    return None if fit is None else dataio.fit_to_dict(fit)


def cmd_sweep(args):
    raw = dataio.load_json(args.config)
    try:
        cfg = SweepConfig.from_dict(raw)
    except TypeError as exc:
        raise LandscapeError(f"bad sweep config: {exc}") from None
    table = landscape.spurious_minima_sweep(cfg, workers=args.workers)
    for r in table.rows:
        _emit({"event": "sweep_row", "param": r.param, "successes": r.successes,
               "trials": r.trials, "probability": r.probability,
               "outcomes": table.outcomes.get(r.param, {})})
    _write_table_outputs(table, args, "landscape sweep", cfg.to_dict())
    _emit({"event": "fit", **(_fit_record(table.fit) or {})})


def cmd_fit_logistic(args):
    table = dataio.load_table(args.results)
    table.fit = landscape.logistic_fit(table.points())
    if args.out:
        dataio.save_fit(args.out, table.fit, force=args.force)
    _emit({"event": "fit", **dataio.fit_to_dict(table.fit)})


def cmd_verify_xkrx(args):
    for d in range(1, args.max_d + 1):
        for n in range(1, d * (d + 1) // 2 + 1):
            rc = landscape.xkrx_rank_check(landscape.symmetric_pair_design(d, n))
            if not rc.full_rank:
                _emit({"event": "xkrx", "design": "pairs", "d": d, "n": n, "full_rank": False})
    _emit({"event": "xkrx_design_done", "max_d": args.max_d})
    failures = 0
    for t in range(args.trials):
        s = Stream(args.seed, "xkrx", t)
        n = args.d + int(s.integers(args.d * (args.d + 1) // 2 - args.d + 1))
        rc = landscape.xkrx_rank_check(s.spawn("X").normal((args.d, n)))
        failures += not rc.full_rank
    _emit({"event": "xkrx_gaussian", "d": args.d, "trials": args.trials, "failures": failures})


def _spectrum(args):
    reports = landscape.jacobian_spectrum_check(args.trials, args.d, args.k, args.n,
                                                args.activation, args.seed)
    lower = [r.lower_ratio for r in reports]
    upper = [r.upper_ratio for r in reports]
    out = {"event": "spectrum", "trials": len(reports), "d": args.d, "k": args.k, "n": args.n,
           "activation": args.activation.label,
           "lower_ratio_min": min(lower), "lower_ratio_max": max(lower),
           "upper_ratio_min": min(upper), "upper_ratio_max": max(upper),
           "class_b_lower_min": min(r.class_b_lower_ratio for r in reports),
           "lower_positive": all(x > 0 for x in lower),
           "above_floor": min(lower) >= landscape.SPECTRUM_LOWER_FLOOR,
           "below_ceiling": max(upper) <= landscape.SPECTRUM_UPPER_CEILING}
    _emit(out)


def cmd_verify_prlemma(args):
    A = np.eye(args.d)
    for mult in args.multipliers:
        n = int(math.ceil(mult * args.d * math.log(args.d)))
        st = landscape.prlemma_check(A, n, args.trials, args.seed)
        _emit({"event": "prlemma", "d": args.d, "n": n, "mean_ratio": st.mean,
               "max_ratio": st.max, "mean_nuclear_ratio": float(np.mean(st.nuclear_ratios))})


def cmd_verify_cov(args):
    for mult in args.multipliers:
        n = int(math.ceil(mult * args.d * math.log(args.d)))
        st = landscape.sample_covariance_check(args.d, n, args.trials, args.seed)
        _emit({"event": "covariance", "d": args.d, "n": n, "mean_deviation": st.mean,
               "max_deviation": st.max})


def cmd_calibrate(args):
    result = landscape.calibrate_constants(seed=args.seed, trials=args.trials)
    if args.out:
        dataio.save_json(args.out, result, force=args.force)
    _emit({"event": "calibration", **result})


def _table_out_args(p):
    p.add_argument("--out", help="results CSV (param,successes,trials,probability)")
    p.add_argument("--fit-out", help="fit JSON path (default: next to --out)")
    p.add_argument("--dat-out", help="gnuplot .dat path (default: next to --out)")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")


def _spectrum_args(p):
    p.add_argument("--d", type=int, default=8, help="input dimension (default 8)")
    p.add_argument("--k", type=int, default=8, help="hidden units (default 8)")
    p.add_argument("--n", type=int, default=32, help="samples (default 32)")
    p.add_argument("--trials", type=int, default=50, help="number of draws (default 50)")
    p.add_argument("--activation", type=_activation, default=parse_activation("softplus:10"),
                   help="activation (default softplus:10)")
    p.add_argument("--seed", type=int, default=1, help="master seed (default 1)")


def _concentration_args(p):
    p.add_argument("--d", type=int, default=6, help="dimension (default 6)")
    p.add_argument("--trials", type=int, default=20, help="draws per n (default 20)")
    p.add_argument("--multipliers", type=float, nargs="+", default=[20, 80, 320],
                   help="n = m * d * log d for each m (default 20 80 320)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="shallow-landscape",
        description="Landscape analysis and training of one-hidden-layer networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a planted or random-label dataset")
    p.add_argument("--d", type=int, required=True, help="input dimension")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--k", type=int, default=1, help="planted hidden units (default 1)")
    p.add_argument("--labels", choices=("planted", "random"), default="planted",
                   help="planted network labels or N(0,1) labels (default planted)")
    p.add_argument("--activation", default="quad",
                   help="quad, softplus:B, sigmoid:B, erf or tanh (default quad)")
    p.add_argument("--v-star", type=_v_star, default={"v_star_kind": "all_one"},
                   help="one, nu:X, mixed:P,M or custom:a,b,... (default one)")
    p.add_argument("--bounds", type=_bounds, default=None,
                   help="v_min,v_max,w_min,w_max for bounded planted weights")
    p.add_argument("--require-sign-counts", action="store_true",
                   help="with mixed:P,M require P >= d and M >= d")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--out", required=True, help="dataset CSV path")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="run gradient descent on a dataset")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--activation", type=_activation, default=None,
                   help="activation (default: the planted one)")
    p.add_argument("--k", type=int, default=0, help="hidden units (default: planted k)")
    p.add_argument("--init", choices=("random", "near-planted"), default="random",
                   help="initialization (default random)")
    p.add_argument("--train-v", type=_bool, default=True, help="update v (default true)")
    p.add_argument("--fixed-v", type=float, default=None,
                   help="hold v at this constant value and train W only")
    p.add_argument("--seed", type=int, default=0, help="initialization seed (default 0)")
    p.add_argument("--params-out", help="write final parameters to this CSV")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    _gd_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="classify a parameter point on a dataset")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--params", required=True, help="parameter CSV")
    p.add_argument("--activation", type=_activation, default=None,
                   help="activation (default: the planted one)")
    p.add_argument("--eps-g", type=float, default=1e-6, help="gradient tolerance (default 1e-6)")
    p.add_argument("--eps-h", type=float, default=1e-6, help="curvature tolerance (default 1e-6)")
    p.add_argument("--train-v", type=_bool, default=True,
                   help="include v in the derivatives (default true)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("landscape", help="phase-transition sweeps and numerical checks")
    lsub = p.add_subparsers(dest="landscape_command", required=True)
    q = lsub.add_parser("sweep", help="run a no-spurious-minima sweep from a JSON config")
    q.add_argument("--config", required=True, help="sweep config JSON")
    q.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default from {landscape.THREADS_ENV} or 1)")
    _table_out_args(q)
    q.set_defaults(func=cmd_sweep)
    q = lsub.add_parser("verify", help="spectral and concentration checks")
    vsub = q.add_subparsers(dest="check", required=True)
    r = vsub.add_parser("xkrx", help="rank of the Khatri-Rao square of the data")
    r.add_argument("--max-d", type=int, default=8, help="largest d for the pair design (default 8)")
    r.add_argument("--d", type=int, default=6, help="dimension of the Gaussian draws (default 6)")
    r.add_argument("--trials", type=int, default=100, help="Gaussian draws (default 100)")
    r.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    r.set_defaults(func=cmd_verify_xkrx)
    r = vsub.add_parser("spectrum", help="Jacobian singular-value ratios")
    _spectrum_args(r)
    r.set_defaults(func=_spectrum)
    r = vsub.add_parser("prlemma", help="fourth-moment estimator deviation")
    _concentration_args(r)
    r.set_defaults(func=cmd_verify_prlemma)
    r = vsub.add_parser("cov", help="sample covariance deviation")
    _concentration_args(r)
    r.set_defaults(func=cmd_verify_cov)
    q = lsub.add_parser("fit-logistic", help="fit a logistic curve to a results CSV")
    q.add_argument("results", help="results CSV")
    q.add_argument("--out", help="write the fit JSON here")
    q.add_argument("--force", action="store_true", help="overwrite existing outputs")
    q.set_defaults(func=cmd_fit_logistic)

    p = sub.add_parser("spectrum-check", help="Jacobian singular-value ratios")
    _spectrum_args(p)
    p.set_defaults(func=_spectrum)

    p = sub.add_parser("fit-logistic", help="fit a logistic curve to a results CSV")
    p.add_argument("results", help="results CSV")
    p.add_argument("--out", help="write the fit JSON here")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.set_defaults(func=cmd_fit_logistic)

    p = sub.add_parser("calibrate", help="recompute the calibrated constants and regression bounds")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--trials", type=int, default=250, help="spectrum draws (default 250)")
    p.add_argument("--out", help="write the calibration JSON here")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (LandscapeError, FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
