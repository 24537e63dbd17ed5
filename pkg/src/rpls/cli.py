"""Command-line entry point ``rpls``.

Exit codes: 0 success, 1 configuration or input error, 2 runtime failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, glm, gsd, selftrain
from .dataset import DataError, load_csv, make_split

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _cmd_fit(args):
    data = load_csv(args.csv, args.label_column)
    cols = list(range(data.n_features))
    if args.features:
        names = args.features.split(",")
        missing = [n for n in names if n not in data.feature_names]
        if missing:
            raise DataError(f"unknown feature(s) {missing}")
        cols = [data.feature_names.index(n) for n in names]
    keep = data.labels != -1
    spec = glm.ModelSpec(tuple(cols))
    model = glm.fit(data.features[keep], data.labels[keep], spec, ridge=args.ridge, feature_names=data.feature_names)
    out = {
        "columns": spec.column_names(data.feature_names),
        "theta_hat": model.theta_hat.tolist(),
        "log_lik": model.log_lik,
        "converged": model.converged,
        "n_obs": model.n_obs,
        "iterations": model.n_iter,
    }
    print(json.dumps(out, indent=2))


def _cmd_selftrain(args):
    config = bench.ExperimentConfig.from_file(args.config)
    specs = {c.key: c for c in config.criteria}
    if args.criterion not in specs:
        raise bench.ConfigError(f"criterion {args.criterion!r} not in config ({sorted(specs)})")
    data = config.load_data()
    seed = config.base_seed + args.repetition
    split = make_split(data, config.unlabeled_fraction, config.test_fraction, seed=seed)
    loop = config.loop_config(specs[args.criterion])
    loop = selftrain.LoopConfig.from_dict({**loop.to_dict(), "seed": seed})
    trace = selftrain.run(data, split, loop)
    text = trace.to_jsonl()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    metrics = selftrain.evaluate(trace, data, split)
    print(json.dumps(metrics), file=sys.stderr)
    if trace.failure:
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_bench(args):
    config = bench.ExperimentConfig.from_file(args.config)
    report = bench.run_experiment(config, workers=args.workers)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for fmt in args.formats.split(","):
        ext = {"csv": "csv", "curves": "curves.csv", "markdown": "md", "json": "json"}.get(fmt)
        if ext is None:
            raise bench.ConfigError(f"unknown format {fmt!r}")
        bench.emit_report(report, fmt, out / f"report.{ext}")
    sys.stdout.write(bench.render(report, "markdown"))


def _cmd_gsd(args):
    try:
        payload = json.loads(Path(args.instance).read_text(encoding="utf-8"))
        if args.log_scale:
            inst = gsd.DominanceInstance.from_log_utilities(
                np.asarray(payload["utilities"], float), payload.get("weights"), tuple(payload.get("candidates", ()))
            )
        else:
            inst = gsd.DominanceInstance.from_dict(payload)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise bench.ConfigError(f"{args.instance}: {exc}") from None
    if inst.weights.shape[0] > 1:
        verdict = gsd.solution_set_Pi(inst, xi=args.xi, r2=args.r2, solver=args.solver)
    else:
        verdict = gsd.solution_set_pi(inst, xi=args.xi, r2=args.r2, solver=args.solver)
    labels = inst.candidates
    print(json.dumps({"nondominated": [labels[i] for i in sorted(verdict.nondominated)], "audit": verdict.audit},
                     sort_keys=True))


def _cmd_oracle(args):
    from .dataset import generate_binomial
    from .evidence import PriorSpec, ppp_approx, ppp_exact
    from .simplex import DenseSimplex, linprog_highs

    failures = 0
    for seed in range(args.problems):
        data = generate_binomial(8, [1.0], 0.0, seed=seed)
        spec = glm.ModelSpec((0,), include_intercept=False)
        X, y = data.features[:6], data.labels[:6]
        try:
            model = glm.fit(X, y, spec)
        except glm.GLMError:
            continue
        pool = np.linspace(-2, 2, 5)[:, None]
        approx = [ppp_approx(model, x, 1).value for x in pool]
        exact = [ppp_exact(X, y, x, 1, spec, PriorSpec(0, [0.0], 100.0)) for x in pool]
        if int(np.argmax(approx)) != int(np.argmax(exact)):
            failures += 1
            print(f"ppp oracle disagreement on problem {seed}")
    rng = np.random.default_rng(0)
    for _ in range(args.problems):
        n = 4
        A = rng.normal(size=(3, n))
        b = A @ rng.uniform(size=n) + 0.5
        A = np.vstack([A, np.eye(n)])
        b = np.concatenate([b, np.ones(n)])
        c = rng.normal(size=n)
        mine = DenseSimplex(A, b).minimize(c)[0]
        ref = linprog_highs(c, A, b)[0]
        if abs(mine - ref) > 1e-7:
            failures += 1
            print(f"simplex disagrees with HiGHS: {mine} vs {ref}")
    print(json.dumps({"problems": args.problems, "failures": failures}))
    return EXIT_OK if failures == 0 else EXIT_RUNTIME


def build_parser():
    p = argparse.ArgumentParser(prog="rpls", description="Robust pseudo-label selection for self-training.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit one logistic model and print its summary")
    f.add_argument("csv")
    f.add_argument("--label-column", default="label")
    f.add_argument("--features", help="comma-separated feature columns (default: all)")
    f.add_argument("--ridge", type=float, default=0.0)
    f.set_defaults(func=_cmd_fit)

    s = sub.add_parser("selftrain", help="run one self-training loop and write its trace as JSON lines")
    s.add_argument("config", help="experiment config JSON")
    s.add_argument("--criterion", required=True, help="criterion label from the config")
    s.add_argument("--repetition", type=int, default=0)
    s.add_argument("--out", help="trace path (default: stdout)")
    s.set_defaults(func=_cmd_selftrain)

    b = sub.add_parser("bench", help="run an experiment config and write reports")
    b.add_argument("config")
    b.add_argument("--out-dir", default="bench-out")
    b.add_argument("--formats", default="csv,markdown,json")
    b.add_argument("--workers", type=int, default=None, help="worker processes (capped by RPLS_THREADS)")
    b.set_defaults(func=_cmd_bench)

    g = sub.add_parser("gsd", help="print the nondominated candidates of a dominance instance")
    g.add_argument("instance", help="JSON with 'utilities' [cand][state][dim] and optional 'weights' [prior][state]")
    g.add_argument("--log-scale", action="store_true", help="utilities are logarithms")
    g.add_argument("--xi", type=float, default=0.0)
    g.add_argument("--r2", choices=gsd.R2_MODES, default="cover")
    g.add_argument("--solver", choices=gsd.SOLVERS, default="auto")
    g.set_defaults(func=_cmd_gsd)

    o = sub.add_parser("oracle", help="cross-check closed forms against quadrature and HiGHS")
    o.add_argument("--problems", type=int, default=20)
    o.set_defaults(func=_cmd_oracle)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        code = args.func(args)
    except (bench.ConfigError, DataError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
