"""``ardbnn`` command line: train, evaluate, ard-report, predict.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
"""
import argparse
import csv
import json
import logging
import os
import sys
import tempfile
import time

import numpy as np

from .artifact import ModelArtifact, load_artifact, save_artifact
from .data import TAIWAN_ID, apply_min_max, fit_min_max, load_taiwan_csv, read_feature_csv, split_70_30
from .estimators import HMCClassifier, LaplaceClassifier
from .exceptions import (ArtifactError, DataParseError, EmptyInputError, InputShapeError,
                         NumericalError, UnsupportedModelError)
from .metrics import DEFAULT_THRESHOLD, confusion_matrix, roc_curve
from .network import DEFAULT_HIDDEN

logger = logging.getLogger("ardbnn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
ARTIFACT_NAME = "model.artifact"

# flag dest -> variants that accept it
_HMC_FLAGS = ("step_size", "leapfrog", "samples", "burn_in", "thinning", "chains")
_ARD_HMC_FLAGS = ("hyper_update_every", "gamma_a0", "gamma_b0")
_LAPLACE_FLAGS = ("max_outer_loops", "alpha_tolerance", "learning_rate", "n_mc")
_ALLOWED = {
    "hmc": set(_HMC_FLAGS),
    "hmc-ard": set(_HMC_FLAGS) | set(_ARD_HMC_FLAGS),
    "laplace-ard": set(_LAPLACE_FLAGS),
}
_ALL_VARIANT_FLAGS = _HMC_FLAGS + _ARD_HMC_FLAGS + _LAPLACE_FLAGS


class UsageError(Exception):
    """Invalid combination of arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _flag(dest):
    return "--" + dest.replace("_", "-")


def build_parser():
    parser = _Parser(prog="ardbnn", description="Bayesian MLP credit default models with ARD.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    tr = sub.add_parser("train", help="fit a model variant and write an artifact")
    tr.add_argument("--data", required=True, help="UCI-format credit card CSV")
    tr.add_argument("--variant", required=True, choices=sorted(_ALLOWED))
    tr.add_argument("--seed", type=int, default=0, help="split, initialisation and sampler seed")
    tr.add_argument("--hidden", type=int, default=DEFAULT_HIDDEN, help="hidden units")
    tr.add_argument("--out", required=True, help="output directory")
    tr.add_argument("--step-size", type=float, help="fixed leapfrog step (default: tuned)")
    tr.add_argument("--leapfrog", type=int, help="leapfrog steps per trajectory (50)")
    tr.add_argument("--samples", type=int, help="kept samples per chain (2000)")
    tr.add_argument("--burn-in", type=int, help="burn-in iterations (1000)")
    tr.add_argument("--thinning", type=int, help="keep every k-th sample (1)")
    tr.add_argument("--chains", type=int, help="independent chains, run concurrently (1)")
    tr.add_argument("--hyper-update-every", type=int, help="iterations between alpha updates (1)")
    tr.add_argument("--gamma-a0", type=float, help="Gamma hyperprior shape (1.0)")
    tr.add_argument("--gamma-b0", type=float, help="Gamma hyperprior rate (0.1)")
    tr.add_argument("--max-outer-loops", type=int, help="evidence updates (100)")
    tr.add_argument("--alpha-tolerance", type=float, help="alpha convergence tolerance (1e-3)")
    tr.add_argument("--learning-rate", type=float, help="initial descent step (1e-3)")
    tr.add_argument("--n-mc", type=int, help="Gaussian draws per prediction (500)")

    ev = sub.add_parser("evaluate", help="score an artifact on its held-out split")
    ev.add_argument("artifact", help="artifact file or training output directory")
    ev.add_argument("--data", required=True)
    ev.add_argument("--seed", type=int, help="split seed (default: the artifact's)")
    ev.add_argument("--allow-reselection", action="store_true",
                    help="accept a split seed different from the training one")
    ev.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    ev.add_argument("--n-mc", type=int, help="Gaussian draws (laplace-ard only)")
    ev.add_argument("--out", help="output directory (default: the artifact's)")

    ar = sub.add_parser("ard-report", help="write ARD relevance tables")
    ar.add_argument("artifact")
    ar.add_argument("--out", help="output directory (default: the artifact's)")

    pr = sub.add_parser("predict", help="predictive mean, std and 5/95 percentiles per row")
    pr.add_argument("artifact")
    pr.add_argument("--data", required=True, help="CSV with the artifact's feature columns")
    pr.add_argument("--n-mc", type=int, help="Gaussian draws (laplace-ard only)")
    pr.add_argument("--out", default="predictions.csv", help="output CSV path")
    return parser


# ---------------------------------------------------------------- helpers

def _atomic_write(path, write):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path, obj):
    _atomic_write(path, lambda fh: fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n"))


def _write_csv(path, header, rows):
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    _atomic_write(path, write)


def _g(x):
    return "%.17g" % x


def _resolve_artifact(path):
    if os.path.isdir(path):
        path = os.path.join(path, ARTIFACT_NAME)
    return path, load_artifact(path)


def _out_dir(args, artifact_path):
    out = args.out or os.path.dirname(os.path.abspath(artifact_path))
    os.makedirs(out, exist_ok=True)
    return out


def _set_n_mc(art, n_mc):
    if n_mc is None:
        return
    if not isinstance(art.estimator, LaplaceClassifier):
        raise UsageError("--n-mc applies to laplace-ard artifacts only")
    if n_mc < 1:
        raise UsageError("--n-mc must be >= 1")
    art.estimator.set_params(n_mc=n_mc)


def _build_estimator(args):
    given = {d for d in _ALL_VARIANT_FLAGS if getattr(args, d) is not None}
    bad = sorted(given - _ALLOWED[args.variant])
    if bad:
        raise UsageError(f"{', '.join(_flag(d) for d in bad)} not valid for --variant {args.variant}")
    if args.hidden < 1:
        raise UsageError("--hidden must be >= 1")

    def opt(dest, default):
        v = getattr(args, dest)
        return default if v is None else v

    if args.variant == "laplace-ard":
        return LaplaceClassifier(
            n_hidden=args.hidden, ard=True,
            max_outer_loops=opt("max_outer_loops", 100),
            alpha_tolerance=opt("alpha_tolerance", 1e-3),
            learning_rate=opt("learning_rate", 1e-3),
            n_mc=opt("n_mc", 500), random_state=args.seed,
        )
    chains = opt("chains", 1)
    return HMCClassifier(
        n_hidden=args.hidden, ard=args.variant == "hmc-ard",
        step_size=args.step_size, n_leapfrog=opt("leapfrog", 50),
        n_samples=opt("samples", 2000), burn_in=opt("burn_in", 1000),
        thinning=opt("thinning", 1), hyper_update_every=opt("hyper_update_every", 1),
        gamma_a0=opt("gamma_a0", 1.0), gamma_b0=opt("gamma_b0", 0.1),
        n_chains=chains, n_jobs=chains if chains > 1 else None, random_state=args.seed,
    )


# ---------------------------------------------------------------- commands

def cmd_train(args):
    try:
        est = _build_estimator(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "train.log")
    handler = logging.FileHandler(log_path, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logging.getLogger("ardbnn").addHandler(handler)
    try:
        start = time.perf_counter()
        data = load_taiwan_csv(args.data)
        train, test = split_70_30(data, args.seed)
        scaler = fit_min_max(train)
        train_scaled = apply_min_max(scaler, train)
        logger.info("training %s on %d rows (%d held out)", args.variant, train.n_rows, test.n_rows)
        try:
            est.fit(train_scaled.features, train_scaled.labels, feature_names=train.feature_names)
        except ValueError as exc:
            if isinstance(exc, (DataParseError, InputShapeError, EmptyInputError)):
                raise
            raise UsageError(str(exc)) from exc
        wall = time.perf_counter() - start
        config = {k: v for k, v in est.get_params().items() if k != "n_jobs"}
        summary = {
            "variant": args.variant,
            "seed": args.seed,
            "data": os.path.basename(args.data),
            "config": config,
            "n_train": train.n_rows,
            "n_test": test.n_rows,
            "wall_time_seconds": wall,
        }
        if isinstance(est, HMCClassifier):
            summary["acceptance_rate"] = est.chain_.diagnostics.acceptance_rate
            summary["diagnostics"] = est.chain_.diagnostics.as_dict()
            summary["chains"] = [d.as_dict() for d in est.diagnostics_]
            summary["n_kept_samples"] = len(est.chain_)
        else:
            summary["outer_loops"] = est.fit_.n_outer_loops
            summary["converged"] = bool(est.fit_.converged)
            summary["alpha"] = est.fit_.hyper.alpha.tolist()
        art = ModelArtifact(args.variant, est, scaler, args.seed,
                            meta={"config": config, "n_train": train.n_rows})
        save_artifact(art, os.path.join(args.out, ARTIFACT_NAME))
        _write_json(os.path.join(args.out, "summary.json"), summary)
        logger.info("done in %.1f s", wall)
    finally:
        logging.getLogger("ardbnn").removeHandler(handler)
        handler.close()
    return EXIT_OK


def cmd_evaluate(args):
    path, art = _resolve_artifact(args.artifact)
    _set_n_mc(art, args.n_mc)
    seed = art.split_seed if args.seed is None else args.seed
    if seed != art.split_seed and not args.allow_reselection:
        raise UsageError(
            f"split seed {seed} differs from the training seed {art.split_seed}; the test rows "
            "would overlap the training rows (pass --allow-reselection to override)"
        )
    if not 0.0 <= args.threshold <= 1.0:
        raise UsageError("--threshold must lie in [0, 1]")
    data = load_taiwan_csv(args.data)
    if tuple(data.feature_names) != tuple(art.feature_names):
        raise InputShapeError("data columns do not match the artifact's features")
    _, test = split_70_30(data, seed)
    scores = art.predict_distribution(test.features).mean
    roc = roc_curve(scores, test.labels)
    cm = confusion_matrix(scores, test.labels, args.threshold)
    report = {
        "variant": art.variant,
        "auc": roc.auc,
        "threshold": args.threshold,
        "n_test": test.n_rows,
        "confusion": cm.as_dict(),
        "split_seed": seed,
        "reselected": seed != art.split_seed,
    }
    out = _out_dir(args, path)
    _write_json(os.path.join(out, "eval.json"), report)
    _write_csv(os.path.join(out, "roc_points.csv"), ["fpr", "tpr"],
               [(_g(f), _g(t)) for f, t in roc.points])
    print(f"auc={roc.auc:.4f} n_test={test.n_rows}")
    return EXIT_OK


def cmd_ard_report(args):
    path, art = _resolve_artifact(args.artifact)
    rep = art.estimator.relevance_report()
    out = _out_dir(args, path)
    _write_csv(os.path.join(out, "relevance.csv"), ["feature", "relevance", "rank"],
               [(f, _g(r), k) for f, r, k in zip(rep.features, rep.relevance, rep.rank)])
    _write_json(os.path.join(out, "relevance.json"), {"variant": art.variant, **rep.as_dict()})
    if isinstance(art.estimator, HMCClassifier):
        est = art.estimator
        k = est.grouping_.n_input_classes
        variance = 1.0 / est.chain_.alpha[:, :k]
        rows = [[i, int(c)] + [_g(v) for v in row]
                for i, (c, row) in enumerate(zip(est.chain_id_, variance))]
        _write_csv(os.path.join(out, "samples_variance.csv"),
                   ["sample", "chain"] + list(est.grouping_.class_labels[:k]), rows)
    for i, (f, r) in enumerate(zip(rep.features, rep.relevance), 1):
        print(f"{i:2d} {f:<10s} {r:.6g}")
    return EXIT_OK


def cmd_predict(args):
    _, art = _resolve_artifact(args.artifact)
    _set_n_mc(art, args.n_mc)
    frame, X = read_feature_csv(args.data, art.feature_names)
    if X.shape[0] == 0:
        raise EmptyInputError(f"{args.data}: no rows to score")
    summary = art.predict_distribution(X)
    p05, p95 = summary.percentile(5), summary.percentile(95)
    outside = art.scaler.out_of_range(X)
    names = art.feature_names
    has_id = TAIWAN_ID in frame.columns
    header = ["row"] + ([TAIWAN_ID] if has_id else []) + [
        "mean_probability", "std", "p05", "p95", "warnings"]
    rows = []
    for i in range(X.shape[0]):
        flagged = [names[j] for j in np.flatnonzero(outside[i])]
        warn = ("out_of_range:" + ";".join(flagged)) if flagged else ""
        rows.append([i] + ([frame[TAIWAN_ID].iloc[i]] if has_id else []) + [
            _g(summary.mean[i]), _g(summary.std[i]), _g(p05[i]), _g(p95[i]), warn])
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(args.out, header, rows)
    return EXIT_OK


_COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate,
             "ard-report": cmd_ard_report, "predict": cmd_predict}


def main(argv=None):
    args = build_parser().parse_args(argv)
    pkg_logger = logging.getLogger("ardbnn")
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if args.verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    pkg_logger.addHandler(console)
    pkg_logger.setLevel(logging.INFO)
    pkg_logger.propagate = False
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, UnsupportedModelError) as exc:
        print(f"ardbnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"ardbnn: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ArtifactError, DataParseError, InputShapeError, EmptyInputError, OSError) as exc:
        print(f"ardbnn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    finally:
        pkg_logger.removeHandler(console)


if __name__ == "__main__":
    sys.exit(main())
