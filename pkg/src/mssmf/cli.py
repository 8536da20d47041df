"""Command line: synth -> unmix -> eval, plus svd and render utilities.

Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 validation error.
All commands are deterministic for a fixed seed and flag set; the solver's
data-parallel concentration updates honor the MSSMF_THREADS environment
variable (unset means single-threaded).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .initialization import init_all
from .matio import (
    load_matrix,
    quantize_unit,
    read_csv_matrix,
    read_manifest,
    write_csv_matrix,
    write_manifest,
    write_pgm,
    write_raw64,
)
from .metrics import aligned_mse, singular_spectrum
from .model import ValidationError
from .solver import FitConfig, fit
from .synth import assemble_ground_truth, builtin_bases, gen_dataset


def _snr_value(text: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid SNR value: {text!r}") from None
    if np.isnan(val) or (np.isinf(val) and val < 0):
        raise argparse.ArgumentTypeError("SNR must be finite or inf")
    return val


def _dims_value(text: str):
    try:
        dims = tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"dims must be comma-separated integers, got {text!r}"
        ) from None
    if not dims:
        raise argparse.ArgumentTypeError("dims must name at least one layer size")
    return dims


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mssmf",
        description="multilayer simplex-structured unmixing toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic variability scene")
    sp.add_argument("--bases", default="builtin",
                    help="'builtin' or path to a CSV of base spectra (bands x bases)")
    sp.add_argument("--bands", type=int, default=198,
                    help="band count for the builtin bases")
    sp.add_argument("--variants", type=int, default=200,
                    help="variant pool size per base")
    sp.add_argument("--pick", type=int, default=10,
                    help="variants kept per base in the ground truth")
    sp.add_argument("--gamma", type=float, default=0.25,
                    help="variability amplitude in [0, 1)")
    sp.add_argument("--knots", type=int, default=10,
                    help="knot count of the smooth multiplicative field")
    sp.add_argument("--pixels", type=int, required=True)
    sp.add_argument("--snr-db", type=_snr_value, required=True,
                    help="target SNR in dB; 'inf' for noiseless")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="output directory")

    up = sub.add_parser("unmix", help="fit the multilayer model to a scene")
    up.add_argument("--input", required=True, help="pixel matrix (bands x pixels)")
    up.add_argument("--dims", type=_dims_value, required=True,
                    help="layer sizes, e.g. 6,18,30")
    up.add_argument("--iters", type=int, default=100)
    up.add_argument("--beta-steps", type=int, default=10,
                    help="concentration ascent steps per outer iteration")
    up.add_argument("--apg-passes", type=int, default=100,
                    help="inner FISTA passes per factor per iteration")
    up.add_argument("--tol", type=float, default=0.0,
                    help="relative bound-improvement stop; 0 runs all iterations")
    up.add_argument("--seed", type=int, default=0)
    up.add_argument("--out", required=True, help="output directory")

    ep = sub.add_parser("eval", help="score an estimate against ground truth")
    ep.add_argument("--est", help="estimated endmember matrix file")
    ep.add_argument("--truth", help="ground-truth endmember matrix file")
    ep.add_argument("--snr-db", type=float, default=None,
                    help="optional tag recorded for later aggregation")
    ep.add_argument("--runs-dir", default=None,
                    help="aggregate all eval manifests found under this directory")
    ep.add_argument("--out", required=True, help="output manifest path (.json)")

    vp = sub.add_parser("svd", help="write the singular values of a matrix")
    vp.add_argument("--input", required=True)
    vp.add_argument("--out", required=True, help="output CSV, one value per line")

    rp = sub.add_parser("render", help="write abundance maps as PGM images")
    rp.add_argument("--abundances", required=True,
                    help="abundance matrix file (components x pixels)")
    rp.add_argument("--width", type=int, required=True)
    rp.add_argument("--height", type=int, required=True)
    rp.add_argument("--groups", default=None,
                    help="CSV of per-component group labels; maps are summed per group")
    rp.add_argument("--out", required=True, help="output directory")
    return parser


def _cmd_synth(args, argv) -> int:
    if args.bases == "builtin":
        bases = builtin_bases(args.bands)
    else:
        bases = read_csv_matrix(args.bases)
    rng = np.random.default_rng(args.seed)
    truth, labels = assemble_ground_truth(
        bases,
        variants_per_base=args.variants,
        pick=args.pick,
        gamma=args.gamma,
        knots=args.knots,
        seed=rng,
    )
    bundle = gen_dataset(truth, args.pixels, args.snr_db, seed=rng)
    out = Path(args.out)
    os.makedirs(out, exist_ok=True)
    write_raw64(out / "data.raw64", bundle.pixels.data)
    write_raw64(out / "endmembers_true.raw64", truth)
    write_raw64(out / "abundances_true.raw64", bundle.abundances)
    write_csv_matrix(out / "labels.csv", labels[None, :].astype(np.float64))
    manifest = {
        "kind": "synth",
        "version": __version__,
        "argv": argv,
        "seed": args.seed,
        "snr_db": args.snr_db,
        "sigma2": bundle.sigma2,
        "dims": {
            "bands": int(truth.shape[0]),
            "expanded": int(truth.shape[1]),
            "pixels": int(args.pixels),
        },
        "config": {
            "bases": args.bases,
            "variants": args.variants,
            "pick": args.pick,
            "gamma": args.gamma,
            "knots": args.knots,
        },
        "outputs": {
            "data": "data.raw64",
            "endmembers_true": "endmembers_true.raw64",
            "abundances_true": "abundances_true.raw64",
            "labels": "labels.csv",
        },
    }
    write_manifest(out / "manifest.json", manifest)
    return 0


def _cmd_unmix(args, argv) -> int:
    y = load_matrix(args.input)
    start = init_all(y, args.dims, seed=args.seed)
    config = FitConfig(
        max_outer_iters=args.iters,
        beta_steps_per_outer=args.beta_steps,
        apg_passes_per_factor=args.apg_passes,
        rel_elbo_tol=args.tol,
        seed=args.seed,
    )
    result = fit(y, start.stack, start.posterior, config)
    out = Path(args.out)
    os.makedirs(out, exist_ok=True)
    stack = result.stack
    write_raw64(out / "basis.raw64", stack.basis)
    mixer_names = []
    for idx, mixer in enumerate(stack.mixers, start=1):
        name = f"mixer_{idx}.raw64"
        write_raw64(out / name, mixer)
        mixer_names.append(name)
    expanded = stack.basis
    for mixer in stack.mixers:
        expanded = expanded @ mixer
    write_raw64(out / "expanded.raw64", expanded)
    write_raw64(out / "concentration.raw64", result.posterior.concentration)
    write_raw64(out / "abundances.raw64", result.abundances)
    trace = result.trace
    iters_run = len(trace)
    rows = np.column_stack(
        [np.arange(1, iters_run + 1, dtype=np.float64), trace.elbo, trace.sigma2, trace.millis]
    )
    write_csv_matrix(out / "trace.csv", rows)
    manifest = {
        "kind": "unmix",
        "version": __version__,
        "argv": argv,
        "seed": args.seed,
        "input": args.input,
        "dims": {
            "bands": int(y.shape[0]),
            "layers": list(args.dims),
            "pixels": int(y.shape[1]),
        },
        "config": {
            "iters": args.iters,
            "beta_steps": args.beta_steps,
            "apg_passes": args.apg_passes,
            "tol": args.tol,
        },
        "trace": {
            "elbo": [float(v) for v in trace.elbo],
            "sigma2": [float(v) for v in trace.sigma2],
        },
        "iterations_run": iters_run,
        "stop_reason": trace.stop_reason,
        "final_elbo": result.elbo,
        "final_sigma2": stack.noise_var,
        "outputs": {
            "basis": "basis.raw64",
            "mixers": mixer_names,
            "expanded": "expanded.raw64",
            "concentration": "concentration.raw64",
            "abundances": "abundances.raw64",
            "trace": "trace.csv",
        },
    }
    write_manifest(out / "manifest.json", manifest)
    return 0


def _aggregate_evals(runs_dir: str):
    groups = {}
    for path in sorted(Path(runs_dir).rglob("*.json")):
        try:
            doc = read_manifest(path)
        except ValidationError:
            continue
        if doc.get("kind") != "eval" or doc.get("snr_db") is None:
            continue
        groups.setdefault(float(doc["snr_db"]), []).append(float(doc["mse"]))
    if not groups:
        raise ValidationError(f"no eval manifests with an snr_db tag under {runs_dir}")
    rows = []
    for snr in sorted(groups):
        vals = np.asarray(groups[snr])
        std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        rows.append(
            {
                "snr_db": snr,
                "mean_mse": float(vals.mean()),
                "std_mse": std,
                "runs": int(vals.size),
            }
        )
    return rows


def _cmd_eval(args, argv) -> int:
    out = str(args.out)
    if args.runs_dir is not None:
        rows = _aggregate_evals(args.runs_dir)
        manifest = {
            "kind": "eval_aggregate",
            "version": __version__,
            "argv": argv,
            "runs_dir": args.runs_dir,
            "groups": rows,
        }
        write_manifest(out, manifest)
        csv_path = out[: -len(".json")] + ".csv" if out.endswith(".json") else out + ".csv"
        table = np.array([[r["snr_db"], r["mean_mse"], r["std_mse"]] for r in rows])
        write_csv_matrix(csv_path, table)
        return 0
    if args.est is None or args.truth is None:
        print("error: eval needs --est and --truth (or --runs-dir)", file=sys.stderr)
        return 2
    est = load_matrix(args.est)
    truth = load_matrix(args.truth)
    result = aligned_mse(est, truth)
    manifest = {
        "kind": "eval",
        "version": __version__,
        "argv": argv,
        "est": args.est,
        "truth": args.truth,
        "mse": result.mse,
        "permutation": [int(j) for j in result.permutation],
    }
    if args.snr_db is not None:
        manifest["snr_db"] = args.snr_db
    write_manifest(out, manifest)
    return 0


def _cmd_svd(args, argv) -> int:
    mat = load_matrix(args.input)
    svals = singular_spectrum(mat)
    write_csv_matrix(args.out, svals[:, None])
    return 0


def _cmd_render(args, argv) -> int:
    ab = load_matrix(args.abundances)
    k, n = ab.shape
    if args.width < 1 or args.height < 1:
        raise ValidationError("width and height must be positive")
    if args.width * args.height != n:
        raise ValidationError(
            f"image {args.width}x{args.height} does not cover {n} pixels"
        )
    out = Path(args.out)
    os.makedirs(out, exist_ok=True)
    if args.groups is not None:
        labels = read_csv_matrix(args.groups).ravel()
        if labels.size != k:
            raise ValidationError(
                f"{labels.size} group labels for {k} abundance rows"
            )
        labels = labels.astype(int)
        for lab in np.unique(labels):
            img = ab[labels == lab].sum(axis=0)
            write_pgm(out / f"group_{lab}.pgm", args.width, args.height, quantize_unit(img))
    else:
        for j in range(k):
            write_pgm(out / f"component_{j:02d}.pgm", args.width, args.height, quantize_unit(ab[j]))
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "unmix": _cmd_unmix,
    "eval": _cmd_eval,
    "svd": _cmd_svd,
    "render": _cmd_render,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args, argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
