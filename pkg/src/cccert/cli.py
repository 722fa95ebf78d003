"""Command-line front end.

Subcommands: ``certify`` runs the bound calculation (optionally with the
Clopper-Pearson baseline and grid robust accuracy) over a dataset and
writes report files; ``lab`` emits the confidence-bound table, error-
estimate curves and FFT densities; ``report`` merges existing report JSON
files into comparison curves.  All outputs are files; progress goes to
stderr only.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, concentration, metrics
from .classifier import BridgeClassifier, load_weights
from .core import CertConfig, default_t_grid
from .data import load_cifar10_bin, load_mnist_idx, subset, synthetic_dataset
from .engine import TAG_CP, certify_dataset, substream
from .errors import CCError, NumericError
from .transforms import (AwgnSpec, BrightnessSpec, CompositionSpec, ContrastSpec,
                         GaussianBlurSpec, RotationSpec, ScaleSpec, TranslationSpec,
                         spec_to_dict)

TRANSFORM_KINDS = "rotation, translation, scale, brightness, contrast, blur, awgn, compose(...)"


def log(msg: str) -> None:
    print(msg, file=sys.stderr)


def parse_transform(text: str, width: int):
    """Parse ``kind:lo:hi`` / ``kind:value`` / ``compose(a,b,...)`` syntax."""
    text = text.strip()
    if text.startswith("compose(") and text.endswith(")"):
        inner = text[len("compose("):-1]
        parts, depth, cur = [], 0, []
        for ch in inner:
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
            if ch == "," and depth == 0:
                parts.append("".join(cur))
                cur = []
            else:
                cur.append(ch)
        if cur:
            parts.append("".join(cur))
        return CompositionSpec(tuple(parse_transform(p, width) for p in parts))

    fields = text.split(":")
    kind, args = fields[0], fields[1:]
    try:
        vals = [float(a) for a in args]
    except ValueError:
        raise ValueError(f"non-numeric parameter in transform {text!r}") from None
    if kind == "rotation" and len(vals) == 2:
        return RotationSpec(vals[0], vals[1])
    if kind == "translation" and len(vals) == 1:
        return TranslationSpec(vals[0], width)
    if kind == "scale" and len(vals) == 2:
        return ScaleSpec(vals[0], vals[1])
    if kind == "brightness" and len(vals) == 2:
        return BrightnessSpec(vals[0], vals[1])
    if kind == "contrast" and len(vals) == 2:
        return ContrastSpec(vals[0], vals[1])
    if kind == "blur":
        if len(vals) == 1:
            return GaussianBlurSpec(vals[0])
        if len(vals) == 2 and vals[0] == 0.0:
            return GaussianBlurSpec(vals[1])
    if kind == "awgn" and len(vals) == 1:
        return AwgnSpec(vals[0])
    raise ValueError(f"cannot parse transform {text!r}; known kinds: {TRANSFORM_KINDS}")


def _load_dataset(args):
    if args.dataset == "synthetic":
        dataset, model = synthetic_dataset(args.synthetic_seed, args.synthetic_count,
                                           num_classes=args.synthetic_classes)
        return dataset, model
    if args.dataset == "mnist":
        if not (args.mnist_images and args.mnist_labels):
            raise ValueError("mnist needs --mnist-images and --mnist-labels")
        return load_mnist_idx(args.mnist_images, args.mnist_labels), None
    if args.dataset == "cifar10":
        if not args.cifar_bin:
            raise ValueError("cifar10 needs at least one --cifar-bin")
        return load_cifar10_bin(args.cifar_bin), None
    raise ValueError(f"unknown dataset {args.dataset!r}")


def _load_model(args, matched):
    if args.bridge:
        return BridgeClassifier(args.bridge.split())
    if args.model:
        return load_weights(args.model)
    if matched is not None:
        return matched
    raise ValueError("no model: pass --model weights.ccw1 or --bridge 'command ...'")


def _workers(args) -> int:
    env = os.environ.get("CCCERT_THREADS")
    if env:
        return max(1, int(env))
    return max(1, args.workers)


def cmd_certify(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, matched = _load_dataset(args)
    model = _load_model(args, matched)
    if args.subset and args.subset < len(dataset):
        dataset = subset(dataset, args.subset, args.seed)
    log(f"dataset: {dataset.name} x{len(dataset)} (digest {dataset.digest[:12]}...)")

    width = dataset.images.shape[3]
    spec = parse_transform(args.transform, width)
    config = CertConfig(n_samples=args.n, k_repeats=args.k, delta=args.delta,
                        t_grid=default_t_grid(args.t_min, args.t_max, args.t_count),
                        rng_seed=args.seed)
    eps_grid = tuple(float(e) for e in args.eps_grid.split(","))

    workers = _workers(args)
    log(f"certifying {len(dataset)} samples (n={config.n_samples}, k={config.k_repeats}, "
        f"delta={config.delta}, {len(config.t_grid)} temperatures, workers={workers})")
    done = {"count": 0}

    def progress(_i):
        done["count"] += 1
        if done["count"] % 25 == 0:
            log(f"  {done['count']}/{len(dataset)} samples")

    records = certify_dataset(model, dataset.images, dataset.labels, spec, config,
                              batch_size=args.batch_size, workers=workers,
                              progress=progress)

    cps = None
    if args.cp:
        log(f"clopper-pearson baseline (n={args.cp_n}, alpha={args.cp_alpha})")
        cps = [
            baselines.cp_certify_sample(
                model, dataset.images[i], int(dataset.labels[i]), spec,
                args.cp_n, args.cp_alpha, substream(args.seed, TAG_CP, i),
                vs_label=args.cp_vs_label, batch_size=args.batch_size)
            for i in range(len(dataset))
        ]

    era_value = None
    if args.era:
        log(f"grid robust accuracy (r={args.grid_r})")
        era_value = baselines.era(model, dataset.images, dataset.labels, spec,
                                  args.grid_r, batch_size=args.batch_size,
                                  rng_seed=args.seed)

    samples = [
        metrics.SampleResult(sample_id=i, label=int(dataset.labels[i]), record=records[i],
                             cp=None if cps is None else cps[i])
        for i in range(len(dataset))
    ]
    report = metrics.CertificationReport(config=config, transform=spec_to_dict(spec),
                                         dataset=dataset.meta(), samples=samples,
                                         era_value=era_value, eps_grid=eps_grid)

    (out / "report.json").write_bytes(metrics.emit_report_json(report))
    (out / "report.csv").write_bytes(metrics.emit_report_csv(report))
    curves = report.curves()
    (out / "pca_curve.csv").write_bytes(metrics.emit_curve_csv(curves["epsilon"], curves["pca"]))
    if "cpca" in curves:
        (out / "cpca_curve.csv").write_bytes(
            metrics.emit_curve_csv(curves["epsilon"], curves["cpca"], ("epsilon", "cpca")))
    summary = ", ".join(f"PCA({e:g})={v:.4f}" for e, v in zip(curves["epsilon"], curves["pca"]))
    if era_value is not None:
        summary += f", ERA={era_value:.4f}"
    log(summary)
    log(f"wrote {out / 'report.json'} and companions")
    return 0


YUP_TABLE_ROWS = [
    # label, mu, sigma^2, n, a
    ("uniform_0_1", 0.5, 1.0 / 12.0, 100, 1.0),
    ("uniform_0_1", 0.5, 1.0 / 12.0, 1000, 1.0),
    ("uniform_0_1", 0.5, 1.0 / 12.0, 100, 1.2),
    ("uniform_0_1", 0.5, 1.0 / 12.0, 1000, 1.2),
    ("uniform_0_1", 0.5, 1.0 / 12.0, 100, 1.5),
    ("uniform_0_1", 0.5, 1.0 / 12.0, 1000, 1.5),
    ("normal_0_1", 0.0, 1.0, 1000, 1.0),
    ("normal_0_1", 0.0, 1.0, 100, 1.5),
    ("normal_0_1", 0.0, 1.0, 1000, 1.5),
    ("normal_0_1", 0.0, 1.0, 100, 3.0),
    ("normal_0_1", 0.0, 1.0, 1000, 3.0),
    ("normal_0_3", 0.0, 9.0, 100, 3.0),
    ("normal_0_3", 0.0, 9.0, 1000, 3.0),
    ("normal_0_3", 0.0, 9.0, 100, 9.0),
    ("normal_0_3", 0.0, 9.0, 1000, 9.0),
]


def cmd_lab(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    lines = ["distribution,n,a,t_min,y_min"]
    for label, mu, s2, n, a in YUP_TABLE_ROWS:
        try:
            t_min, y_min = concentration.minimize_yup(
                a, concentration.MomentSummary(mu, s2, n, args.q))
            lines.append(f"{label},{n},{a!r},{t_min!r},{y_min!r}")
        except NumericError as e:
            log(f"row ({label}, n={n}, a={a}) failed: {e}")
            lines.append(f"{label},{n},{a!r},,")
    (out / "yup_table.csv").write_text("\n".join(lines) + "\n")

    moments = concentration.MomentSummary(args.curve_mu, args.curve_sigma2,
                                          args.curve_n, args.q)
    ts = np.exp(np.linspace(np.log(args.curve_t_min), np.log(args.curve_t_max),
                            args.curve_points))
    lines = ["t,y_up"]
    for t in ts:
        lines.append(f"{t!r},{concentration.yup(float(t), args.curve_a, moments)!r}")
    (out / "yup_curve.csv").write_text("\n".join(lines) + "\n")

    ts = np.linspace(args.be_t_min, args.be_t_max, args.be_points)
    lines = ["t,rhs"]
    for t in ts:
        lines.append(f"{t!r},{concentration.berry_esseen_rhs(float(t), args.be_n, args.be_mode)!r}")
    (out / "berry_esseen.csv").write_text("\n".join(lines) + "\n")

    dens = concentration.fft_mean_density(args.fft_t, args.fft_n, args.fft_m)
    lines = ["value,mass,mass_lower,mass_upper"]
    for s, w, lo, hi in zip(dens.support, dens.masses, dens.lower, dens.upper):
        lines.append(f"{s!r},{w!r},{lo!r},{hi!r}")
    (out / "fft_density.csv").write_text("\n".join(lines) + "\n")
    log(f"fft density relative-error bound: {concentration.fft_error_bound(args.fft_t, args.fft_n, args.fft_m)!r}")

    log(f"wrote lab tables under {out}")
    return 0


def cmd_report(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    eps_grid = None
    if args.eps_grid is not None:
        eps_grid = [float(e) for e in args.eps_grid.split(",") if e.strip()]
        if not eps_grid:
            raise ValueError("epsilon grid must be nonempty")

    reports = []
    for path in args.reports:
        try:
            reports.append((Path(path), metrics.parse_report_json(Path(path).read_bytes())))
        except (ValueError, KeyError) as e:
            raise ValueError(f"{path}: not a readable report: {e}") from None

    grid = eps_grid or sorted({e for _, r in reports for e in r.eps_grid})
    if not grid:
        raise ValueError("epsilon grid must be nonempty")

    header = ["epsilon"] + [f"pca_n{r.config.n_samples}_{p.stem}" for p, r in reports]
    rows = [header]
    for e in grid:
        rows.append([repr(float(e))] + [repr(metrics.pca(r.records(), e)) for _, r in reports])
    (out / "pca_curves.csv").write_text("\n".join(",".join(map(str, r)) for r in rows) + "\n")

    cp_reports = [(p, r) for p, r in reports if all(s.cp is not None for s in r.samples)]
    if cp_reports:
        header = ["epsilon"] + [f"cpca_n{r.samples[0].cp.n_trials}_{p.stem}" for p, r in cp_reports]
        rows = [header]
        for e in grid:
            vals = []
            for _, r in cp_reports:
                hits = [s.record.hit for s in r.samples]
                vals.append(repr(metrics.cpca([s.cp for s in r.samples], hits, e)))
            rows.append([repr(float(e))] + vals)
        (out / "cpca_curves.csv").write_text("\n".join(",".join(map(str, r)) for r in rows) + "\n")

    # bound quality versus the number of transform draws, one row per report
    rows = [["n"] + [f"pca_eps{e:g}" for e in grid]]
    for _, r in sorted(reports, key=lambda pr: pr[1].config.n_samples):
        rows.append([str(r.config.n_samples)] + [repr(metrics.pca(r.records(), e)) for e in grid])
    (out / "pca_vs_n.csv").write_text("\n".join(",".join(r) for r in rows) + "\n")

    log(f"wrote merged curves for {len(reports)} report(s) under {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cccert",
        description="Probabilistic certification of black-box classifiers under "
                    "random parametric input transformations.")
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="run the bound calculation over a dataset")
    c.add_argument("--dataset", choices=["synthetic", "mnist", "cifar10"], default="synthetic")
    c.add_argument("--mnist-images")
    c.add_argument("--mnist-labels")
    c.add_argument("--cifar-bin", action="append", default=[])
    c.add_argument("--synthetic-seed", type=int, default=7)
    c.add_argument("--synthetic-count", type=int, default=100)
    c.add_argument("--synthetic-classes", type=int, default=3)
    c.add_argument("--model", help="CCW1 weight file")
    c.add_argument("--bridge", help="adapter command line speaking the wire protocol")
    c.add_argument("--transform", required=True,
                   help=f"e.g. rotation:-10:10 or compose(rotation:-10:10,brightness:-0.4:0.4); "
                        f"kinds: {TRANSFORM_KINDS}")
    c.add_argument("--n", type=int, default=200, help="transform draws per repetition")
    c.add_argument("--k", type=int, default=30, help="repetitions")
    c.add_argument("--delta", type=float, default=0.9)
    c.add_argument("--t-min", type=float, default=1e-4)
    c.add_argument("--t-max", type=float, default=1e4)
    c.add_argument("--t-count", type=int, default=500)
    c.add_argument("--subset", type=int, default=500, help="0 = use the full dataset")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--era", action=argparse.BooleanOptionalAction, default=True)
    c.add_argument("--grid-r", type=int, default=20)
    c.add_argument("--cp", action=argparse.BooleanOptionalAction, default=False)
    c.add_argument("--cp-n", type=int, default=1000)
    c.add_argument("--cp-alpha", type=float, default=0.05)
    c.add_argument("--cp-vs-label", action="store_true",
                   help="count label mismatches instead of prediction changes")
    c.add_argument("--eps-grid", default="1e-10,1e-7,1e-4")
    c.add_argument("--batch-size", type=int, default=256)
    c.add_argument("--workers", type=int, default=1,
                   help="worker threads over samples (CCCERT_THREADS overrides)")
    c.add_argument("--out", default="cccert-out")
    c.set_defaults(func=cmd_certify)

    l = sub.add_parser("lab", help="emit the concentration-bound tables and curves")
    l.add_argument("--q", type=float, default=2.0, help="quantile multiplier")
    l.add_argument("--curve-mu", type=float, default=0.5,
                   help="mean of X for the bound-vs-temperature curve")
    l.add_argument("--curve-sigma2", type=float, default=1.0 / 12.0)
    l.add_argument("--curve-n", type=int, default=100)
    l.add_argument("--curve-a", type=float, default=1.0)
    l.add_argument("--curve-t-min", type=float, default=0.05)
    l.add_argument("--curve-t-max", type=float, default=50.0)
    l.add_argument("--curve-points", type=int, default=200)
    l.add_argument("--be-mode", choices=["paper", "standard"], default="paper")
    l.add_argument("--be-n", type=int, default=100)
    l.add_argument("--be-t-min", type=float, default=0.1)
    l.add_argument("--be-t-max", type=float, default=5.0)
    l.add_argument("--be-points", type=int, default=50)
    l.add_argument("--fft-t", type=float, default=1.0)
    l.add_argument("--fft-n", type=int, default=5)
    l.add_argument("--fft-m", type=int, default=200)
    l.add_argument("--out", default="cccert-lab")
    l.set_defaults(func=cmd_lab)

    r = sub.add_parser("report", help="merge report JSON files into comparison curves")
    r.add_argument("reports", nargs="+")
    r.add_argument("--eps-grid", default=None,
                   help="override the epsilon grid (defaults to the union of the reports')")
    r.add_argument("--out", default="cccert-report")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CCError, ValueError, OSError) as e:
        log(f"error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
