"""Acceptance suite: one test per exit criterion, each printing a PASS line
with its measured numbers once its assertions hold.

Run with ``pytest tests/test_acceptance.py -v -s`` for the full narrative.
"""
import hashlib
import math
import time

import numpy as np
from scipy import integrate

from cccert.baselines import clopper_pearson_upper, era
from cccert.cli import main as cli_main
from cccert.concentration import (MomentSummary, exp_uniform_moments,
                                  fft_mean_density, minimize_yup)
from cccert.core import CertConfig
from cccert.data import synthetic_dataset
from cccert.engine import certify_dataset, empirical_chernoff, theorem1_rhs
from cccert.metrics import parse_report_json, pca
from cccert.transforms import BrightnessSpec
from helpers import lemma1_violations

RIG_SEED = 7
RIG_COUNT = 100


def test_criterion_lemma1_fuzz_million_pairs():
    violations = lemma1_violations(1_000_000, seed=2024)
    assert violations == 0
    print("\n[PASS] gap-criterion fuzz: 10^6 pairs, 0 argmax changes")


def test_criterion_analytic_chernoff_oracle():
    start = time.time()
    rng = np.random.default_rng(5)
    Z = rng.random(100_000)

    d = 0.5
    worst_rel = 0.0
    for t in (0.5, 1.0, 2.0, 5.0):
        got, _ = empirical_chernoff(Z, d, [t])
        want = math.exp(-d * t) * math.expm1(t) / t
        rel = abs(got - want) / want
        worst_rel = max(worst_rel, rel)
        assert rel < 0.05, (t, got, want)

    t_grid = np.linspace(1e-4, 1e4, 500)
    for d in (0.2, 0.5, 0.9):
        b_min, _ = empirical_chernoff(Z, d, t_grid)
        assert b_min >= 1.0 - d, (d, b_min)

    elapsed = time.time() - start
    assert elapsed < 10.0
    print(f"\n[PASS] analytic oracle for the temperature bound: worst rel err "
          f"{worst_rel:.4f} (<5%), min bound covers the true tail, {elapsed:.1f}s (<10s)")


def test_criterion_theorem1_monte_carlo():
    start = time.time()
    t = 1.0
    mu, _ = integrate.quad(lambda x: math.exp(t * x), 0, 1, epsabs=1e-13)
    s2, _ = integrate.quad(lambda x: (math.exp(t * x) - mu) ** 2, 0, 1, epsabs=1e-13)
    cv = math.sqrt(s2) / mu
    trials = 10_000
    rng = np.random.default_rng(99)
    freqs = {}
    for n, k, delta in ((200, 5, 0.9), (50, 10, 0.8)):
        under = 0
        chunk = 500
        for lo in range(0, trials, chunk):
            b = min(chunk, trials - lo)
            draws = np.exp(rng.random((b, k, n)) * t)
            worst = draws.mean(axis=2).max(axis=1)
            under += int(np.sum(worst / delta < mu))
        freq = under / trials
        se = math.sqrt(freq * (1.0 - freq) / trials)
        rhs = theorem1_rhs(n, k, delta, cv)
        assert freq <= rhs + 3 * se, (n, k, delta, freq, rhs)
        freqs[(n, k, delta)] = (freq, rhs)
    elapsed = time.time() - start
    assert elapsed < 60.0
    print(f"\n[PASS] worst-of-k underestimation Monte-Carlo: {freqs}, "
          f"{elapsed:.1f}s (<60s)")


def test_criterion_clopper_pearson_closed_form():
    u1 = clopper_pearson_upper(10_000, 0, 0.05)
    assert abs(u1 - (1 - 0.05 ** (1 / 10_000))) < 1e-9
    assert abs(u1 - 2.9953e-4) < 1e-7
    u2 = clopper_pearson_upper(100, 0, 0.05)
    assert abs(u2 - (1 - 0.05**0.01)) < 1e-9
    assert abs(u2 - 0.029513) < 1e-6
    print(f"\n[PASS] exact binomial upper limits: {u1:.6g} and {u2:.6g} "
          f"match the closed forms within 1e-9")


def test_criterion_confidence_bound_table():
    start = time.time()
    rows = [
        (100, 1.0, 4.26154, 0.387197),
        (1000, 1.0, 5.42482, 0.268035),
        (100, 1.2, 6.27384, 0.117551),
        (1000, 1.2, 8.04348, 0.0622941),
        (100, 1.5, 9.33083, 0.0111136),
        (1000, 1.5, 11.1443, 0.00414658),
    ]
    worst_t = worst_y = 0.0
    for n, a, ref_t, ref_y in rows:
        t_min, y_min = minimize_yup(a, MomentSummary(0.5, 1.0 / 12.0, n))
        rel_t = abs(t_min - ref_t) / ref_t
        rel_y = abs(y_min - ref_y) / ref_y
        worst_t, worst_y = max(worst_t, rel_t), max(worst_y, rel_y)
        assert rel_t < 0.15, (n, a, t_min, ref_t)
        assert rel_y < 0.15, (n, a, y_min, ref_y)
    elapsed = time.time() - start
    assert elapsed < 1.0
    print(f"\n[PASS] uniform-distribution bound table: worst rel err t_min "
          f"{worst_t:.3f}, value {worst_y:.3f} (<15%), {elapsed:.2f}s (<1s)")


def test_criterion_moments_oracle():
    def quad_moments(t):
        mu, _ = integrate.quad(lambda x: math.exp(t * x), 0, 1, epsabs=1e-15, epsrel=1e-13)
        s2, _ = integrate.quad(lambda x: (math.exp(t * x) - mu) ** 2, 0, 1,
                               epsabs=1e-15, epsrel=1e-13)
        r3, _ = integrate.quad(lambda x: (math.exp(t * x) - mu) ** 3, 0, 1,
                               epsabs=1e-16, epsrel=1e-13)
        return mu, s2, r3

    worst = 0.0
    for t in np.linspace(0.1, 10.0, 45):
        got = exp_uniform_moments(float(t))
        want = quad_moments(float(t))
        for g, w in zip(got, want):
            worst = max(worst, abs(g - w) / abs(w))
    assert worst < 1e-8
    mu, s2, _ = exp_uniform_moments(1.0)
    assert abs(mu - 1.718282) < 1e-6
    assert abs(s2 - 0.242036) < 1e-6
    print(f"\n[PASS] closed-form moments vs adaptive quadrature: worst rel err "
          f"{worst:.2e} (<1e-8) over t in [0.1, 10]")


def test_criterion_fft_density():
    start = time.time()
    dens = fft_mean_density(1.0, 5, 200)
    mass_err = abs(dens.masses.sum() - 1.0)
    assert mass_err < 1e-6

    rng = np.random.default_rng(123)
    draws = np.exp(rng.random((1_000_000, 5))).mean(axis=1)
    draws.sort()
    emp = np.searchsorted(draws, dens.support, side="right") / draws.size
    ks = float(np.max(np.abs(dens.cdf() - emp)))
    assert ks < 0.01

    assert np.all(dens.masses <= dens.upper + 1e-9)
    assert np.all(dens.masses >= dens.lower - 1e-9)

    mu, s2, _ = exp_uniform_moments(1.0)
    sups = []
    for n in (2, 5, 20):
        d = fft_mean_density(1.0, n, 200)
        z = (d.support - mu) / math.sqrt(s2 / n)
        normal_cdf = 0.5 * (1.0 + np.vectorize(math.erf)(z / math.sqrt(2.0)))
        sups.append(float(np.max(np.abs(d.cdf() - normal_cdf))))
    assert sups[0] > sups[1] > sups[2]

    elapsed = time.time() - start
    assert elapsed < 30.0
    print(f"\n[PASS] fft sample-mean density: mass err {mass_err:.1e} (<1e-6), "
          f"KS {ks:.4f} (<0.01), brackets hold, normal distance {sups} decreasing, "
          f"{elapsed:.1f}s (<30s)")


def test_criterion_end_to_end_desk_scale(tmp_path):
    start = time.time()
    common = ["--dataset", "synthetic", "--synthetic-seed", str(RIG_SEED),
              "--synthetic-count", str(RIG_COUNT), "--subset", "0",
              "--n", "200", "--k", "30", "--delta", "0.9",
              "--t-min", "1e-4", "--t-max", "1e4", "--t-count", "500",
              "--seed", "0", "--workers", "1"]

    out_a = tmp_path / "main"
    assert cli_main(["certify", "--transform", "brightness:-0.4:0.4",
                     "--era", "--grid-r", "20", "--out", str(out_a)] + common) == 0
    report = parse_report_json((out_a / "report.json").read_bytes())

    bounds = [s.record.bound for s in report.samples]
    assert all(0.0 <= b <= 1.0 for b in bounds)                      # (a)

    p4 = pca(report.records(), 1e-4)
    assert report.era_value is not None
    assert p4 <= report.era_value + 0.03                              # (c)

    out_id = tmp_path / "identity"
    assert cli_main(["certify", "--transform", "rotation:0:0", "--no-era",
                     "--out", str(out_id)] + common) == 0
    id_report = parse_report_json((out_id / "report.json").read_bytes())
    certified = uncheckable = 0
    for s in id_report.samples:
        if s.record.hit and s.record.gap_d > 1e-3:
            assert s.record.bound < 1e-6                              # (b)
            certified += 1
        else:
            uncheckable += 1

    out_b = tmp_path / "rerun"
    assert cli_main(["certify", "--transform", "brightness:-0.4:0.4",
                     "--era", "--grid-r", "20", "--out", str(out_b)] + common) == 0
    digest_a = hashlib.sha256((out_a / "report.json").read_bytes()).hexdigest()
    digest_b = hashlib.sha256((out_b / "report.json").read_bytes()).hexdigest()
    assert digest_a == digest_b                                       # (d)

    elapsed = time.time() - start
    assert elapsed < 300.0
    print(f"\n[PASS] end-to-end desk scale: bounds in range, identity control "
          f"certified {certified}/{certified + uncheckable}, PCA(1e-4)={p4:.3f} <= "
          f"ERA+0.03={report.era_value + 0.03:.3f}, digest reproduced "
          f"({digest_a[:12]}...), {elapsed:.0f}s (<300s)")


def test_criterion_pca_vs_n_curve():
    ds, model = synthetic_dataset(RIG_SEED, RIG_COUNT)
    spec = BrightnessSpec(-0.4, 0.4)
    passing = 0
    curves = []
    for seed in (0, 1, 2):
        vals = []
        for n in (50, 100, 200, 400):
            cfg = CertConfig(n_samples=n, k_repeats=30, delta=0.9, rng_seed=seed)
            recs = certify_dataset(model, ds.images, ds.labels, spec, cfg)
            vals.append(pca(recs, 1e-4))
        curves.append(vals)
        if all(a <= b for a, b in zip(vals, vals[1:])):
            passing += 1
    assert passing >= 2, curves
    print(f"\n[PASS] certified accuracy vs draw count: {passing}/3 runs "
          f"non-decreasing across n in (50, 100, 200, 400); curves {curves}")
