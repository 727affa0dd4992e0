"""Acceptance suite.

Each test prints one ``CRITERION n: PASS|FAIL`` line, collected again in
the terminal summary. Criteria 9 to 11 compare against published anchor
values and claims; where the computed numbers disagree the test fails and
the numbers are written out rather than the tolerance being widened.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from acceptance_log import record
from oracles import semantic_rd_dual_grid, sphere_packing_primal
from semantic_jscc import scenario as sc
from semantic_jscc.cli import main
from semantic_jscc.dmc import sphere_packing_dmc
from semantic_jscc.jscc import (
    JsccProblem, convexity_report, csiszar_bounds_dmc, jscc_bounds_dmc, jscc_exponent_mimo,
    optimal_code_rate, optimal_code_rate_stationary)
from semantic_jscc.mimo import (
    ExpurgatedParams, MimoChannelSpec, eex_closed, eex_definition_oracle, eex_derivatives,
    eex_mc, ergodic_capacity)
from semantic_jscc.prob import BITS_PER_NAT, dmc_capacity, simplex_grid
from semantic_jscc.ratedist import (
    DiscreteSemanticSource, DistortionPair, GaussianSourceSpec, rate_distortion,
    semantic_rd_discrete, semantic_rd_gaussian)
from semantic_jscc.source import gaussian_kl_conditional, gaussian_kl_marginal

ROOT = Path(__file__).resolve().parents[1]
HAMMING2 = np.array([[0.0, 1.0], [1.0, 0.0]])
BASELINE = ROOT / "scenarios" / "mimo_baseline.toml"

# published anchors at D_s=2, D_x=1, 3x3, alpha=0.3, SNR=15, t=2
ANCHOR_RATE, ANCHOR_CAPACITY, ANCHOR_PLATEAU = 1.8, 5.1, 0.24


def _baseline(grid=16, **run):
    cfg = sc.load_config(BASELINE)
    cfg["run"]["grid"] = grid
    cfg["run"].update(run)
    return cfg


def _e_star(cfg, **axes):
    for axis, value in axes.items():
        cfg = sc.with_axis(cfg, axis, value)
    return sc.evaluate_point(cfg)


# -- 1 ----------------------------------------------------------------------

def test_criterion_01_dual_sphere_packing_matches_primal_grid():
    rng = np.random.default_rng(2024)
    worst, spent, n_checks = 0.0, 0.0, 0
    for _ in range(20):
        n_in, n_out = rng.integers(2, 4, size=2)
        w = rng.dirichlet(np.ones(n_out), size=n_in)
        cap = dmc_capacity(w)
        grid = simplex_grid(n_in, 60 if n_in == 2 else 30)
        for frac in (0.1, 0.3, 0.5, 0.7, 0.9):
            start = time.perf_counter()
            dual = sphere_packing_dmc(w, frac * cap).value
            spent += time.perf_counter() - start
            primal, _ = sphere_packing_primal(w, frac * cap, grid)
            worst = max(worst, abs(dual - primal))
            n_checks += 1
    ok = worst <= 1e-3 and spent < 120.0
    record(1, ok, f"{n_checks} checks, max |dual - primal| = {worst:.2e} nats (tol 1e-3), "
                  f"library time {spent:.1f}s (limit 120s)")
    assert ok


# -- 2 ----------------------------------------------------------------------

def test_criterion_02_infinite_semantic_budget_gives_single_criterion_bounds(toy_source,
                                                                              bsc03):
    d_x, t, grid = 0.1, 0.2, 16
    prob = JsccProblem(toy_source, bsc03, DistortionPair(math.inf, d_x), t)
    upper, lower = jscc_bounds_dmc(prob, grid=grid)
    ref_up, ref_lo = csiszar_bounds_dmc(toy_source.p_x, HAMMING2, d_x, bsc03, t, grid=grid)
    err = max(abs(upper.e_star - ref_up), abs(lower.e_star - ref_lo))
    ok = err <= 1e-6
    record(2, ok, f"upper {upper.e_star:.9f} vs {ref_up:.9f}, lower {lower.e_star:.9f} vs "
                  f"{ref_lo:.9f}, max err {err:.1e} (tol 1e-6)")
    assert ok


# -- 3 ----------------------------------------------------------------------

def test_criterion_03_infinite_observed_budget_gives_lifted_rd():
    src = DiscreteSemanticSource([0.35, 0.65], [[0.8, 0.2], [0.25, 0.75]], HAMMING2, HAMMING2)
    lifted = np.array([[sum(src.p_s_given_x[x, s] * HAMMING2[s, j] for s in range(2))
                        for j in range(2)] for x in range(2)])
    worst = 0.0
    for d_s in (0.25, 0.3, 0.35, 0.4):
        got = semantic_rd_discrete(src, DistortionPair(d_s, math.inf)).value
        worst = max(worst, abs(got - rate_distortion(src.p_x, lifted, d_s)))
    ok = worst <= 1e-6
    record(3, ok, f"4 budgets, max |R - R_lifted| = {worst:.1e} (tol 1e-6)")
    assert ok


# -- 4 ----------------------------------------------------------------------

def test_criterion_04_semantic_rd_matches_exhaustive_grid():
    src = DiscreteSemanticSource([0.35, 0.65], [[0.8, 0.2], [0.25, 0.75]], HAMMING2, HAMMING2)
    worst, spent = 0.0, 0.0
    for d_s, d_x in ((0.3, 0.1), (0.4, 0.05)):
        start = time.perf_counter()
        got = semantic_rd_discrete(src, DistortionPair(d_s, d_x)).value
        spent += time.perf_counter() - start
        ref = semantic_rd_dual_grid(src.p_x, src.p_s_given_x, HAMMING2, HAMMING2, d_s, d_x,
                                    steps=200)
        worst = max(worst, abs(got - ref))
    ok = worst <= 1e-3 and spent < 60.0
    record(4, ok, f"max |R - grid| = {worst:.1e} (tol 1e-3), library time {spent:.2f}s")
    assert ok


# -- 5 ----------------------------------------------------------------------

def _random_pd(rng, n):
    g = rng.normal(size=(n, n))
    return g @ g.T + 0.3 * np.eye(n)


def _log_ratio(z, a, sigma):
    # ln N(z; 0, a) - ln N(z; 0, sigma), rows of z are samples
    qa = np.sum(z * np.linalg.solve(a, z.T).T, axis=1)
    qs = np.sum(z * np.linalg.solve(sigma, z.T).T, axis=1)
    return 0.5 * (qs - qa) + 0.5 * (np.linalg.slogdet(sigma)[1] - np.linalg.slogdet(a)[1])


def test_criterion_05_gaussian_kl_matches_monte_carlo():
    rng = np.random.default_rng(55)
    n_mc, worst, notes = 1_000_000, 0.0, []
    for _ in range(5):
        q, l = rng.integers(1, 4, size=2)
        spec = GaussianSourceSpec(_random_pd(rng, q), rng.normal(size=(l, q)),
                                  _random_pd(rng, l))
        a_mat, b_mat = _random_pd(rng, q), _random_pd(rng, l)
        x = rng.multivariate_normal(np.zeros(q), a_mat, size=n_mc)
        s = x @ spec.h.T + rng.multivariate_normal(np.zeros(l), b_mat, size=n_mc)
        for name, fn, mat, z, ref in (
                ("marginal", gaussian_kl_marginal, a_mat, x, spec.sigma_x),
                ("conditional", gaussian_kl_conditional, b_mat, s - x @ spec.h.T,
                 spec.sigma_n)):
            diff = _log_ratio(z, mat, ref)
            se = diff.std(ddof=1) / math.sqrt(n_mc)
            z_score = abs(fn(spec, mat) - diff.mean()) / se
            worst = max(worst, z_score)
            alt = fn(spec, mat, alt_form=True)
            notes.append(f"{name} q={q} l={l}: std {fn(spec, mat):.4f}, alt {alt:.4f}, "
                         f"mc {diff.mean():.4f}")
    ok = worst <= 3.0
    record(5, ok, f"10 divergences on 5 random specs, max |z| = {worst:.2f} (tol 3); "
                  f"unhalved variant reported only: {notes[0]}")
    assert ok


# -- 6 ----------------------------------------------------------------------

def test_criterion_06_closed_form_matches_monte_carlo_and_definition():
    start = time.perf_counter()
    worst, worst_def = 0.0, 0.0
    for n in (2, 3):
        spec = MimoChannelSpec(n, n, 15.0)
        for rho in (0.25, 0.5, 1.0):
            for delta in (0.0, 0.4 / 15.0):
                p = ExpurgatedParams(rho, delta)
                est = eex_mc(spec, p, 100_000, 6)
                worst = max(worst, abs(eex_closed(spec, p) - est.value) / est.std_error)
                if n == 2 and delta == 0.0:
                    ref = eex_definition_oracle(spec, p, 1000, 1000, 7)
                    se = math.hypot(ref.std_error, est.std_error)
                    worst_def = max(worst_def, abs(ref.value - est.value) / se)
    spent = time.perf_counter() - start
    ok = worst <= 3.0 and worst_def <= 3.0 and spent < 600.0
    record(6, ok, f"closed vs MC max |z| = {worst:.2f}, MC vs definition max |z| = "
                  f"{worst_def:.2f} (tol 3), {spent:.0f}s")
    assert ok


# -- 7 ----------------------------------------------------------------------

def test_criterion_07_analytic_derivatives_match_finite_differences():
    rng = np.random.default_rng(77)
    h, worst = 1e-5, 0.0
    for k in range(10):
        n = 2 + k % 2
        spec = MimoChannelSpec(n, n, 15.0)
        rho, delta = rng.uniform(0.15, 0.95), rng.uniform(0.005, 0.05)
        d_delta, d_rho = eex_derivatives(spec, ExpurgatedParams(rho, delta))

        def e(r, d):
            return eex_closed(spec, ExpurgatedParams(r, d))

        fd_delta = (e(rho, delta + h) - e(rho, delta - h)) / (2 * h)
        fd_rho = (e(rho + h, delta) - e(rho - h, delta)) / (2 * h)
        worst = max(worst, abs(d_delta - fd_delta) / abs(fd_delta),
                    abs(d_rho - fd_rho) / abs(fd_rho))
    ok = worst <= 1e-4
    record(7, ok, f"10 interior points, max relative error {worst:.1e} (tol 1e-4)")
    assert ok


# -- 8 ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def baseline_curve():
    cfg = _baseline(grid=50)
    prob = sc.build_problem(cfg)
    return prob, jscc_exponent_mimo(prob, grid=50, method="mc", n_samples=100_000, seed=1)


def test_criterion_08_baseline_curve_is_convex(baseline_curve):
    _, rep = baseline_curve
    bad = convexity_report(rep.curve)
    ok = not bad
    detail = f"{len(rep.curve.points)} points, {len(bad)} second differences below -1e-6"
    if bad:
        last = len(rep.curve.points) - 2
        at_edge = [b for b in bad if b[0] == last]
        inner = [b for b in bad if b[0] != last]
        if at_edge:
            detail += f"; {at_edge[0][2]:.3g} next to R_hi (channel exponent clamped to 0 " \
                      f"at capacity)"
        if inner:
            detail += f"; {len(inner)} in R=[{inner[0][1]:.3f}, {inner[-1][1]:.3f}], worst " \
                      f"{min(b[2] for b in inner):.3g} (source exponent kink where it " \
                      f"switches to the semantic-infeasible branch)"
    record(8, ok, detail)
    assert ok


# -- 9 ----------------------------------------------------------------------

def _anchor_candidates():
    cfg = _baseline()
    prob = sc.build_problem(cfg)
    r_lo = prob.trans_rate * semantic_rd_gaussian(prob.source, prob.distortions).value
    out = {}
    for snr in ("linear", "db"):
        c = sc.apply_overrides(cfg, snr=snr)
        cap = ergodic_capacity(sc.build_channel(c), 100_000, 1).value
        for units, s in (("nats", 1.0), ("bits", BITS_PER_NAT)):
            out[(units, snr)] = (r_lo * s, cap * s)
    return out


def test_criterion_09_published_anchors():
    cands = _anchor_candidates()

    def rel(v, ref):
        return abs(v - ref) / ref

    score = {k: max(rel(r, ANCHOR_RATE), rel(c, ANCHOR_CAPACITY)) for k, (r, c) in cands.items()}
    chosen = min(score, key=score.get)
    units, snr = chosen
    plateau = []
    for d_s in (5.0, 10.0, 20.0, 40.0):
        cfg = sc.apply_overrides(_baseline(), units=units, snr=snr)
        scale = BITS_PER_NAT if units == "bits" else 1.0
        plateau.append((d_s, _e_star(cfg, D_x=1.5, D_s=d_s)["E_star"] * scale))
    e_plateau = plateau[-1][1]
    rate_ok = rel(cands[chosen][0], ANCHOR_RATE) <= 0.15
    cap_ok = rel(cands[chosen][1], ANCHOR_CAPACITY) <= 0.15
    plat_ok = rel(e_plateau, ANCHOR_PLATEAU) <= 0.25

    lines = ["anchor discrepancy report",
             f"anchors: R_semantic={ANCHOR_RATE}, capacity={ANCHOR_CAPACITY}, "
             f"E* plateau (D_x=1.5)={ANCHOR_PLATEAU}",
             "R_semantic is t R(D_s, D_x) with t=2; capacity is the Monte Carlo ergodic "
             "capacity (1e5 samples, seed 1)",
             "units  snr     R_semantic  capacity  max_rel_err"]
    for (u, s), (r, c) in sorted(cands.items()):
        lines.append(f"{u:5s}  {s:6s}  {r:10.4f}  {c:8.4f}  {score[(u, s)]:.3f}")
    lines.append(f"chosen pair: units={units} snr={snr}")
    lines.append("E* at D_x=1.5 (chosen pair): " +
                 ", ".join(f"D_s={d:g}: {e:.4f}" for d, e in plateau))
    lines.append(f"R_semantic within 15%: {rate_ok}; capacity within 15%: {cap_ok}; "
                 f"plateau within 25%: {plat_ok}")
    report = ROOT / "reports" / "anchor_discrepancy.txt"
    report.parent.mkdir(exist_ok=True)
    report.write_text("\n".join(lines) + "\n", encoding="utf-8")

    ok = rate_ok and cap_ok and plat_ok
    r, c = cands[chosen]
    record(9, ok, f"chosen {units}/{snr}: R_semantic {r:.3f} vs {ANCHOR_RATE}, capacity "
                  f"{c:.3f} vs {ANCHOR_CAPACITY}, plateau {e_plateau:.3f} vs "
                  f"{ANCHOR_PLATEAU}; report in reports/anchor_discrepancy.txt")
    assert ok


# -- 10 ---------------------------------------------------------------------

def _nondecreasing(vals, tol=0.0):
    return all(b >= a - tol for a, b in zip(vals, vals[1:]))


def test_criterion_10_monotonicity():
    cfg = _baseline()
    snrs = (5.0, 10.0, 15.0, 20.0)
    by_n = {n: [_e_star(cfg, n=n, SNR=s)["E_star"] for s in snrs] for n in (2, 3, 4)}
    alphas = [_e_star(cfg, alpha=a)["E_star"] for a in (0.3, 0.6, 0.9)]
    coherence = [_e_star(cfg, N_c=k)["E_star"] for k in (1, 2, 3)]
    in_n = [by_n[n][snrs.index(15.0)] for n in (2, 3, 4)]
    gaps = [b - a for a, b in zip(by_n[2], by_n[4])]
    ratios = [b / a for a, b in zip(by_n[2], by_n[4])]
    parts = {
        "SNR": _nondecreasing(by_n[3]),
        "n": _nondecreasing(in_n),
        "alpha": _nondecreasing(alphas),
        "N_c": _nondecreasing([-v for v in coherence]),
        "gap": all(g > 0 for g in gaps),
    }
    ok = all(parts.values())
    failed = [k for k, v in parts.items() if not v]

    def fmt(v):
        return "/".join(f"{x:.4f}" for x in v)

    record(10, ok, f"SNR {fmt(by_n[3])}; n {fmt(in_n)}; alpha {fmt(alphas)}; "
                   f"N_c {fmt(coherence)}; 4x4/2x2 ratio {fmt(ratios)}"
                   + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert ok


# -- 11 ---------------------------------------------------------------------

def test_criterion_11_closed_form_rate_matches_argmin():
    src = GaussianSourceSpec.isotropic(1, 1, 4.0, 1.0, math.sqrt(0.5))
    notes, ok = [], True
    for t, d_s, d_x in ((2.0, 2.0, 1.0), (1.0, 2.0, 1.0), (0.5, 2.0, 1.0), (2.0, 3.0, 1.5),
                        (1.0, 2.5, 0.5)):
        prob = JsccProblem(src, MimoChannelSpec(3, 3, 15.0), DistortionPair(d_s, d_x), t)
        rep = jscc_exponent_mimo(prob, grid=50)
        step = float(np.diff(rep.curve.rates).max())
        formula = optimal_code_rate(prob, rep.rho_star, interval=rep.interval).value
        stationary = optimal_code_rate_stationary(prob, rep.rho_star,
                                                  interval=rep.interval).value
        hit = abs(formula - rep.r_star) <= step
        ok &= hit
        notes.append(f"t={t:g},D=({d_s:g},{d_x:g}): formula {formula:.3f} argmin "
                     f"{rep.r_star:.3f} stationary {stationary:.3f} step {step:.3f}")
    record(11, ok, "; ".join(notes))
    assert ok


# -- 12 ---------------------------------------------------------------------

def test_criterion_12_sweep_is_byte_identical_across_worker_counts(tmp_path):
    cfg = ROOT / "scenarios" / "sweep_ds.toml"
    outs = []
    for k, workers in enumerate((8, 1, 8)):
        out = tmp_path / f"run{k}.csv"
        code = main(["sweep", "--config", str(cfg), "--workers", str(workers),
                     "--out", str(out), "--cache-dir", str(tmp_path / f"cache{k}")])
        assert code == 0
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1] == outs[2]
    record(12, ok, f"3 runs (8, 1, 8 workers, fresh caches), {len(outs[0])} bytes each, "
                   f"identical={ok}")
    assert ok
