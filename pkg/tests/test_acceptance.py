"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Everything runs from a single full-acceptance study at the default
configuration (master seed 2024, 20 Brownian paths, K=256, N=1024, T=0.5,
dt=1e-4).  Verdicts are recomputed here from the raw metrics at the stated
tolerances rather than read from the study's own booleans.
"""

import json
import math

import jsonschema
import numpy as np
import pytest

from pam_mild.studies import _schema, run_study

TIME_BAND = (0.68, 0.80)
SPACE_BAND = (1.35, 1.55)
CUSP_TOL = 0.05
RUNTIME_LIMIT = 600.0
CONTRACTION_BAND = (0.35, 0.65)
MOLLIFIED_TOL = 1e-3
POLYNOMIAL_TOL = 1e-6
SCALING_TOL = 0.05
IDENTITY_TOL = 1e-12
GRAM_SE = 3.0
Z_TARGET = 0.05
RESOLUTION_TOL = 0.05


@pytest.fixture(scope="module")
def acceptance(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    report = run_study("full-acceptance", None, {}, out_dir=out)
    return report, out / "full-acceptance" / str(report.seed)


def test_report_is_complete(acceptance):
    report, target = acceptance
    data = json.loads((target / "report.json").read_text())
    jsonschema.validate(data, _schema("report.schema.json"))
    assert set(data["metrics"]["criteria"]) == {
        "1_time_regularity", "2_space_regularity", "3_contraction", "4_eps_convergence",
        "5_oracle_equivalence", "6_schauder_scalings", "7_wick_algebra",
        "8_wick_stratonovich_bridge", "9_determinism",
    }
    conf = data["config"]
    assert conf["paths"] >= 20 and conf["u0"] == "m1"
    solver = conf["solver"]
    assert (solver["K"], solver["N"], solver["T"], solver["dt"]) == (256, 1024, 0.5, 1e-4)


def test_criterion_1_time_regularity(acceptance, verdict):
    report, _ = acceptance
    reg = report.metrics["regularity"]
    mean = reg["mean_time_exponent"]
    secs = report.timings["ensemble_seconds"]
    ok = TIME_BAND[0] <= mean <= TIME_BAND[1] and secs <= RUNTIME_LIMIT
    verdict("criterion 1 (time regularity)", ok,
            f"mean time exponent {mean:.4f} (sd {reg['sd_time_exponent']:.3f}, {len(reg['time_slopes'])} paths) "
            f"in {list(TIME_BAND)}; ensemble {secs:.1f}s <= {RUNTIME_LIMIT:.0f}s")
    assert len(reg["time_slopes"]) >= 20
    assert ok


def test_criterion_2_space_regularity(acceptance, verdict):
    report, _ = acceptance
    reg = report.metrics["regularity"]
    mean = reg["mean_space_exponent"]
    cusp = report.metrics["cusp_slope"]
    ok = SPACE_BAND[0] <= mean <= SPACE_BAND[1] and abs(cusp - 1.5) <= CUSP_TOL
    verdict("criterion 2 (space regularity)", ok,
            f"mean space exponent {mean:.4f} (sd {reg['sd_space_exponent']:.3f}) in {list(SPACE_BAND)}; "
            f"cusp calibration {cusp:.4f} vs 1.5 +- {CUSP_TOL}")
    assert ok


def test_criterion_3_contraction(acceptance, verdict):
    report, _ = acceptance
    reg = report.metrics["regularity"]
    c = reg["contraction"]
    deltas = np.array(c["deltas"])
    # T/16 .. T/2, snapped to whole time steps
    assert np.allclose(deltas * np.array([16, 8, 4, 2]), 0.5, rtol=2e-3)
    ok = reg["block_ratios_below_one"] and CONTRACTION_BAND[0] <= c["mean_slope"] <= CONTRACTION_BAND[1]
    verdict("criterion 3 (contraction)", ok,
            f"all block ratios < 1: {reg['block_ratios_below_one']} (max {reg['max_block_ratio']:.3f}); "
            f"first-ratio exponent in delta {c['mean_slope']:.3f} (paths in band {c['fraction_in_band']:.0%}) "
            f"vs {list(CONTRACTION_BAND)}")
    assert ok


def test_criterion_4_eps_convergence(acceptance, verdict):
    report, _ = acceptance
    conv = report.metrics["converge_eps"]
    assert conv["epsilon"] == [0.2, 0.1, 0.05, 0.025]
    assert len(conv["per_seed"]) == 5
    cases = []
    for seed, kinds in conv["per_seed"].items():
        assert set(kinds) == {"GaussianKernel", "SpectralCutoff"}
        for kind, m in kinds.items():
            errs = m["errors"]
            decreasing = all(a > b for a, b in zip(errs, errs[1:]))
            cases.append((seed, kind, decreasing and m["spearman"] == 1.0))
    failed = [f"{s}/{k}" for s, k, p in cases if not p]
    ok = not failed
    verdict("criterion 4 (eps convergence)", ok,
            f"{len(cases) - len(failed)}/{len(cases)} (seed, mollifier) cases strictly decreasing with "
            f"rank correlation 1.0" + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert ok


def test_criterion_5_oracle_equivalence(acceptance, verdict):
    report, _ = acceptance
    eq = report.metrics["oracle_equivalence"]
    moll = max(max(d.values()) for d in eq["mollified"].values())
    poly = max(max(eq["polynomial"][k]["errors_vs_exact"].values()) for k in ("m1", "m2"))
    poly_pair = max(max(eq["polynomial"][k]["pairwise_sup"].values()) for k in ("m1", "m2"))
    ok = moll <= MOLLIFIED_TOL and max(poly, poly_pair) <= POLYNOMIAL_TOL
    verdict("criterion 5 (oracle equivalence)", ok,
            f"mollified pairwise sup {moll:.2e} <= {MOLLIFIED_TOL:g}; "
            f"polynomial vs exact {poly:.2e}, pairwise {poly_pair:.2e} <= {POLYNOMIAL_TOL:g}")
    assert ok


def test_criterion_6_schauder_scalings(acceptance, verdict):
    report, _ = acceptance
    kry = report.metrics["kry"]
    assert set(kry) == {"0.5", "1.0", "2.0"}
    kry_dev = {t: v["slope"] + float(t) / 2 for t, v in kry.items()}
    sch = report.metrics["schauder"]
    sch_dev = {}
    for gamma, beta in ((0.45, 0.25), (0.4, 0.1)):
        m = sch[f"gamma={gamma:g},beta={beta:g}"]
        for side in ("dirichlet", "neumann"):
            sch_dev[f"{side}({gamma:g},{beta:g})"] = m[side]["slope"] - (gamma - beta) / 2
    worst = max(abs(v) for v in [*kry_dev.values(), *sch_dev.values()])
    ok = worst <= SCALING_TOL
    fmt = ", ".join(f"{k}: {v:+.4f}" for k, v in [*kry_dev.items(), *sch_dev.items()])
    verdict("criterion 6 (Schauder scalings)", ok, f"deviations {fmt}; worst {worst:.4f} <= {SCALING_TOL}")
    assert ok


def test_criterion_7_wick_algebra(acceptance, verdict):
    report, _ = acceptance
    ident = report.metrics["wick"]["identity"]
    gram = report.metrics["wick"]["gram"]
    assert ident["n_indices"] == math.comb(6, 3)  # every index with order <= 3 on 3 modes
    assert gram["draws"] >= 100_000
    ok = ident["max_relative_defect"] <= IDENTITY_TOL and gram["entries_outside"] == 0
    verdict("criterion 7 (Wick algebra)", ok,
            f"usual - wick - eta defect {ident['max_relative_defect']:.1e} over {ident['n_cases']} expansions; "
            f"Gram max |z| {gram['max_z']:.2f}, {gram['entries_outside']} of {gram['n_entries']} entries "
            f"beyond {GRAM_SE:g} SE ({gram['draws']} draws)")
    assert ok


def test_criterion_8_wick_stratonovich_bridge(acceptance, verdict):
    report, _ = acceptance
    z = report.metrics["z_bridge"]
    ok = z["relative_error"] < Z_TARGET
    verdict("criterion 8 (Wick/Stratonovich bridge)", ok,
            f"solved Z vs direct difference: relative sup error {z['relative_error']:.4f} < {Z_TARGET} "
            f"(M=1, P=3, sup|Z| {z['sup_Z']:.3e}, top-order share {z['top_order_share']:.2e})")
    assert len(z["xi"]) == 1
    assert ok


def test_criterion_9_determinism(acceptance, verdict):
    report, _ = acceptance
    again = run_study("full-acceptance", None, {})
    same = again.metrics_json() == report.metrics_json()
    inner = report.metrics["determinism"]
    ok = same and all(inner.values())
    verdict("criterion 9 (determinism)", ok,
            f"full-acceptance rerun metrics byte-identical: {same}; "
            f"inner reruns {', '.join(f'{k}={v}' for k, v in inner.items())}")
    assert ok


def test_resolution_stability(acceptance, verdict):
    # doubling N and K moves the ensemble exponent estimates by less than 0.05
    report, _ = acceptance
    base = report.metrics["regularity"]
    fine = run_study("estimate-regularity", None, {"solver": {"K": 512, "N": 2048}})
    dt = abs(fine.metrics["mean_time_exponent"] - base["mean_time_exponent"])
    dx = abs(fine.metrics["mean_space_exponent"] - base["mean_space_exponent"])
    ok = dt < RESOLUTION_TOL and dx < RESOLUTION_TOL
    verdict("resolution stability (K, N doubled)", ok,
            f"time exponent shift {dt:.4f}, space exponent shift {dx:.4f} < {RESOLUTION_TOL}")
    assert ok
