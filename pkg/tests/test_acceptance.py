"""Acceptance criteria 1-9, one test (and one summary line) per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
are produced; they are repeated in the terminal summary. The experiment
criteria are marked ``slow`` (about 15 minutes in total on one core).
"""
import json
import time

import numpy as np
import pytest

from conftest import CRITERIA_LINES
from crflow.cli import main
from crflow.experiments import ExperimentConfig, ricci_oracle_error, run_experiment
from crflow.flow import validate_flow
from crflow.functionals import expected_volume_ratio, volume_ratio
from crflow.models import Torus, default_model

FAMILIES = ["hopf", "inoue-sm", "inoue-splus", "inoue-sminus", "elliptic"]

RICCI_TOL, RICCI_H, RICCI_POINTS, RICCI_SECONDS = 1e-6, 1e-3, 100, 10.0
FLOW_TOL, FLOW_SAMPLES, FLOW_SECONDS = 1e-4, 50, 30.0
VOLUME_TOL, VOLUME_TIMES, VOLUME_SECONDS = 2e-3, 20, 30.0
HOPF_GH_FRACTION, HOPF_DENSITY, HOPF_TIMES, HOPF_SECONDS = 0.15, (16, 500), [0.3, 0.4, 0.45, 0.49], 300.0
FIBER_TOL, FIBER_TIMES = 0.20, [0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45]
INOUE_GH_FRACTION, INOUE_TIMES, INOUE_SECONDS = 0.20, [50, 100, 200, 400], 600.0
ELLIPTIC_REL_TOL, ELLIPTIC_TIME, SUPNORM_TIMES, SUPNORM_TOL = 0.10, 400, [100, 400], 0.10
MABUCHI_TOL, DERIVATIVE_TOL, PHIDOT_TOL, MABUCHI_GRID, MABUCHI_SECONDS = 1e-9, 1e-4, 1e-4, 12, 600.0


def report(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA_LINES.append(line)
    print("\n" + line)
    return passed


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


def run(name, **params):
    return timed(run_experiment, ExperimentConfig.from_dict({"experiment": name, **params}))


def non_increasing(values):
    return bool(np.all(np.diff(values) <= 0))


# -- closed-form checks ------------------------------------------------------------

def test_criterion_1_ricci_oracle():
    models = {name: default_model(name) for name in FAMILIES}
    models["torus"] = Torus()
    start = time.perf_counter()
    errors = {name: ricci_oracle_error(m, RICCI_POINTS, RICCI_H) for name, m in models.items()}
    elapsed = time.perf_counter() - start
    bad = {k: v for k, v in errors.items() if v > RICCI_TOL}
    ok = not bad and elapsed < RICCI_SECONDS
    detail = ", ".join(f"{k} {v:.2e}" for k, v in errors.items())
    assert report(1, ok, f"max |Ric_fd - Ric| per family ({detail}); {elapsed:.1f} s"), bad


def test_criterion_2_flow_identity():
    start = time.perf_counter()
    dev = {name: validate_flow(default_model(name), FLOW_SAMPLES)["max_deviation"] for name in FAMILIES}
    elapsed = time.perf_counter() - start
    ok = max(dev.values()) <= FLOW_TOL and elapsed < FLOW_SECONDS
    detail = ", ".join(f"{k} {v:.2e}" for k, v in dev.items())
    assert report(2, ok, f"max |d/dt g + Ric| ({detail}); {elapsed:.1f} s")


def test_criterion_3_volume_laws():
    start = time.perf_counter()
    worst = {}
    for name in ("hopf", "inoue-sm", "inoue-splus", "elliptic"):
        m = default_model(name)
        sample = m.sample()
        T = m.max_existence_time()
        times = np.linspace(0.0, 0.49 if np.isfinite(T) else 400.0, VOLUME_TIMES)
        worst[name] = max(abs(volume_ratio(m, t, sample) - expected_volume_ratio(m, t)) for t in times)
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= VOLUME_TOL and elapsed < VOLUME_SECONDS
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert report(3, ok, f"max |V(t)/V(0) - law| ({detail}); {elapsed:.1f} s")


# -- Gromov-Hausdorff experiments ----------------------------------------------------

@pytest.fixture(scope="module")
def hopf_run():
    return run("hopf-collapse", density=list(HOPF_DENSITY), times=HOPF_TIMES, fiber_times=FIBER_TIMES)


@pytest.mark.slow
def test_criterion_4_hopf_collapse(hopf_run):
    result, elapsed = hopf_run
    bounds = [row["gh_bound"] for row in result.gh]
    circ = result.info["circumference"]
    ok = non_increasing(bounds) and bounds[-1] <= HOPF_GH_FRACTION * circ and elapsed < HOPF_SECONDS
    detail = (f"bounds {np.round(bounds, 3).tolist()}, final {bounds[-1] / circ:.1%} of circumference "
              f"{circ:.3f} (limit {HOPF_GH_FRACTION:.0%}); {elapsed:.0f} s")
    assert report(4, ok, detail)


@pytest.mark.slow
def test_criterion_5_fiber_rate(hopf_run):
    result, _ = hopf_run
    ratios = result.info["fiber_rate_over_sqrt"]
    worst = max(abs(v - 1) for v in ratios.values())
    ok = worst <= FIBER_TOL and len(ratios) == len(FIBER_TIMES)
    assert report(5, ok, f"fibre diameter ratio / sqrt(1-2t) within {worst:.1%} (limit {FIBER_TOL:.0%})")


@pytest.mark.slow
def test_criterion_6_inoue_circles():
    parts, total, ok = [], 0.0, True
    for name in ("inoue-sm", "inoue-splus", "inoue-sminus"):
        result, elapsed = run(name, times=INOUE_TIMES)
        total += elapsed
        bounds = [row["gh_bound"] for row in result.gh]
        frac = bounds[-1] / result.info["circumference"]
        good = non_increasing(bounds) and frac <= INOUE_GH_FRACTION
        ok &= good
        parts.append(f"{name} bounds {np.round(bounds, 3).tolist()} final {frac:.1%}")
    ok &= total < INOUE_SECONDS
    assert report(6, ok, "; ".join(parts) + f" (limit {INOUE_GH_FRACTION:.0%}); {total:.0f} s")


@pytest.mark.slow
def test_criterion_7_elliptic_local_comparison():
    result, elapsed = run("elliptic", times=[ELLIPTIC_TIME], supnorm_times=SUPNORM_TIMES)
    checks = {c["name"]: c for c in result.checks}
    rel = checks["local_relative_error"]["value"]
    rate = checks["supnorm_decays_like_1_over_t"]["value"]
    ok = rel <= ELLIPTIC_REL_TOL and rate <= SUPNORM_TOL
    detail = (f"max relative error {rel:.3g} (limit {ELLIPTIC_REL_TOL}), median "
              f"{result.info['relative_error_median']:.3g}; t*sup-norm ratio deviation {rate:.1e}; {elapsed:.0f} s")
    assert report(7, ok, detail)


# -- torus Monge-Ampere flow ----------------------------------------------------------

@pytest.mark.slow
def test_criterion_8_mabuchi():
    result, elapsed = run("mabuchi-torus", grid=MABUCHI_GRID, t_end=20.0)
    c = {x["name"]: x["value"] for x in result.checks}
    ok = (c["mabuchi_non_increasing"] <= MABUCHI_TOL and c["derivative_identity"] <= DERIVATIVE_TOL
          and c["sup_phidot_final"] < PHIDOT_TOL and c["derivative_formula_non_positive"] <= 0
          and len(result.info["energy_reports"]) == 10 and elapsed < MABUCHI_SECONDS)
    detail = (f"largest Mabuchi increase {c['mabuchi_non_increasing']:.1e}, derivative identity "
              f"{c['derivative_identity']:.1e}, sup|phidot|(20) {c['sup_phidot_final']:.1e}; {elapsed:.0f} s")
    assert report(8, ok, detail)


# -- determinism ---------------------------------------------------------------------

def test_criterion_9_determinism(tmp_path):
    configs = {
        "inoue-sm": {"experiment": "inoue-sm", "density": [4, 6], "times": [50, 400], "n_select": 100},
        "validate-ricci": {"experiment": "validate-ricci", "families": ["hopf", "elliptic"], "samples": 10,
                           "volume_times": 5},
    }
    same = []
    for name, cfg in configs.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(cfg))
        for rep in ("a", "b"):
            main([name, "--config", str(path), "--out", str(tmp_path / rep / name), "--seed", "7", "--workers", "2"])
        for csv in sorted((tmp_path / "a" / name).glob("*.csv")):
            same.append((tmp_path / "b" / name / csv.name).read_bytes() == csv.read_bytes())
    ok = all(same) and len(same) == 3
    assert report(9, ok, f"{sum(same)}/{len(same)} CSV files byte-identical across repeated seeded runs")
