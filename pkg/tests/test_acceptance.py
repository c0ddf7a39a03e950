"""Acceptance criteria, one test each; the summary prints a PASS/FAIL line per criterion."""

import random
import statistics
import time
from dataclasses import replace
from importlib.resources import files

import pytest
from scipy.stats import binom

from sculi.accel import build_schedule, simulate_kp
from sculi.bench import (
    check_laser_pack,
    parse_config,
    rerun_manifest,
    run_scenario,
    run_sweep,
    static_gamma_sweep,
)
from sculi.curve import B233_CURVE, INFINITY, double_and_add_kp, ladder_kp
from sculi.field import GF16
from sculi.leakage import PowerParams, beam_intensity, synthesize_trace
from sculi.attack import run_attack
from sculi.curve import Scalar

G = B233_CURVE.base_point
N = B233_CURVE.order


def _builtin(name):
    return parse_config(files("sculi.data").joinpath(f"{name}.ini").read_text())


def _calibrated():
    (s,) = _builtin("calibrated")
    return s


def _floor_cdf(m, n=232, slots=54):
    # P(best <= m/n) for 54 independent fair-coin candidates folded with their twins
    lo = n - m
    return (binom.cdf(m, n, 0.5) - binom.cdf(lo - 1, n, 0.5)) ** slots if lo <= m else 0.0


@pytest.mark.criterion(1, "field/curve oracle equivalence")
def test_criterion_1(detail):
    t0 = time.perf_counter()

    def slow(a, b):
        r = 0
        for i in range(4):
            if (b >> i) & 1:
                r ^= a << i
        for i in (6, 5, 4):
            if (r >> i) & 1:
                r ^= 0b10011 << (i - 4)
        return r

    for a in range(16):
        for b in range(16):
            assert GF16.mul(a, b) == slow(a, b)
    rng = random.Random(1000)
    for _ in range(1000):
        k = rng.randrange(1, N)
        assert ladder_kp(k, G) == double_and_add_kp(k, G, B233_CURVE)
    assert ladder_kp(N, G) == INFINITY and double_and_add_kp(N, G, B233_CURVE) == INFINITY
    elapsed = time.perf_counter() - t0
    detail.append(f"{elapsed:.1f} s")
    assert elapsed < 60


@pytest.mark.criterion(2, "schedule invariants")
def test_criterion_2(detail):
    sched = build_schedule()
    assert len(sched.slots(0)) == len(sched.slots(1)) == 54
    assert sched.kind_sequence(0) == sched.kind_sequence(1)
    assert sched.key_dependent_slots()
    k = Scalar.random(random.Random(2))
    _, log = simulate_kp(k, G)
    assert log.n_cycles == 12_528
    assert log.duration_s == pytest.approx(3.132e-3, rel=1e-12)
    detail.append(f"{log.n_cycles} cycles, {log.duration_s * 1e3:.3f} ms")


@pytest.mark.criterion(3, "noise-free end-to-end gives a perfect slot")
def test_criterion_3(detail):
    k = Scalar.random(random.Random(3))
    _, log = simulate_kp(k, G)
    p = PowerParams(sigma_noise=0.0)
    assert p.leakage_weight > 0
    report = run_attack(synthesize_trace(log, p), k)
    detail.append(f"delta {report.best.correctness_pct:g} at slot {report.best.slot}")
    assert report.best.correctness_pct == 100.0


@pytest.mark.slow
@pytest.mark.criterion(4, "noise floor with leakage weight 0")
def test_criterion_4(detail):
    s = _calibrated()
    s = replace(s, name="floor", power=s.power.with_leakage_weight(0.0))
    bests = [run_scenario(s, 1000 + i)[0].delta_best for i in range(100)]
    mean = statistics.fmean(bests)
    over = sum(d >= 62 for d in bests)
    allowed = binom.ppf(0.999, 100, 1 - _floor_cdf(143))
    detail.append(f"mean {mean:.2f}, range {min(bests):.2f}-{max(bests):.2f}, "
                  f"{over} of 100 runs at or above 62 (oracle allows {allowed:g})")
    assert 50 < mean < 62
    assert min(bests) > 50
    assert over <= allowed


@pytest.mark.slow
@pytest.mark.criterion(5, "calibrated reference reproduces delta in [89, 92]")
def test_criterion_5(detail):
    s = _calibrated()
    t0 = time.perf_counter()
    bests = [run_scenario(s, seed)[0].delta_best for seed in s.seeds()]
    elapsed = time.perf_counter() - t0
    mean = statistics.fmean(bests)
    detail.append(f"mean {mean:.2f} over {len(bests)} seeds, {elapsed:.0f} s")
    assert len(bests) == 10
    assert 89 <= mean <= 92
    assert elapsed < 600


@pytest.mark.slow
@pytest.mark.criterion(6, "illumination null result and DC offsets")
def test_criterion_6(detail):
    pack = _builtin("laser_pack")
    assert all(sc.power.gamma == 0 for sc in pack)
    summary = run_sweep(pack).summary()
    problems = check_laser_pack(summary, max_delta_change=2.0, equal_power_tol=0.05)
    detail.append(", ".join(f"{r['scenario']}: delta {r['delta_mean']:.2f} offset {r['dc_offset']:.1f}"
                            for r in summary))
    assert problems == []
    # offsets strictly increase with power across every pair of distinct powers
    lit = summary[1:]
    for a in lit:
        for b in lit:
            if a["power_pct"] < b["power_pct"]:
                assert a["dc_offset"] < b["dc_offset"]


@pytest.mark.criterion(7, "intensity identity across experiments 4-6")
def test_criterion_7(detail):
    lasers = {sc.name: sc.laser for sc in _builtin("laser_pack")}
    vals = [beam_intensity(lasers[n]) for n in ("exp4", "exp5", "exp6")]
    rel = max(vals) / min(vals) - 1
    detail.append(f"max relative difference {rel:.2%}")
    assert rel < 0.03


@pytest.mark.slow
@pytest.mark.criterion(8, "static-only attack tracks gamma*alpha")
def test_criterion_8(detail):
    (s,) = _builtin("static")
    gammas = (0.0, 0.0005, 0.001, 0.0015, 0.002, 0.003)
    points, rho = static_gamma_sweep(s, gammas, n_seeds=20)
    detail.append(f"rho {rho:.3f}; " + ", ".join(f"{x:.0e}:{y:.1f}" for x, y in points))
    assert rho > 0.9
    assert 50 < points[0][1] < 62


@pytest.mark.criterion(9, "manifest re-runs are byte-identical")
def test_criterion_9(detail, tmp_path):
    lit = next(sc for sc in _builtin("laser_pack") if sc.name == "exp5")
    cases = [(_calibrated(), 100, None), (lit, 100, None),
             (_calibrated().with_power(drift=0.05), 7, 3)]
    for sc, seed, drift_seed in cases:
        run_scenario(sc, seed, tmp_path / "a", write_trace_file=False, drift_seed=drift_seed)
        d = tmp_path / "a" / sc.name / str(seed)
        rerun_manifest(d / "manifest.json", tmp_path / "b")
        again = tmp_path / "b" / sc.name / str(seed)
        assert (d / "report.json").read_bytes() == (again / "report.json").read_bytes()
        assert (d / "report.csv").read_bytes() == (again / "report.csv").read_bytes()
    detail.append(f"{len(cases)} manifests")
