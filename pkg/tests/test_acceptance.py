"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

import json

import numpy as np
import pytest

from laurent_lab.cli import main
from laurent_lab.disorder import Uniform
from laurent_lab.groundstate import (
    basis_for,
    flatness_report,
    gap_scaling,
    kernel_residual,
    neumann_gap,
    random_span_vectors,
)
from laurent_lab.ids import envelope_curves, free_ids_check, sandwich_curves
from laurent_lab.io import read_csv
from laurent_lab.lifshitz import (
    bump_scaling,
    double_log_fit,
    log_log_fit,
    measure_C0,
    neumann_tail_estimate,
    temple_verify,
)
from laurent_lab.operator import IntegerSymbolSpec, bracketing_check
from laurent_lab.symbol import THREE_MINIMA_EXAMPLE, Symbol, envelope_bounds, fourier_coefficients, free_ids_closed


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def _random_minima(rng, m):
    while True:
        pts = np.sort(rng.uniform(-np.pi, np.pi, m))
        gaps = np.diff(np.concatenate([pts, [pts[0] + 2 * np.pi]]))
        if m == 1 or gaps.min() > 0.3:
            return tuple(float(p) for p in pts)


def test_c01_bracketing_certificates(report):
    rng = np.random.default_rng(2024)
    worst, fails = np.inf, 0
    for _ in range(50):
        spec = IntegerSymbolSpec(_random_minima(rng, int(rng.integers(1, 4))), int(rng.integers(1, 3)))
        n = spec.N
        length = int(rng.integers(4 * n + 2, 201))
        a = int(rng.integers(-100, 100))
        cut = a + int(rng.integers(2 * n, length - 2 * n - 1))
        rep = bracketing_check(spec, (a, a + length - 1), cut, raise_on_fail=False)
        worst = min(worst, min(rep.lower_min, rep.upper_min) / rep.norm)
        fails += not rep.passed
    assert report(1, fails == 0, f"50 triples, {fails} failures, worst min eig / ||T|| = {worst:.3e}")


KERNEL_SPECS = [((0.0,), 1), ((0.0,), 2), ((0.0, 2.0), 1), ((0.0, 2.0), 2),
                ((-2.0, 0.5, 2.5), 1), ((-2.0, 0.5, 2.5), 2)]


def test_c02_kernel_dimension_and_basis(report):
    bad, worst_res, smallest_gap = [], 0.0, np.inf
    for minima, abar in KERNEL_SPECS:
        spec = IntegerSymbolSpec(minima, abar)
        n = spec.N
        Ls = sorted(set(range(n, n + 24)) | {32, 48, 64, 96, 128, 192, 256, 384, 512})
        for L in Ls:
            gap, dim = neumann_gap(spec, L)
            res = kernel_residual(spec, basis_for(spec, L))
            worst_res = max(worst_res, res)
            smallest_gap = min(smallest_gap, gap)
            if dim != n or res > 1e-8:
                bad.append((minima, abar, L, dim, res))
    ok = not bad
    assert report(2, ok, f"{len(KERNEL_SPECS)} (M, abar) pairs, L up to 512: {len(bad)} failures, "
                         f"max residual {worst_res:.2e}, smallest mu_(N+1) {smallest_gap:.2e}")


def test_c03_gap_scaling(report):
    cases = {"laplacian beta=1": IntegerSymbolSpec((0.0,)),
             "laplacian^2 beta=1/2": IntegerSymbolSpec((0.0,), 2, 0.5),
             "minima (0, pi) beta=1": IntegerSymbolSpec((0.0, np.pi))}
    parts, ok = [], True
    for name, spec in cases.items():
        rep = gap_scaling(spec, [32, 64, 128, 256, 512])
        ok &= abs(rep.slope + spec.b) <= 0.1
        parts.append(f"{name} slope {rep.slope:.4f} (target {-spec.b:g})")
    assert report(3, ok, "; ".join(parts))


def test_c04_free_ids(report):
    cases = [(Symbol.cosine_product([(0.0, 1.0)]), np.linspace(0.5, 3.5, 13)),
             (Symbol.cosine_product([(0.0, 0.5)]), np.linspace(0.5, 1.5, 11))]
    devs = [free_ids_check(s, 2048, e, cap=4097).max_deviation for s, e in cases]
    ok = max(devs) < 0.01
    assert report(4, ok, f"L=2048 max deviation: 2-2cos {devs[0]:.2e}, (2-2cos)^1/2 {devs[1]:.2e}")


DECAY_SET = {
    "three-minima example": THREE_MINIMA_EXAMPLE,
    "(2-2cos)^0.5": Symbol.cosine_product([(0.0, 0.5)]),
    "(2-2cos)^0.35": Symbol.cosine_product([(0.0, 0.35)]),
    "shifted ^0.7": Symbol.cosine_product([(1.1, 0.7)], 2.0),
    "two minima ^0.4 ^0.9": Symbol.cosine_product([(0.0, 0.4), (np.pi, 0.9)]),
    "2-2cos": Symbol.cosine_product([(0.0, 1.0)]),
}


def test_c05_off_diagonal_decay(report):
    parts, ok = [], True
    for name, s in DECAY_SET.items():
        d = fourier_coefficients(s, 1024).decay_report()
        ok &= d.nu_measured > 0 and np.isfinite(d.constant)
        parts.append(f"{name} nu'={d.nu_measured:.3f}")
    assert report(5, ok, ", ".join(parts))


def test_c06_temple(report):
    cases = {"laplacian beta=1": IntegerSymbolSpec((0.0,)),
             "laplacian beta=1/2": IntegerSymbolSpec((0.0,), 1, 0.5),
             "laplacian^2 beta=1/2": IntegerSymbolSpec((0.0,), 2, 0.5)}
    parts, ok = [], True
    for name, spec in cases.items():
        c0 = measure_C0(spec, [16, 32, 64, 128])
        rep = temple_verify(spec, Uniform(1.0), 64, 100, 1, c0, c_tilde=0.25)
        passed = int(round(rep.pass_rate * 100))
        ok &= passed == 100
        parts.append(f"{name} {passed}/100")
    assert report(6, ok, "L=64, c~=1/4: " + ", ".join(parts))


FLAT_SPECS = [((0.0,), 1), ((0.0,), 2), ((0.0, 2.0), 1), ((0.0, 2.0), 2), ((-2.0, 0.5, 2.5), 1),
              ((-2.0, 0.5, 2.5), 2)]


def _recorded_L0(spec, L_max):
    # smallest L past which the exact sup over the span meets the bound at every scanned L
    ok = [(L, basis_for(spec, L).size * basis_for(spec, L).projector_diagonal().max() <= 2 * spec.N)
          for L in range(spec.N, L_max + 1)]
    L0 = L_max + 1
    for L, good in reversed(ok):
        if not good:
            break
        L0 = L
    return L0


def test_c07_flatness(report):
    rng = np.random.default_rng(7)
    parts, ok = [], True
    for minima, abar in FLAT_SPECS:
        spec = IntegerSymbolSpec(minima, abar)
        L0 = _recorded_L0(spec, 256)
        tested = sorted({L for L in (L0, 2 * L0, 4 * L0, 64, 128, 256) if L0 <= L <= 256})
        fails = 0
        for L in tested:
            basis = basis_for(spec, L)
            for phi in random_span_vectors(basis, 1000, rng).T:
                rep = flatness_report(phi, basis, 0.5)
                fails += not (rep.sup_ok and rep.count_ok)
        ok &= L0 <= 256 and fails == 0
        parts.append(f"M={len(minima)} abar={abar} L0={L0} failures={fails}")
    assert report(7, ok, "; ".join(parts))


def test_c08_sandwich(report):
    e = np.linspace(0.02, 5.0, 60)
    specs = [IntegerSymbolSpec((0.0,)), IntegerSymbolSpec((0.0, 2.5), 2, 0.7)]
    bc_ok = all(sandwich_curves(sp, Uniform(1.0), 100, e, 50, 3).per_sample_ordered() for sp in specs)
    env = envelope_bounds(THREE_MINIMA_EXAMPLE)
    ec = envelope_curves(THREE_MINIMA_EXAMPLE, env, Uniform(1.0), 100, np.linspace(0.01, 8.0, 60), 50, 3)
    env_ok = ec.per_sample_ordered()
    ok = bc_ok and env_ok
    assert report(8, ok, f"Dirichlet <= Neumann per sample: {bc_ok}; curve(f2) <= curve(f) <= curve(f1) "
                         f"per sample (c={env.c_low:.4g}, C={env.C_up:.4g}): {env_ok}")


def test_c09_figure1(report, tmp_path):
    cfg = tmp_path / "fig.json"
    cfg.write_text(json.dumps({"kind": "figure1", "constants": [0.5, 3.0]}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "fig")]) == 0
    _, rows = read_csv(tmp_path / "fig" / "figure1.csv")
    t, f, lo, hi = np.array(rows, dtype=float).T
    n_low = int(np.count_nonzero(lo > f))
    n_high = int(np.count_nonzero(f > hi))
    ok = len(rows) == 4096 and n_low == 0 and n_high == 0
    assert report(9, ok, f"constants 0.5/3 over {len(rows)} points: lower > f at {n_low}, f > upper at {n_high}")


def test_c10_tail_fit_calibration(report):
    e = np.geomspace(0.01, 0.5, 12)
    synth = [abs(double_log_fit(e, np.exp(-e ** -s)).slope + s) for s in (0.5, 1 / 1.4, 1.0)]
    synth_ok = max(synth) < 1e-10
    free_err = []
    for beta in (0.7, 1.0):
        s = Symbol.cosine_product([(0.0, beta)])
        fe = np.geomspace(1e-6, 1e-3, 8)
        slope = log_log_fit(fe, free_ids_closed(s, fe)).slope
        free_err.append(abs(slope * 2 * beta - 1))
    free_ok = max(free_err) < 0.02
    est = neumann_tail_estimate(IntegerSymbolSpec((0.0,)), Uniform(1.0), np.geomspace(0.02, 0.2, 8), 1.0,
                                20000, 10)
    slope = est.fit(2.0).slope
    dir_ok = slope < 0 and abs(slope + 0.5) <= 0.25
    ok = synth_ok and free_ok and dir_ok
    assert report(10, ok, f"synthetic max error {max(synth):.1e}; free slope rel. error "
                          f"b=1.4 {free_err[0]:.2e}, b=2 {free_err[1]:.2e}; "
                          f"Neumann double-log slope {slope:.3f} on [0.02, 0.2] (target -0.5 +/- 50%)")


def test_c11_bump_scaling(report):
    parts, ok = [], True
    for N in (1, 2):
        rep = bump_scaling(N, [64, 128, 256, 512, 1024])
        shrinking = bool(np.all(np.diff(rep.deviations) < 0))
        ok &= abs(rep.slope - rep.target) <= 0.15 and shrinking
        parts.append(f"N={N} slope {rep.slope:.4f} (target {rep.target:g}), "
                     f"deviations {', '.join(f'{d:.1e}' for d in rep.deviations)}")
    assert report(11, ok, "; ".join(parts))


DETERMINISM_CONFIGS = [
    {"kind": "ids-sweep", "spec": {"minima": [0.0]}, "bc": "neumann", "L": 40,
     "energies": {"linspace": [0.05, 4.0, 12]}, "distribution": {"kind": "uniform", "hi": 1.0}, "n_samples": 300},
    {"kind": "sandwich", "spec": {"minima": [0.0, 2.5], "abar": 2, "beta": 0.7}, "L": 30,
     "energies": {"linspace": [0.05, 3.0, 8]}, "distribution": {"kind": "bernoulli", "p": 0.4, "value": 1.0},
     "n_samples": 200},
    {"kind": "temple", "spec": {"minima": [0.0]}, "L": 32, "n_samples": 60, "C0_Ls": [16, 32, 64],
     "distribution": {"kind": "uniform", "hi": 1.0}},
    {"kind": "probes", "spec": {"minima": [0.0]}, "distribution": {"kind": "power_law", "kappa": 0.5},
     "energies": [0.4, 0.2, 0.1], "n_samples": 300},
    {"kind": "tail-fit", "mode": "neumann", "spec": {"minima": [0.0]},
     "distribution": {"kind": "uniform", "hi": 1.0}, "energies": {"geomspace": [0.05, 0.2, 3]}, "n_samples": 300},
]


def _csv_bodies(out):
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


def test_c12_determinism(report, tmp_path):
    mismatches = []
    for i, cfg in enumerate(DETERMINISM_CONFIGS):
        path = tmp_path / f"cfg{i}.json"
        path.write_text(json.dumps({**cfg, "seed": 17}))
        first = tmp_path / f"a{i}"
        assert main(["run", "--config", str(path), "--out", str(first), "--threads", "1"]) == 0
        again = tmp_path / f"b{i}"
        code = main(["run", "--config", str(first / "manifest.json"), "--out", str(again), "--threads", "4"])
        assert code == 0
        if _csv_bodies(first) != _csv_bodies(again) or not _csv_bodies(first):
            mismatches.append(cfg["kind"])
    ok = not mismatches
    assert report(12, ok, f"{len(DETERMINISM_CONFIGS)} manifests rerun with 1 vs 4 threads; "
                          f"byte mismatches: {mismatches or 'none'}")
