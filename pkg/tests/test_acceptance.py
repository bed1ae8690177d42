"""End-to-end acceptance checks, one test per criterion.

Each test appends a PASS/FAIL line to ``conftest.ACCEPTANCE_LINES`` (echoed in
the terminal summary) before asserting.
"""

import math
import time

import numpy as np

from conftest import ACCEPTANCE_LINES, random_density
from gibbscmi.errors import NumericalError
from gibbscmi.experiments import DEFAULTS, resolve, run
from gibbscmi.experiments.runners import chain_tripartition
from gibbscmi.hamiltonian import ising
from gibbscmi.infomeasures import Tripartition, cmi, petz_recover, relative_entropy
from gibbscmi.lattice import Lattice
from gibbscmi.spectral import gibbs_state, reduce_to

def _report(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {n:2d} {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _timed(experiment, raw, threads=1):
    cfg = resolve(raw, experiment, DEFAULTS[experiment])
    t0 = time.perf_counter()
    rec = run(experiment, cfg, threads)
    return rec, time.perf_counter() - t0


def test_01_bp_identity():
    rec, wall = _timed("bp-verify", {"params": {"n_pairs": 100, "n_steps": 256, "quad_tol": 1e-10,
                                                 "beta_max": 2.0, "hastings": False}})
    f = rec.fits
    ok = f["max_residual"] < 1e-6 and f["min_doubling_ratio"] >= 2 and wall < 60
    _report(1, "belief-propagation identity", ok,
            f"max residual {f['max_residual']:.2e}, min doubling ratio {f['min_doubling_ratio']:.2f} "
            f"over {f['doubling_pairs_checked']} discretization-dominated pairs "
            f"(all pairs {f['min_doubling_ratio_all']:.2f}), {wall:.1f}s")


def test_02_connected_log():
    rec, _ = _timed("efflog-verify", {"params": {"steps": [128, 256, 512], "truncation": False}})
    f = rec.fits
    worst = max(f["max_error_at_max_steps"].values())
    slopes = list(f["first_order_slope"].values())
    ok = worst < 1e-5 and all(1.8 <= s <= 2.2 for s in slopes)
    _report(2, "connected-exponential logarithm", ok,
            f"max error at 512 steps {worst:.2e}, first-order remainder slopes {[round(s, 3) for s in slopes]}")


def test_03_commuting_zero():
    n = 10
    lat = Lattice.chain(n)
    H = ising(lat, J=1.0, h=0.4)
    Hd = H.to_dense()
    spec = Hd.spectrum
    worst_cmi, worst_petz, skipped = 0.0, 0.0, []
    for beta in (0.5, 1.0, 2.0):
        rho = gibbs_state(Hd, beta, spec)
        parts = [chain_tripartition(n, R, "exhaustive") for R in range(2, 9)]
        parts += [chain_tripartition(n, R, "window", 2, 2) for R in range(2, 7)]
        for part in parts:
            worst_cmi = max(worst_cmi, abs(cmi(rho, part, lat).cmi))
            if not part.exhaustive:
                continue
            try:
                worst_petz = max(worst_petz, petz_recover(rho, part.B, part.C).error)
            except NumericalError as exc:
                # rho_B^{-1/2} needs lambda_min(rho_B) above the eigenvalue floor
                if exc.code != "not-positive-definite":
                    raise
                skipped.append((beta, len(part.B), exc.details["lambda_min"]))
    ok = worst_cmi < 1e-10 and worst_petz < 1e-8 and len(skipped) <= 1
    _report(3, "commuting chain CMI and recovery", ok,
            f"max |CMI| {worst_cmi:.2e}, max Petz error {worst_petz:.2e} over {21 - len(skipped)} cases, "
            f"skipped (beta, |B|, lambda_min(rho_B)) {[(b, k, f'{lam:.1e}') for b, k, lam in skipped]}")


def test_04_cmi_decay():
    rec, wall = _timed("cmi-scan", {"lattice": {"type": "chain", "n": 12}, "betas": [0.5, 1.0, 2.0],
                                    "params": {"radii": [2, 3, 4, 5], "fit_min": 2, "fit_max": 5}})
    per = rec.fits["per_beta"]
    slopes = {b: per[b]["slope"] for b in per}
    r2 = {b: per[b]["r2"] for b in per}
    ok = (all(per[b]["status"] == "ok" for b in per) and all(s < 0 for s in slopes.values())
          and all(v >= 0.95 for v in r2.values()) and rec.fits["slope_magnitude_nonincreasing"] and wall < 300)
    _report(4, "CMI decay shape", ok,
            f"slopes {({b: round(s, 3) for b, s in slopes.items()})}, min R^2 {min(r2.values()):.4f}, {wall:.1f}s")


def _random_parts(rng, n, min_A=1):
    labels = rng.integers(0, 4, size=n)  # 0=A 1=B 2=C 3=traced out
    labels[rng.choice(n, min_A + 1, replace=False)] = [0] * min_A + [2]
    return [[i for i in range(n) if labels[i] == k] for k in range(3)]


def test_05_entropy_inequalities():
    rng = np.random.default_rng(2024)
    ssa = mono = relent = 0
    worst = [math.inf, math.inf, math.inf]
    for i in range(1000):
        n = 3 + i % 4
        rho = random_density(n, rng, full_rank=bool(i % 2))
        A, B, C = _random_parts(rng, n)
        val = cmi(rho, Tripartition(A, B, C)).cmi
        worst[0] = min(worst[0], val)
        ssa += val < -1e-10

        A, B, C = _random_parts(rng, n, min_A=2)
        A_sub = sorted(rng.choice(A, rng.integers(1, len(A)), replace=False).tolist())
        gap = cmi(rho, Tripartition(A, B, C)).cmi - cmi(rho, Tripartition(A_sub, B, C)).cmi
        worst[1] = min(worst[1], gap)
        mono += gap < -1e-10

        sigma = random_density(n, rng)
        keep = sorted(rng.choice(n, rng.integers(1, n), replace=False).tolist())
        d = relative_entropy(rho, sigma) - relative_entropy(reduce_to(rho, keep), reduce_to(sigma, keep))
        worst[2] = min(worst[2], d)
        relent += d < -1e-10
    ok = ssa == mono == relent == 0
    _report(5, "entropy inequalities", ok,
            f"violations SSA {ssa}, CMI monotonicity {mono}, relative-entropy monotonicity {relent}; "
            f"minima {[f'{w:.1e}' for w in worst]}")


def test_06_ptp_bounds():
    rec, _ = _timed("ptp-verify", {"params": {"n_states": 200}})
    f = rec.fits
    ok = f["raw_violations"] == 0 and f["normalized_violations"] == 0 and f["identity_error"] < 1e-12
    _report(6, "partial-trace projection bounds", ok,
            f"violations {f['raw_violations']}/{f['normalized_violations']}, identity error {f['identity_error']:.1e}, "
            f"max ratios {f['max_raw_ratio']:.3f}/{f['max_normalized_ratio']:.3f}")


def test_07_log_continuity():
    rec, _ = _timed("continuity-verify", {"params": {"n_pairs": 1000, "fd_step": 1e-5}})
    f = rec.fits
    pairs = rec.tables["pairs"]
    checked = sum(1 for b in pairs.column("bound") if not math.isnan(b))
    ok = (checked == 1000 and f["violations"] == 0 and f["max_asymmetry_ratio"] <= 1.0
          and f["max_log_derivative_rel_error"] < 1e-6)
    _report(7, "operator-logarithm continuity", ok,
            f"{checked} pairs, {f['violations']} violations, max gap/bound {f['max_gap_over_bound']:.3f}, "
            f"max delta(s,r)/(2 delta(r,s)) {f['max_asymmetry_ratio']:.3f}, "
            f"FD rel error {f['max_log_derivative_rel_error']:.1e}")


def test_08_entanglement_hamiltonian_locality():
    rec, _ = _timed("enthal-locality", {"lattice": {"type": "chain", "n": 10}, "betas": [1.0],
                                        "params": {"L": [0, 1, 2, 3, 4, 5], "hnorm_sizes": []}})
    prof = rec.fits["profiles"]
    tfim, comm = prof["model@1.0"], prof["commuting@1.0"]
    ok = 0 < tfim["rate"] < math.inf and tfim["residual"] < 0.1 and comm["max_beyond_range"] < 1e-12
    _report(8, "entanglement-Hamiltonian locality", ok,
            f"TFIM rate {tfim['rate']:.3f}, log residual {tfim['residual']:.3f}; "
            f"commuting chain beyond range {comm['max_beyond_range']:.1e}")


def test_09_hstar_norm_bound():
    rec, _ = _timed("enthal-locality", {"params": {"hnorm_sizes": [6, 8], "hnorm_max_L": 4,
                                                   "hnorm_betas": [0.5, 1.0, 1.5, 2.0]}})
    rows = rec.tables["hstar_norm"]
    v = rec.fits["hstar_norm_violations"]
    ok = v == 0 and len(rows.rows) > 0
    margin = min(b - x for x, b in zip(rows.column("norm"), rows.column("bound")))
    _report(9, "effective-Hamiltonian norm bound", ok, f"{len(rows.rows)} cases, {v} violations, min slack {margin:.3f}")


def test_10_enhancement_exponent():
    rec, _ = _timed("appendix-demo", {"params": {"v0": [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0], "eps": 1e-3}})
    k = rec.fits["exponent"]
    _report(10, "exponential enhancement exponent", abs(k - 2.0) <= 0.2, f"exponent {k:.4f}")


def test_11_learning():
    rec, wall = _timed("learn-1d", {"lattice": {"type": "chain", "n": 10}, "betas": [1.0],
                                    "params": {"window": 6, "core": 2, "shots": None,
                                               "sweep_shots": [1000, 10000, 100000, 1000000, 10000000]}})
    f = rec.fits
    ok = f["max_err"] < 1e-3 and abs(f["sweep_slope"] + 0.5) <= 0.1 and wall < 180
    _report(11, "Hamiltonian learning", ok,
            f"max coupling error {f['max_err']:.2e} over {f['n_couplings']} couplings, "
            f"shot-noise slope {f['sweep_slope']:.3f} (pre-clip {f['sweep_slope_raw']:.3f}), {wall:.1f}s")


def test_12_eof_clustering():
    rec, _ = _timed("eof-scan", {"lattice": {"type": "chain", "n": 10}, "betas": [1.0]})
    f = rec.fits["per_beta"]["1.0"]
    ok = f["max_eof_distance_ge_3"] < 1e-4 and f["nonincreasing_distance_ge_3"]
    _report(12, "entanglement-of-formation clustering", ok,
            f"max EoF at d>=3 {f['max_eof_distance_ge_3']:.1e}, nonincreasing {f['nonincreasing_distance_ge_3']}")
