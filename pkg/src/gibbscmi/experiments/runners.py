"""One runner per subcommand.  Each takes a resolved config and returns an ExperimentRecord."""

import math
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import __version__
from ..beliefprop import (
    FilterSpec,
    bp_log_error,
    bp_operator,
    bp_truncate,
    split_hamiltonian,
)
from ..continuity import (
    log_derivative_fd,
    log_derivative_oracle,
    perturbed_pair,
    random_state,
    relerr_report,
)
from ..effham import (
    connected_log_ode,
    enhancement_scan,
    entanglement_hamiltonian,
    exponential_fit,
    first_order_remainder,
    locality_profile,
    min_eigenvalue_bound,
    ptp_build,
    ptp_error,
    truncated_connected_log,
)
from ..errors import ConfigError, ModelError, RegionError
from ..hamiltonian import PAULI, build_model, ising, pauli_matrix
from ..infomeasures import (
    CMI_CSV_HEADER,
    Tripartition,
    cmi,
    concurrence,
    eof_two_qubit,
    is_ppt,
    mutual_information,
    petz_recover,
    squashed_bound,
)
from ..lattice import Lattice, Region, boundary
from ..learning import (
    ShotPlan,
    learn_couplings_1d,
    reconstruct_marginal,
    sample_window_expectations,
)
from ..spectral import (
    DenseOperator,
    dense_cap,
    gibbs_state,
    lieb_robinson_profile,
    operator_norm,
    random_hermitian,
    reduce_to,
    set_dense_cap,
    trace_norm,
)
from .record import ExperimentRecord


def _defaults(params, lattice=None, model=None, betas=(1.0,)):
    base = {
        "seed": 0,
        "lattice": lattice or {"type": "chain", "n": 10},
        "model": model or {"model": "tfim", "J": 1.0, "g": 1.0},
        "betas": list(betas),
        "params": params,
        "dense_cap": 4096,
    }
    return base


DEFAULTS = {
    "cmi-scan": _defaults(
        {
            "mode": "exhaustive",
            "radii": [2, 3, 4, 5, 6],
            "size_A": 1,
            "size_C": 1,
            "fit_min": 2,
            "fit_max": 5,
            "noise_floor": 1e-12,
            "min_fit_points": 4,
        },
        lattice={"type": "chain", "n": 12},
        betas=(0.5, 1.0, 2.0),
    ),
    "bp-verify": _defaults(
        {
            "n_pairs": 20,
            "n_qubits": 3,
            "beta_max": 2.0,
            "n_steps": 256,
            "quad_tol": 1e-10,
            "method": "quadrature",
            "doubling": True,
            "doubling_floor": 1e-11,
            "hastings": True,
        }
    ),
    "bp-truncate": _defaults(
        {
            "L": [0, 1, 2, 3],
            "radii": [0, 1, 2, 3],
            "n_steps": 128,
            "quad_tol": 1e-10,
            "method": "auto",
            "lr_fit": True,
            "lr_times": [0.25, 0.5, 0.75, 1.0],
        },
        lattice={"type": "chain", "n": 8},
    ),
    "efflog-verify": _defaults(
        {
            "steps": [128, 256, 512],
            "tau_max": 1.0,
            "v_scale": 0.3,
            "eps": [1e-2, 1e-3, 1e-4],
            "truncation": True,
            "support": [0],
            "radii": [0, 1, 2, 3],
            "truncation_steps": 128,
        },
        lattice={"type": "chain", "n": 6},
    ),
    "enthal-locality": _defaults(
        {
            "L": [0, 1, 2, 3, 4, 5],
            "radii": [0, 1, 2, 3, 4, 5],
            "randomized": False,
            "n_unitaries": 64,
            "commuting_h": 0.4,
            "hnorm_sizes": [6, 8],
            "hnorm_max_L": 4,
            "hnorm_betas": [0.5, 1.0, 1.5, 2.0],
        }
    ),
    "ptp-verify": _defaults(
        {
            "n_states": 200,
            "taus": [0.5, 1.0, 2.0, 4.0, 8.0],
            "regions": [[0], [1], [0, 1]],
        },
        lattice={"type": "chain", "n": 3},
    ),
    "continuity-verify": _defaults(
        {
            "n_pairs": 1000,
            "dims": [2, 4, 8],
            "scale": 0.5,
            "fd_pairs": 100,
            "fd_step": 1e-5,
        }
    ),
    "recovery-scan": _defaults(
        {
            "radii": [2, 3, 4, 5],
            "rotated": True,
            "n_rotations": 41,
        },
        lattice={"type": "chain", "n": 8},
        betas=(0.5, 1.0, 2.0),
    ),
    "eof-scan": _defaults({"distances": [1, 2, 3, 4, 5, 6, 7]}),
    "mi-localize": _defaults({"gaps": [0, 1, 2]}),
    "learn-1d": _defaults(
        {
            "window": 6,
            "core": 2,
            "shots": None,
            "sweep": True,
            "sweep_shots": [1000, 10000, 100000, 1000000, 10000000],
            "sweep_seeds": 10,
            "sweep_window": 6,
            "sweep_start": 2,
        }
    ),
    "appendix-demo": _defaults(
        {"v0": [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0], "eps": 1e-3},
    ),
}


class Context:
    """Runtime knobs that do not change results (thread count)."""

    def __init__(self, threads=1):
        self.threads = max(1, int(threads))

    def map(self, fn, items):
        items = list(items)
        if self.threads == 1 or len(items) < 2:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.threads) as pool:
            return list(pool.map(fn, items))


# -- shared helpers -------------------------------------------------------------


def _lattice(cfg):
    try:
        return Lattice.from_config(cfg["lattice"])
    except (RegionError, ModelError, ValueError, KeyError) as exc:
        raise ConfigError("bad-lattice", str(exc)) from exc


def _model(lat, cfg):
    try:
        return build_model(lat, cfg["model"])
    except (ModelError, RegionError) as exc:
        raise ConfigError("bad-model", str(exc)) from exc


def _region(lat, sites, name):
    try:
        reg = lat.region(sites)
    except RegionError as exc:
        raise ConfigError("bad-region", f"{name}: {exc}") from exc
    if len(reg) != len(sites) or (reg and reg[0] < 0):
        raise ConfigError("bad-region", f"{name}: invalid sites {sites}")
    return reg


def _require_chain(lat, what):
    if lat.dimension != 1:
        raise ConfigError("bad-lattice", f"{what} needs a chain lattice")


def log_linear_fit(x, y, floor=1e-12, min_points=4):
    """Fit log y = a + slope x over points with y > floor.  Fewer than min_points -> refused."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > floor
    n = int(keep.sum())
    out = {"n_points": n, "slope": math.nan, "intercept": math.nan, "rate": math.nan, "r2": math.nan,
           "residual_rms": math.nan, "status": "ok"}
    if n < min_points:
        out["status"] = "refused"
        return out
    xs, ly = x[keep], np.log(y[keep])
    slope, icpt = np.polyfit(xs, ly, 1)
    resid = ly - (icpt + slope * xs)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    out.update(slope=float(slope), intercept=float(icpt), rate=float(-slope), r2=r2,
               residual_rms=float(np.sqrt(np.mean(resid**2))))
    return out


def loglog_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def chain_tripartition(n, R, mode, size_A=1, size_C=1):
    """A, B, C on an open chain with d(A, C) = R, so |B| = R - 1.

    ``exhaustive``: A and C run to the chain ends, B sits in the middle.
    ``window``: A and C are fixed-size blocks around a centred B.
    """
    nb = R - 1
    if mode == "exhaustive":
        a = (n - nb) // 2
        if a < 1 or n - a - nb < 1:
            raise ConfigError("bad-region", f"R={R} does not fit an exhaustive split of {n} sites")
        return Tripartition(range(a), range(a, a + nb), range(a + nb, n), exhaustive=True)
    if mode == "window":
        total = size_A + nb + size_C
        if total > n or size_A < 1 or size_C < 1:
            raise ConfigError("bad-region", f"R={R} with |A|={size_A}, |C|={size_C} does not fit {n} sites")
        s0 = (n - total) // 2
        A = range(s0, s0 + size_A)
        B = range(s0 + size_A, s0 + size_A + nb)
        C = range(s0 + size_A + nb, s0 + total)
        return Tripartition(A, B, C)
    raise ConfigError("bad-param", f"unknown cmi-scan mode {mode!r}")


# -- runners --------------------------------------------------------------------


def run_cmi_scan(cfg, rec, ctx):
    p = cfg["params"]
    lat = _lattice(cfg)
    _require_chain(lat, "cmi-scan")
    H = _model(lat, cfg)
    n = lat.n_sites
    parts = [(R, chain_tripartition(n, R, p["mode"], p["size_A"], p["size_C"])) for R in p["radii"]]
    Hd = H.to_dense()
    spec = Hd.spectrum  # one diagonalization serves every beta

    def cell(beta):
        rho = gibbs_state(Hd, beta, spec)
        return [cmi(rho, part, lat, beta) for _, part in parts]

    results = ctx.map(cell, cfg["betas"])
    table = rec.table("cmi", CMI_CSV_HEADER)
    fits = rec.table("fits", ("beta", "n_points", "slope", "intercept", "rate", "r2", "residual_rms", "status"))
    per_beta = {}
    for beta, rows in zip(cfg["betas"], results):
        for r in rows:
            table.add(*r.csv_row())
        sel = [(r.R, r.cmi) for r in rows if p["fit_min"] <= r.R <= p["fit_max"]]
        f = log_linear_fit([s[0] for s in sel], [s[1] for s in sel], p["noise_floor"], p["min_fit_points"])
        fits.add(beta, f["n_points"], f["slope"], f["intercept"], f["rate"], f["r2"], f["residual_rms"], f["status"])
        f["max_cmi_R_ge_2"] = max((r.cmi for r in rows if r.R >= 2), default=math.nan)
        per_beta[str(beta)] = f
    slopes = [per_beta[str(b)]["slope"] for b in sorted(cfg["betas"])]
    rec.fits = {
        "per_beta": per_beta,
        "slope_magnitude_nonincreasing": bool(all(abs(a) >= abs(b) for a, b in zip(slopes, slopes[1:]))),
    }


def run_bp_verify(cfg, rec, ctx):
    p = cfg["params"]
    rng = np.random.default_rng(cfg["seed"])
    dim = 2 ** p["n_qubits"]
    quad = p["quad_tol"]
    table = rec.table("bp", ("pair", "beta", "n_steps", "quad_tol", "residual", "residual_doubled", "ratio",
                             "hastings_residual"))
    cases = []
    for k in range(p["n_pairs"]):
        A = random_hermitian(dim, rng, unit_norm=False)
        B = random_hermitian(dim, rng) * rng.uniform(0.1, 1.0)
        beta = float(rng.uniform(0.05, 1.0) * p["beta_max"])
        cases.append((k, A, B, beta))

    def one(case):
        k, A, B, beta = case
        kw = {"method": p["method"], "quad": FilterSpec(beta, "f", quad)}
        r1 = bp_operator(A, B, beta, p["n_steps"], **kw).residual
        r2 = bp_operator(A, B, beta, 2 * p["n_steps"], **kw).residual if p["doubling"] else math.nan
        rh = bp_operator(A, B, beta, p["n_steps"], variant="hastings", **kw).residual if p["hastings"] else math.nan
        return (k, beta, p["n_steps"], quad, r1, r2, r1 / r2 if r2 > 0 else math.inf, rh)

    for row in ctx.map(one, cases):
        table.add(*row)
    res = table.column("residual")
    ratios = [x for x in table.column("ratio") if not math.isnan(x)]
    # below the floor the quadrature error dominates and halving the step cannot help
    above = [x for x, r in zip(table.column("ratio"), res) if not math.isnan(x) and r >= p["doubling_floor"]]
    rec.fits = {
        "max_residual": max(res, default=math.nan),
        "min_doubling_ratio": min(above, default=math.nan),
        "doubling_pairs_checked": len(above),
        "min_doubling_ratio_all": min(ratios, default=math.nan),
        "max_hastings_residual": max(table.column("hastings_residual"), default=math.nan),
    }


def run_bp_truncate(cfg, rec, ctx):
    p = cfg["params"]
    lat = _lattice(cfg)
    H = _model(lat, cfg)
    L = _region(lat, p["L"], "L")
    if not lat.complement(L):
        raise ConfigError("bad-region", "L must leave a nonempty complement")
    lr = None
    if p["lr_fit"]:
        X = boundary(lat, L)[:1]
        Ys = [Region([s]) for s in lat.sites if lat.site_distance(X[0], s) > 0]
        prof = lieb_robinson_profile(H, X, Ys, p["lr_times"], seed=cfg["seed"])
        lr = (prof.C, prof.v) if math.isfinite(prof.C) else None
        rec.fits["lieb_robinson"] = {"C": prof.C, "v": prof.v, "mu": prof.mu, "residual": prof.residual}
    A, B = split_hamiltonian(H, L)
    table = rec.table("truncation", ("beta", "n_steps", "quad_tol", "residual", "r", "gen_error", "state_error",
                                     "log_error", "soft_bound", "log_error_shape"))
    rec.fits["per_beta"] = {}
    for beta in cfg["betas"]:
        quad = FilterSpec(beta, "f", p["quad_tol"])
        bp = bp_operator(A, B, beta, p["n_steps"], quad=quad, method=p["method"], keep_trace=True)
        errs = []
        for r in p["radii"]:
            rep = bp_truncate(bp, lat, L, r, H, lr)
            log_err, shape = bp_log_error(A, B, bp.matrix, rep.operator.matrix, beta, rep.generator_error)
            table.add(beta, p["n_steps"], p["quad_tol"], bp.residual, r, rep.generator_error, rep.state_error,
                      log_err, rep.soft_bound, shape)
            errs.append(rep.generator_error)
        amp, rate, res, npts = exponential_fit(p["radii"], errs)
        rec.fits["per_beta"][str(beta)] = {"amplitude": amp, "rate": rate, "residual": res, "n_points": npts,
                                           "bp_residual": bp.residual}


def _efflog_fixtures(seed, v_scale):
    X = PAULI["X"]
    Z = PAULI["Z"]
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(4, 4))
    A2 = (G + G.T) / 2
    G = rng.normal(size=(4, 4))
    V2 = (G + G.T) / 4
    return {"qubit": (Z.astype(float), v_scale * X.astype(float)), "two-qubit": (A2, V2)}


def run_efflog_verify(cfg, rec, ctx):
    p = cfg["params"]
    fixtures = _efflog_fixtures(cfg["seed"], p["v_scale"])
    conv = rec.table("convergence", ("fixture", "beta", "n_steps", "error"))
    order = rec.table("first_order", ("fixture", "beta", "eps", "remainder", "remainder_over_eps2"))
    fits = {"orders": {}, "first_order_slope": {}, "max_error_at_max_steps": {}}
    for beta in cfg["betas"]:
        for name, (A, V) in fixtures.items():
            errs = []
            for n in p["steps"]:
                e = connected_log_ode(A, V, beta, p["tau_max"], n).error
                conv.add(name, beta, n, e)
                errs.append(e)
            fits["orders"][f"{name}@{beta}"] = loglog_slope(p["steps"], errs) if min(errs) > 0 else math.nan
            fits["max_error_at_max_steps"][f"{name}@{beta}"] = errs[-1]
            rem = [first_order_remainder(A, V, beta, e) for e in p["eps"]]
            for e, r in zip(p["eps"], rem):
                order.add(name, beta, e, r, r / e**2)
            fits["first_order_slope"][f"{name}@{beta}"] = loglog_slope(p["eps"], rem)
    if p["truncation"]:
        lat = _lattice(cfg)
        H = _model(lat, cfg)
        support = _region(lat, p["support"], "support")
        dims = tuple(lat.local_dims[s] for s in support)
        Vop = DenseOperator(support, dims, p["v_scale"] * _x_on(support))
        tr = rec.table("truncation", ("beta", "r", "region_size", "unitary_error", "log_error"))
        fits["truncation"] = {}
        for beta in cfg["betas"]:
            full, rows = truncated_connected_log(H, Vop, support, p["radii"], beta, p["tau_max"], p["truncation_steps"])
            for row in rows:
                tr.add(beta, row.r, len(row.region), row.unitary_error, row.log_error)
            amp, rate, res, npts = exponential_fit([r.r for r in rows], [r.log_error for r in rows])
            fits["truncation"][str(beta)] = {"amplitude": amp, "rate": rate, "residual": res,
                                             "full_error": full.error}
    rec.fits = fits


def _x_on(support):
    M = np.ones((1, 1))
    for _ in support:
        M = np.kron(M, pauli_matrix("X").real)
    return M


def run_enthal_locality(cfg, rec, ctx):
    p = cfg["params"]
    lat = _lattice(cfg)
    H = _model(lat, cfg)
    L = _region(lat, p["L"], "L")
    if not lat.complement(L):
        raise ConfigError("bad-region", "L must leave a nonempty complement")
    center = boundary(lat, L)
    prof_t = rec.table("profile", ("model", "beta", "r", "value"))
    fits = {"profiles": {}}
    models = [("model", H)]
    if p["commuting_h"] is not None:
        models.append(("commuting", ising(lat, h=p["commuting_h"])))
    for label, Hm in models:
        Hd = Hm.to_dense()
        spec = Hd.spectrum
        for beta in cfg["betas"]:
            rho = gibbs_state(Hd, beta, spec)
            eh = entanglement_hamiltonian(rho, L, beta, Hm)
            prof = locality_profile(eh.Vstar, center, p["radii"], lat, p["randomized"], p["n_unitaries"], cfg["seed"])
            for r, v in prof.csv_rows():
                prof_t.add(label, beta, r, v)
            rec_fit = prof.fit_record()
            rec_fit["n_points"] = prof.fit_points
            k = max(1, int(Hm.locality) - 1)
            rec_fit["max_beyond_range"] = max((v for r, v in prof.csv_rows() if r >= k), default=0.0)
            fits["profiles"][f"{label}@{beta}"] = rec_fit
    hn = rec.table("hstar_norm", ("n", "beta", "L_start", "L_size", "norm", "bound", "ok"))
    violations = 0
    for n in p["hnorm_sizes"]:
        lat_n = Lattice.chain(n)
        try:
            Hn = build_model(lat_n, cfg["model"])
        except (ModelError, RegionError) as exc:
            raise ConfigError("bad-model", str(exc)) from exc
        Hd = Hn.to_dense()
        spec = Hd.spectrum
        J0 = Hn.decay_meta.J0bar
        for beta in p["hnorm_betas"]:
            rho = gibbs_state(Hd, beta, spec)
            for size in range(1, p["hnorm_max_L"] + 1):
                for a in range(n - size + 1):
                    Ls = Region(range(a, a + size))
                    hs = entanglement_hamiltonian(rho, Ls, beta).Hstar
                    norm = beta * operator_norm(hs.matrix)
                    bound = min_eigenvalue_bound(beta, J0, size, lat_n.hilbert_dim(Ls))
                    ok = norm <= bound
                    violations += not ok
                    hn.add(n, beta, a, size, norm, bound, ok)
    fits["hstar_norm_violations"] = violations
    rec.fits = fits


def run_ptp_verify(cfg, rec, ctx):
    p = cfg["params"]
    lat = _lattice(cfg)
    rng = np.random.default_rng(cfg["seed"])
    D = lat.hilbert_dim()
    builds = [(reg, ptp_build(lat, _region(lat, reg, "regions"))) for reg in p["regions"]]
    table = rec.table("ptp", ("state", "L", "tau", "raw_error", "raw_bound", "normalized_error", "normalized_bound"))
    ident = 0.0
    for _, ptp in builds:
        for tau in p["taus"]:
            ident = max(ident, float(np.abs(ptp.P_tau(tau) - ptp.P_tau_expm(tau)).max()))
    viol_raw = viol_norm = 0
    worst_raw = worst_norm = 0.0
    for k in range(p["n_states"]):
        rho = DenseOperator(lat.sites, lat.local_dims, random_state(D, rng))
        for reg, ptp in builds:
            for tau in p["taus"]:
                e = ptp_error(ptp, rho, tau)
                table.add(k, list(reg), tau, e.raw_error, e.raw_bound, e.normalized_error, e.normalized_bound)
                viol_raw += e.raw_error > e.raw_bound
                viol_norm += e.normalized_error > e.normalized_bound
                worst_raw = max(worst_raw, e.raw_error / e.raw_bound)
                worst_norm = max(worst_norm, e.normalized_error / e.normalized_bound)
    rec.fits = {
        "identity_error": ident,
        "raw_violations": viol_raw,
        "normalized_violations": viol_norm,
        "max_raw_ratio": worst_raw,
        "max_normalized_ratio": worst_norm,
    }


def run_continuity_verify(cfg, rec, ctx):
    p = cfg["params"]
    rng = np.random.default_rng(cfg["seed"])
    table = rec.table("pairs", ("pair", "dim", "delta_rho_sigma", "delta_sigma_rho", "lambda_min", "log_gap",
                                "bound", "gap_over_bound"))
    violations = 0
    worst = 0.0
    asym = 0.0
    for k in range(p["n_pairs"]):
        dim = int(p["dims"][k % len(p["dims"])])
        rho, sigma = perturbed_pair(dim, rng, scale=p["scale"])
        rep = relerr_report(rho, sigma)
        ratio = rep.log_gap / rep.bound if rep.bound > 0 else math.nan
        if not math.isnan(rep.bound):
            violations += rep.log_gap > rep.bound
            worst = max(worst, ratio)
        if rep.delta_rs <= 0.5 and rep.delta_rs > 0:
            asym = max(asym, rep.delta_sr / (2 * rep.delta_rs))
        table.add(k, dim, *rep.csv_row(), ratio)
    fd = rec.table("log_derivative", ("pair", "dim", "abs_error", "rel_error"))
    worst_fd = 0.0
    for k in range(p["fd_pairs"]):
        dim = int(p["dims"][k % len(p["dims"])])
        rho = random_state(dim, rng, rank_boost=dim * 0.5)
        G = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        Delta = 0.5 * (G + G.conj().T)
        exact = log_derivative_oracle(rho, Delta)
        approx = log_derivative_fd(rho, Delta, p["fd_step"])
        err = operator_norm(exact - approx)
        rel = err / operator_norm(exact)
        worst_fd = max(worst_fd, rel)
        fd.add(k, dim, err, rel)
    rec.fits = {
        "violations": violations,
        "max_gap_over_bound": worst,
        "max_asymmetry_ratio": asym,
        "max_log_derivative_rel_error": worst_fd,
    }


def run_recovery_scan(cfg, rec, ctx):
    p = cfg["params"]
    lat = _lattice(cfg)
    _require_chain(lat, "recovery-scan")
    H = _model(lat, cfg)
    Hd = H.to_dense()
    spec = Hd.spectrum
    n = lat.n_sites
    parts = [(R, chain_tripartition(n, R, "exhaustive")) for R in p["radii"]]

    def cell(beta):
        rho = gibbs_state(Hd, beta, spec)
        out = []
        for R, part in parts:
            c = cmi(rho, part, lat, beta).cmi
            plain = petz_recover(rho, part.B, part.C).error
            rot = petz_recover(rho, part.B, part.C, "rotated", p["n_rotations"]).error if p["rotated"] else math.nan
            fr = 2 * math.sqrt(max(0.0, 1 - math.exp(-max(c, 0.0))))
            out.append((beta, R, len(part.B), c, plain, rot, fr))
        return out

    table = rec.table("recovery", ("beta", "R", "size_B", "cmi", "petz_plain_error", "petz_rotated_error",
                                   "rotated_reference_bound"))
    fits = {}
    for beta, rows in zip(cfg["betas"], ctx.map(cell, cfg["betas"])):
        for row in rows:
            table.add(*row)
        fits[str(beta)] = {
            "max_cmi": max(r[3] for r in rows),
            "max_petz_plain_error": max(r[4] for r in rows),
            "max_petz_rotated_error": max(r[5] for r in rows),
        }
    rec.fits = {"per_beta": fits}


def run_eof_scan(cfg, rec, ctx):
    p = cfg["params"]
    lat = _lattice(cfg)
    _require_chain(lat, "eof-scan")
    H = _model(lat, cfg)
    Hd = H.to_dense()
    spec = Hd.spectrum
    n = lat.n_sites
    table = rec.table("eof", ("beta", "d", "site_a", "site_b", "eof", "concurrence", "ppt", "mutual_info",
                              "squashed_bound"))
    fits = {}
    for beta in cfg["betas"]:
        rho = gibbs_state(Hd, beta, spec)
        eofs = []
        for d in p["distances"]:
            a = (n - 1 - d) // 2
            b = a + d
            if d < 1 or b >= n:
                raise ConfigError("bad-region", f"distance {d} does not fit {n} sites")
            pair = reduce_to(rho, [a, b])
            e = eof_two_qubit(pair)
            sq = squashed_bound(rho, [a], [b])
            table.add(beta, d, a, b, e, concurrence(pair), is_ppt(pair), mutual_information(rho, [a], [b]), sq.bound)
            eofs.append((d, e))
        far = [e for d, e in eofs if d >= 3]
        fits[str(beta)] = {
            "max_eof_distance_ge_3": max(far, default=math.nan),
            "nonincreasing_distance_ge_3": bool(all(x >= y - 1e-15 for x, y in zip(far, far[1:]))),
        }
    rec.fits = {"per_beta": fits}


def run_mi_localize(cfg, rec, ctx):
    """I(A:B) against I(A2:B2) where A2, B2 are width-w windows of A and B facing the gap."""
    p = cfg["params"]
    lat = _lattice(cfg)
    _require_chain(lat, "mi-localize")
    H = _model(lat, cfg)
    Hd = H.to_dense()
    spec = Hd.spectrum
    n = lat.n_sites
    table = rec.table("mi", ("beta", "gap", "w", "mi_full", "mi_local", "difference"))
    fits = {}
    for beta in cfg["betas"]:
        rho = gibbs_state(Hd, beta, spec)
        for gap in p["gaps"]:
            a = (n - gap) // 2
            A = Region(range(a))
            B = Region(range(a + gap, n))
            if not A or not B:
                raise ConfigError("bad-region", f"gap {gap} leaves an empty side on {n} sites")
            full = mutual_information(rho, A, B)
            diffs = []
            for w in range(1, min(len(A), len(B)) + 1):
                A2, B2 = Region(A[-w:]), Region(B[:w])
                loc = mutual_information(rho, A2, B2)
                table.add(beta, gap, w, full, loc, full - loc)
                diffs.append(full - loc)
            amp, rate, res, npts = exponential_fit(list(range(1, len(diffs) + 1)), diffs)
            fits[f"{beta}/gap={gap}"] = {
                "mutual_information": full,
                "min_difference": min(diffs),
                "nonincreasing": bool(all(x >= y - 1e-12 for x, y in zip(diffs, diffs[1:]))),
                "rate": rate,
                "residual": res,
            }
    rec.fits = fits


def run_learn_1d(cfg, rec, ctx):
    p = cfg["params"]
    lat = _lattice(cfg)
    _require_chain(lat, "learn-1d")
    H = _model(lat, cfg)
    if len(cfg["betas"]) != 1:
        raise ConfigError("bad-param", "learn-1d takes a single beta")
    beta = cfg["betas"][0]
    n = lat.n_sites
    rho = gibbs_state(H, beta)
    plan = ShotPlan.sliding(n, p["window"], p["shots"], cfg["seed"])
    report = learn_couplings_1d(H, beta, plan, p["core"], rho=rho)
    report.config = rec.config
    rec.payloads["learn_report"] = {
        "config": rec.config,
        "per_coupling": report.per_coupling,
        "max_err": report.max_err,
        "shots": report.shots,
        "window_size": report.window_size,
        "core": report.core,
    }
    ct = rec.table("couplings", ("sites", "window", "abs_err"))
    for row in report.per_coupling:
        ct.add(row["sites"], row["window"], row["abs_err"])
    rec.fits = {"max_err": report.max_err, "n_couplings": len(report.per_coupling)}
    if p["sweep"]:
        w = p["sweep_window"]
        win = _region(lat, list(range(p["sweep_start"], p["sweep_start"] + w)), "sweep window")
        true = reduce_to(rho, win).matrix
        sw = rec.table("sweep", ("shots", "seed", "marginal_error", "raw_error", "clipped"))
        med = rec.table("sweep_summary", ("shots", "median_marginal_error", "median_raw_error"))
        meds, raws = [], []
        for N in p["sweep_shots"]:
            e_all, r_all = [], []
            for s in range(p["sweep_seeds"]):
                est = sample_window_expectations(rho, ShotPlan([win], int(N), cfg["seed"] * 1000 + s))[0]
                m = reconstruct_marginal(est)
                e = trace_norm(m.matrix - true)
                r = trace_norm(m.meta["raw"] - true)
                sw.add(int(N), s, e, r, m.meta["clipped"])
                e_all.append(e)
                r_all.append(r)
            meds.append(float(np.median(e_all)))
            raws.append(float(np.median(r_all)))
            med.add(int(N), meds[-1], raws[-1])
        rec.fits["sweep_slope"] = loglog_slope(p["sweep_shots"], meds)
        rec.fits["sweep_slope_raw"] = loglog_slope(p["sweep_shots"], raws)


def run_appendix_demo(cfg, rec, ctx):
    p = cfg["params"]
    coef, k = enhancement_scan(p["v0"], p["eps"])
    table = rec.table("enhancement", ("v0", "eps", "coefficient", "ratio_to_eps_exp_2v0"))
    for v, c in zip(p["v0"], coef):
        table.add(v, p["eps"], float(c), float(c / (p["eps"] * math.exp(2 * v))))
    rec.fits = {"exponent": k}


RUNNERS = {
    "cmi-scan": run_cmi_scan,
    "bp-verify": run_bp_verify,
    "bp-truncate": run_bp_truncate,
    "efflog-verify": run_efflog_verify,
    "enthal-locality": run_enthal_locality,
    "ptp-verify": run_ptp_verify,
    "continuity-verify": run_continuity_verify,
    "recovery-scan": run_recovery_scan,
    "eof-scan": run_eof_scan,
    "mi-localize": run_mi_localize,
    "learn-1d": run_learn_1d,
    "appendix-demo": run_appendix_demo,
}


def run(experiment, cfg, threads=1):
    """Execute ``experiment`` on a resolved config and return its ExperimentRecord."""
    rec = ExperimentRecord(experiment, cfg, __version__)
    previous = dense_cap()
    set_dense_cap(cfg.get("dense_cap", previous))
    t0 = time.perf_counter()
    try:
        RUNNERS[experiment](cfg, rec, Context(threads))
    finally:
        set_dense_cap(previous)
    rec.wall_time = time.perf_counter() - t0
    return rec

