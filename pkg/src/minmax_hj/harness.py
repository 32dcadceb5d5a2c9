"""Experiment runner behind the CLI.

Each command owns a run directory (lockfile), writes result files with
stable CSV schemas, and finishes with a manifest recording the resolved
config, hypothesis verdicts, per-stage timings, and sha256 checksums of
every result file. Result files are deterministic for a fixed config
and seed set; timings live only in the manifest.
"""

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .effective import (EffectiveCurve, estimate_effective,
                        piece_effective_curve, theorem_formula)
from .errors import (ConfigError, MonotonicityError, NonConvergenceError,
                     RunLockError, StabilityError)
from .family import LevelHamiltonian, validate_ordering
from .media import sample_realization
from .pairs import check_condition_e, check_monotonicity, contact_fields
from .profiles import QUASICONVEX
from .solver import Grid, SchemeParams, solve_homogenized, solve_time_dependent

_G17 = "%.17g"


class RunLock:
    """Exclusive ownership of a run directory while a command writes it."""

    def __init__(self, out_dir):
        self.path = os.path.join(out_dir, ".lock")
        self.fd = None

    def __enter__(self):
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RunLockError(
                f"run directory is locked ({self.path}); remove the stale "
                f"lock if no other run is active") from None
        os.write(self.fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc):
        os.close(self.fd)
        os.unlink(self.path)
        return False


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(out_dir, manifest):
    manifest = dict(manifest)
    manifest["tool_version"] = __version__
    manifest["files"] = {
        name: _sha256(os.path.join(out_dir, name))
        for name in sorted(manifest.get("files", []))}
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(
                v if isinstance(v, str) else _G17 % v for v in row) + "\n")


def analyze_hypotheses(cfg):
    """Shared hypothesis stage: ordering, pair stability, contact chain
    monotonicity, thin level sets. Returns verdicts plus the contact
    constants the later stages reuse."""
    timings = {}
    t0 = time.perf_counter()
    realizations = [sample_realization(cfg.medium_spec, s) for s in cfg.seeds]
    medium0 = realizations[0]
    x_nodes = cfg.x_nodes()

    ordering_ok, ordering_witness = True, None
    try:
        x_probe = np.linspace(0.0, cfg.medium_spec.period, 9)[:-1]
        validate_ordering(cfg.family, medium0, cfg.p_axis, x_probe)
    except Exception as err:
        ordering_ok, ordering_witness = False, str(err)
    timings["ordering"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    consts = contact_fields(cfg.family, realizations, x_nodes,
                            cfg.p_box, cfg.n_p)
    stable = consts.all_pairs_stable
    timings["stable_pairs"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    mono = check_monotonicity(consts)
    mono_strict = check_monotonicity(consts, strict=True)
    cond_e = {"holds": True, "witnesses": []}
    for real in realizations:
        one = check_condition_e(cfg.family, real, x_nodes, cfg.p_box, cfg.n_p)
        if not one["holds"]:
            cond_e = one
            break
    timings["contact_chains"] = time.perf_counter() - t0

    verdicts = {
        "ordering": ordering_ok,
        "stable_pairs": stable,
        "contact_monotonicity": mono["monotone"],
        "contact_monotonicity_strict": mono_strict["monotone"],
        "level_set_thin": cond_e["holds"],
    }
    witnesses = {
        "ordering": ordering_witness,
        "stable_pairs": consts.witnesses[:8],
        "contact_monotonicity": mono["failures"],
        "level_set_thin": cond_e["witnesses"],
    }
    return {"verdicts": verdicts, "witnesses": witnesses,
            "constants": consts.to_dict(), "consts_obj": consts,
            "realizations": realizations, "medium0": medium0,
            "timings": timings}


def gate_passed(verdicts):
    return (verdicts["ordering"] and verdicts["stable_pairs"]
            and verdicts["contact_monotonicity"])


def _require_gate(analysis, force):
    v = analysis["verdicts"]
    if force or gate_passed(v):
        return
    if not v["stable_pairs"]:
        raise StabilityError("hypothesis gate: unstable pair",
                             witness=analysis["witnesses"]["stable_pairs"])
    if not v["contact_monotonicity"]:
        fail = analysis["witnesses"]["contact_monotonicity"][0]
        raise MonotonicityError(
            f"hypothesis gate: {fail['chain']} contact chain not monotone "
            f"at level index {fail['index']}",
            chain=fail["chain"], index=fail["index"])
    raise ConfigError(
        f"hypothesis gate: ordering violated: "
        f"{analysis['witnesses']['ordering']}")


def run_check(cfg, out_dir=None):
    """Pure hypothesis gate; writes only the manifest."""
    out_dir = out_dir or cfg.output
    os.makedirs(out_dir, exist_ok=True)
    with RunLock(out_dir):
        analysis = analyze_hypotheses(cfg)
        manifest = {
            "command": "check",
            "config": cfg.raw,
            "verdicts": analysis["verdicts"],
            "witnesses": analysis["witnesses"],
            "contact_constants": analysis["constants"],
            "timings": analysis["timings"],
            "files": [],
        }
        manifest = _write_manifest(out_dir, manifest)
    return manifest


def _map_over_p(p_axis, worker, threads):
    """Evaluate worker(p) for each sample; results keyed by index so the
    aggregation order never depends on the thread schedule."""
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(worker, range(len(p_axis))))
    else:
        results = [worker(i) for i in range(len(p_axis))]
    return results


def _numeric_curve(hamiltonian, cfg, medium, kind, threads, params=None):
    grid = Grid(cfg.solver_n, cfg.solver_length)

    def worker(i):
        p = float(cfg.p_axis[i])
        try:
            est = estimate_effective(hamiltonian, [p], medium,
                                     cfg.lambda_schedule, grid, params)
        except NonConvergenceError as err:
            raise NonConvergenceError(
                f"estimate at p={p:.6g} failed: {err}",
                residual_history=err.residual_history) from err
        return est.value, est.error_bar, est.reliable

    rows = _map_over_p(cfg.p_axis, worker, threads)
    values = np.array([r[0] for r in rows])
    bars = np.array([r[1] for r in rows])
    curve = EffectiveCurve(cfg.p_axis, values, bars, "numeric", kind)
    curve.validate()
    curve.intermediates["unreliable_p"] = [
        float(cfg.p_axis[i]) for i, r in enumerate(rows) if not r[2]]
    return curve


def build_curves(cfg, medium, consts, threads=1, params=None):
    """Per-piece effective curves (exact where the piece is separable,
    numeric otherwise) and the nested formula curve."""
    def one(piece):
        kind = "coercive" if piece.tag == QUASICONVEX else "anticoercive"
        try:
            return piece_effective_curve(piece, medium, cfg.p_axis)
        except ValueError:
            return _numeric_curve(piece, cfg, medium, kind, threads, params)

    checks = [one(pc) for pc in cfg.family.checks]
    hats = [one(pc) for pc in cfg.family.hats]
    formula = theorem_formula(checks, hats, consts)
    return checks, hats, formula


def run_effective(cfg, out_dir=None, force=False, threads=None):
    """Piece curves, nested formula, direct estimate, and comparison."""
    out_dir = out_dir or cfg.output
    threads = cfg.threads if threads is None else threads
    os.makedirs(out_dir, exist_ok=True)
    params = SchemeParams(theta=cfg.theta)
    with RunLock(out_dir):
        analysis = analyze_hypotheses(cfg)
        _require_gate(analysis, force)
        timings = dict(analysis["timings"])

        t0 = time.perf_counter()
        checks, hats, formula = build_curves(
            cfg, analysis["medium0"], analysis["consts_obj"], threads, params)
        timings["piece_curves"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        h_top = LevelHamiltonian(cfg.family, cfg.family.ell)
        numeric = _numeric_curve(h_top, cfg, analysis["medium0"],
                                 "coercive", threads, params)
        timings["numeric_estimates"] = time.perf_counter() - t0

        numeric.to_csv(os.path.join(out_dir, "numeric.csv"))
        formula.to_csv(os.path.join(out_dir, "formula.csv"))

        abs_err = np.abs(numeric.values - formula.values)
        inter_labels = [lab for lab in
                        sorted(formula.intermediates, key=float)
                        if float(lab) < cfg.family.ell]
        header = "p,numeric,formula,abs_err" + "".join(
            ",level_" + lab.replace(".", "_") for lab in inter_labels)
        rows = []
        for i in range(len(cfg.p_axis)):
            row = [cfg.p_axis[i], numeric.values[i], formula.values[i],
                   abs_err[i]]
            row += [formula.intermediates[lab][i] for lab in inter_labels]
            rows.append(row)
        _csv(os.path.join(out_dir, "compare.csv"), header, rows)

        manifest = {
            "command": "effective",
            "config": cfg.raw,
            "verdicts": analysis["verdicts"],
            "contact_constants": analysis["constants"],
            "max_abs_err": float(abs_err.max()),
            "mean_abs_err": float(abs_err.mean()),
            "unreliable_p": numeric.intermediates["unreliable_p"],
            "timings": timings,
            "files": ["numeric.csv", "formula.csv", "compare.csv"],
        }
        manifest = _write_manifest(out_dir, manifest)
    return manifest


def run_sweep_eps(cfg, out_dir=None, force=False, threads=None):
    """Oscillatory vs homogenized evolution over the eps schedule."""
    out_dir = out_dir or cfg.output
    threads = cfg.threads if threads is None else threads
    os.makedirs(out_dir, exist_ok=True)
    params = SchemeParams(theta=cfg.theta)
    with RunLock(out_dir):
        analysis = analyze_hypotheses(cfg)
        _require_gate(analysis, force)
        timings = dict(analysis["timings"])
        medium = analysis["medium0"]

        t0 = time.perf_counter()
        _, _, formula = build_curves(cfg, medium, analysis["consts_obj"],
                                     threads, params)
        timings["effective_curve"] = time.perf_counter() - t0

        grid = Grid(cfg.solver_n, cfg.solver_length)
        u0 = cfg.u0_values(grid.axes[0])
        h_top = LevelHamiltonian(cfg.family, cfg.family.ell)

        t0 = time.perf_counter()
        hom = solve_homogenized(formula, u0, grid, cfg.T, params,
                                t_samples=cfg.t_samples)
        timings["homogenized"] = time.perf_counter() - t0

        errs = []
        for eps in cfg.eps_schedule:
            t0 = time.perf_counter()
            osc = solve_time_dependent(h_top, u0, eps, grid, medium,
                                       T=cfg.T, params=params,
                                       t_samples=cfg.t_samples)
            err = max(float(np.max(np.abs(osc.at(t).values
                                          - hom.at(t).values)))
                      for t in cfg.t_samples)
            errs.append(err)
            timings[f"eps_{eps:g}"] = time.perf_counter() - t0

        ratios = [errs[i + 1] / errs[i] if errs[i] > 0 else float("nan")
                  for i in range(len(errs) - 1)]
        rows = [[cfg.eps_schedule[i], errs[i],
                 float("nan") if i == 0 else ratios[i - 1]]
                for i in range(len(errs))]
        _csv(os.path.join(out_dir, "err_vs_eps.csv"),
             "eps,err,ratio_to_prev", rows)

        manifest = {
            "command": "sweep-eps",
            "config": cfg.raw,
            "verdicts": analysis["verdicts"],
            "errors": errs,
            "ratios": ratios,
            "nonincreasing": all(b <= a for a, b in zip(errs, errs[1:])),
            "strictly_decreasing": all(b < a for a, b in zip(errs, errs[1:])),
            "timings": timings,
            "files": ["err_vs_eps.csv"],
        }
        manifest = _write_manifest(out_dir, manifest)
    return manifest


def _read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


def run_plotdata(run_dir):
    """Derive gnuplot-style .dat files from a completed run directory.

    Pure text transform of the CSVs, so reruns are byte-identical.
    """
    compare = os.path.join(run_dir, "compare.csv")
    sweep = os.path.join(run_dir, "err_vs_eps.csv")
    if not os.path.isdir(run_dir) or not (os.path.exists(compare)
                                          or os.path.exists(sweep)):
        raise ConfigError(
            f"{run_dir}: no compare.csv or err_vs_eps.csv to plot")
    written = []

    if os.path.exists(compare):
        header, rows = _read_csv(compare)
        path = os.path.join(run_dir, "hbar_curves.dat")
        with open(path, "w") as fh:
            fh.write("# " + " ".join(header) + "\n")
            for row in rows:
                fh.write(" ".join(row) + "\n")
        written.append(path)

        # flat stretches of the formula curve (3+ samples at one value)
        ps = np.array([float(r[0]) for r in rows])
        vals = np.array([float(r[2]) for r in rows])
        tol = 1e-9 * max(1.0, float(np.max(np.abs(vals))))
        path = os.path.join(run_dir, "plateau.dat")
        with open(path, "w") as fh:
            fh.write("# region p value\n")
            region = 0
            i = 0
            while i < len(vals):
                j = i
                while j + 1 < len(vals) and abs(vals[j + 1] - vals[i]) <= tol:
                    j += 1
                if j - i >= 2:
                    region += 1
                    for k in range(i, j + 1):
                        fh.write(("%d " + _G17 + " " + _G17 + "\n")
                                 % (region, ps[k], vals[k]))
                i = j + 1
        written.append(path)

    if os.path.exists(sweep):
        header, rows = _read_csv(sweep)
        path = os.path.join(run_dir, "eps_loglog.dat")
        with open(path, "w") as fh:
            fh.write("# eps err log10_eps log10_err\n")
            for row in rows:
                eps, err = float(row[0]), float(row[1])
                fh.write((" ".join([_G17] * 4) + "\n")
                         % (eps, err, np.log10(eps),
                            np.log10(err) if err > 0 else float("-inf")))
        written.append(path)
    return written
