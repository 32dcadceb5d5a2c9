"""Effective Hamiltonians: numeric estimation, exact 1-D separable
oracle, the nested min-max formula, and symmetry/plateau reports.

The estimator solves the discounted problem along a decreasing discount
schedule and extrapolates -lam * v_lam(0) by fitting value + C*lam^alpha
with the exponent fitted rather than assumed. The oracle handles
H(p, x) = phi(p) + V(x) exactly: below the critical level the mean
gradient of the corrector sweeps an interval whose endpoints are the
averaged branch inverses, and outside it the level is pinned down by
monotone bisection.
"""

import numpy as np

from .errors import ConfigError, SchemeParameterError
from .family import (LevelHamiltonian, MinMaxFamily, negate_dual, even_dual)
from .pairs import contact_fields, kappa_shift
from .profiles import QUASICONVEX, as_components
from .solver import solve_discounted


class EffectiveCurve:
    """Sampled effective Hamiltonian with error bars and provenance.

    kind tags the expected tail behavior: curves of coercive pieces and
    of full families rise at both ends, quasiconcave piece curves fall.
    """

    def __init__(self, p, values, error_bars=None, provenance="numeric",
                 kind="coercive"):
        self.p = np.asarray(p, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.p.ndim != 1 or self.p.size < 2:
            raise ValueError("need at least two gradient samples")
        if np.any(np.diff(self.p) <= 0):
            raise ValueError("gradient samples must increase")
        if self.values.shape != self.p.shape:
            raise ValueError("values do not match the gradient samples")
        if error_bars is None:
            error_bars = np.zeros_like(self.values)
        self.error_bars = np.asarray(error_bars, dtype=float)
        self.provenance = provenance
        self.kind = kind
        self.intermediates = {}

    def validate(self, lipschitz=None):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("curve has non-finite values")
        slack = np.max(self.error_bars) + 1e-9
        sl_l = (self.values[1] - self.values[0]) / (self.p[1] - self.p[0])
        sl_r = (self.values[-1] - self.values[-2]) / (self.p[-1] - self.p[-2])
        rate = slack / min(np.diff(self.p))
        # tails may be flat (plateau at the window edge) but must not
        # point the wrong way
        if self.kind == "coercive" and (sl_l > rate or sl_r < -rate):
            raise ValueError("coercive curve does not rise at the ends")
        if self.kind == "anticoercive" and (sl_l < -rate or sl_r > rate):
            raise ValueError("anticoercive curve does not fall at the ends")
        if lipschitz is not None:
            jumps = np.abs(np.diff(self.values))
            bounds = lipschitz * np.diff(self.p) + 2e-2 + 2 * slack
            if np.any(jumps > bounds):
                i = int(np.argmax(jumps - bounds))
                raise ValueError(
                    f"jump {jumps[i]:.4g} between p={self.p[i]:.4g} and "
                    f"p={self.p[i + 1]:.4g} exceeds the continuity bound")
        return self

    def evaluate(self, q):
        """Piecewise-linear interpolation with linear tail extension."""
        q = np.asarray(q, dtype=float)
        out = np.interp(q, self.p, self.values)
        sl_l = (self.values[1] - self.values[0]) / (self.p[1] - self.p[0])
        sl_r = (self.values[-1] - self.values[-2]) / (self.p[-1] - self.p[-2])
        left = q < self.p[0]
        right = q > self.p[-1]
        if np.any(left):
            out = np.where(left, self.values[0] + sl_l * (q - self.p[0]), out)
        if np.any(right):
            out = np.where(right, self.values[-1] + sl_r * (q - self.p[-1]),
                           out)
        return out

    def lipschitz(self):
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.p))))

    def to_csv(self, path):
        label = self.provenance if isinstance(self.provenance, str) \
            else self.provenance.get("kind", "numeric")
        with open(path, "w") as fh:
            fh.write("p,value,error_bar,provenance\n")
            for pi, vi, ei in zip(self.p, self.values, self.error_bars):
                fh.write("%.17g,%.17g,%.17g,%s\n" % (pi, vi, ei, label))


class Estimate:
    """Extrapolated effective value at one gradient; unpacks as
    (value, error_bar)."""

    def __init__(self, value, error_bar, alpha, coefficient, lams, data,
                 fit_residuals, uniform_residual, reliable):
        self.value = value
        self.error_bar = error_bar
        self.alpha = alpha
        self.coefficient = coefficient
        self.lams = lams
        self.data = data
        self.fit_residuals = fit_residuals
        self.uniform_residual = uniform_residual
        self.reliable = reliable

    def __iter__(self):
        return iter((self.value, self.error_bar))

    def to_dict(self):
        return {"value": self.value, "error_bar": self.error_bar,
                "alpha": self.alpha, "coefficient": self.coefficient,
                "lams": list(self.lams), "data": list(self.data),
                "uniform_residual": self.uniform_residual,
                "reliable": self.reliable}


def _power_fit(lams, ys):
    """Least squares for y = H + C * lam^alpha with alpha scanned on
    [0.4, 1.1] and refined; closed-form 2x2 solve per alpha."""
    lams = np.asarray(lams, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = lams.size

    def solve_for(alpha):
        g = lams ** alpha
        sg, sgg, sy, sgy = g.sum(), (g * g).sum(), ys.sum(), (g * ys).sum()
        det = n * sgg - sg * sg
        if abs(det) < 1e-300:
            return ys.mean(), 0.0, float(np.max(np.abs(ys - ys.mean())))
        c = (n * sgy - sg * sy) / det
        hbar = (sy - c * sg) / n
        resid = float(np.max(np.abs(ys - hbar - c * g)))
        return hbar, c, resid

    lo, hi = 0.4, 1.1
    best = None
    for _ in range(3):
        alphas = np.linspace(lo, hi, 15)
        tries = [(solve_for(a), a) for a in alphas]
        (hbar, c, resid), alpha = min(tries, key=lambda t: t[0][2])
        best = (hbar, c, resid, alpha)
        step = alphas[1] - alphas[0]
        lo, hi = max(0.4, alpha - step), min(1.1, alpha + step)
    return best


def estimate_effective(hamiltonian, p, medium, lam_schedule, grid,
                       params=None, method="auto"):
    """Extrapolate -lam * v_lam(0) along the discount schedule.

    Returns an Estimate; its error bar combines the fit residual, a
    fraction of the extrapolated correction, and the solver tolerance.
    A poor fit is flagged (reliable=False), never hidden.
    """
    lams = [float(l) for l in lam_schedule]
    if len(lams) < 3 or any(b >= a for a, b in zip(lams, lams[1:])):
        raise ConfigError("need a strictly decreasing schedule of >= 3 rates")
    if lams[-1] * max(grid.n) < 10.0:
        raise SchemeParameterError(
            f"smallest rate {lams[-1]:.3g} under-resolves the grid; "
            f"need rate * n >= 10")

    ys = []
    v = None
    tol = None
    for lam in lams:
        field = solve_discounted(hamiltonian, p, lam, grid, medium,
                                 params=params, v0=v, method=method)
        v = field.values
        tol = field.metadata["tol_fp"]
        const = field.metadata.get("constant_value")
        # an exactly constant problem reports its value without the
        # lossy -lam * (value / lam) round trip
        ys.append(float(-lam * v.flat[0]) if const is None else const)
    est = fit_schedule_data(lams, ys, tol)
    est.uniform_residual = float(np.max(np.abs(lams[-1] * v + est.value)))
    return est


def fit_schedule_data(lams, ys, tol=0.0):
    """Extrapolate schedule data  y(lam) = H + C * lam^alpha  to lam=0.

    Discount-independent data short-circuits to the exact value. The
    error bar stacks the worst fit residual, a fraction of the applied
    correction, and the solver tolerance; a fit that leaves residuals
    comparable to the data spread marks the estimate unreliable.
    """
    spread = max(ys) - min(ys)
    scale = max(1.0, max(abs(y) for y in ys))
    if spread <= 1e-13 * scale:
        return Estimate(ys[-1], tol, None, 0.0, lams, ys, [0.0] * len(ys),
                        None, True)
    hbar, c, resid, alpha = _power_fit(lams, ys)
    correction = abs(c) * lams[-1] ** alpha
    error_bar = 3.0 * resid + 0.2 * correction + tol
    # a power law is monotone in lam, so monotone data extrapolates
    # honestly even when the best exponent sits at the window edge;
    # non-monotone data must fit tightly or be flagged
    diffs = np.diff(ys)
    monotone = np.all(diffs >= 0.0) or np.all(diffs <= 0.0)
    reliable = monotone or resid <= max(0.05 * spread, 10 * tol,
                                        1e-12 * scale)
    fit_residuals = [y - hbar - c * l ** alpha for y, l in zip(ys, lams)]
    return Estimate(float(hbar), float(error_bar), float(alpha), float(c),
                    lams, ys, fit_residuals, None, bool(reliable))


def exact_effective_1d_separable(profile, v_table, p_samples, tol=1e-10):
    """Exact effective curve for H(p, x) = phi(p) + V(x), d = 1.

    V enters as a table over one period (its mean realizes the spatial
    averages). At the critical level mu* = max V + min phi the admissible
    mean gradients sweep [avg phi_left_inv(mu* - V), avg phi_right_inv
    (mu* - V)]; outside, the level solving avg-inverse = p is found by
    bisection on the monotone branch.
    """
    if profile.tag != QUASICONVEX:
        raise ValueError("oracle profiles must be quasiconvex")
    if profile.dim != 1:
        raise ValueError("oracle is one-dimensional")
    V = np.asarray(v_table, dtype=float)
    p_samples = np.asarray(p_samples, dtype=float)
    v_max = float(V.max())
    if v_max == float(V.min()):
        # constant potential: no averaging, the curve is the profile
        values = profile(as_components(p_samples, 1)) + v_max
        curve = EffectiveCurve(p_samples, values, None, "oracle", "coercive")
        curve.intermediates["critical_level"] = v_max + profile.extreme_value()
        lo, hi = profile.branch_inverses(profile.extreme_value())
        curve.intermediates["flat_interval"] = (float(lo), float(hi))
        return curve.validate()
    mu_star = v_max + profile.extreme_value()

    def ends(mu):
        left, right = profile.branch_inverses(mu - V)
        return float(left.mean()), float(right.mean())

    pl_star, pr_star = ends(mu_star)

    def level_for(p):
        if pl_star <= p <= pr_star:
            return mu_star
        side = 1 if p > pr_star else 0
        lo = mu_star
        hi = mu_star + 1.0
        while (ends(hi)[side] < p if side else ends(hi)[side] > p):
            hi = mu_star + 2.0 * (hi - mu_star)
            if hi - mu_star > 1e12:
                raise ValueError("level search diverged; profile not coercive?")
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            at = ends(mid)[side]
            if (at < p) if side else (at > p):
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    values = np.array([level_for(float(pi)) for pi in p_samples])
    curve = EffectiveCurve(p_samples, values, None, "oracle", "coercive")
    curve.intermediates["critical_level"] = mu_star
    curve.intermediates["flat_interval"] = (pl_star, pr_star)
    return curve.validate()


def _medium_table(medium, n_table=4096):
    return np.arange(n_table) * (medium.period / n_table) if medium is not None \
        else np.zeros(1)


def piece_effective_curve(piece, medium, p_samples, n_table=4096):
    """Effective curve of a single separable piece, via the oracle.

    Additive coupling only; quasiconcave pieces go through the
    negation duality (their curve is the reflected negative of the
    dual's curve). Amplitude coupling is not separable.
    """
    if piece.coupling == "amplitude":
        raise ValueError("amplitude-coupled pieces are not separable")
    if piece.tag != QUASICONVEX:
        dual = piece.negate_dual()
        rev = piece_effective_curve(dual, medium, -np.asarray(p_samples,
                                                              dtype=float)[::-1],
                                    n_table)
        values = -rev.values[::-1]
        curve = EffectiveCurve(p_samples, values, None, "oracle",
                               "anticoercive")
        curve.intermediates["dual_critical_level"] = \
            rev.intermediates["critical_level"]
        return curve.validate()
    x = _medium_table(medium, n_table)
    V = np.zeros_like(x)
    if piece.coupling == "additive":
        V = V + piece.scale * medium.evaluate_channel(piece.channel, x)
    V = V + piece.extra_const
    if piece.extra_field is not None:
        V = V + piece.extra_field(x)
    return exact_effective_1d_separable(piece.profile, V, p_samples)


def is_separable(piece):
    return piece.coupling in (None, "additive")


def theorem_formula_values(check_vals, hat_vals, m_bar, m_lower):
    """Nested effective formula on aligned value arrays; level 1
    innermost. Returns (top values, intermediates by level label)."""
    ell = len(check_vals)
    if len(hat_vals) != ell or len(m_bar) != ell or len(m_lower) != ell:
        raise ValueError("level counts do not match")
    inter = {}
    f = np.maximum(np.maximum(check_vals[0], m_bar[0]), hat_vals[0])
    inter["1"] = f
    for k in range(1, ell):
        half = np.minimum(np.minimum(hat_vals[k], m_lower[k]), f)
        inter[f"{k}.5"] = half
        f = np.maximum(np.maximum(check_vals[k], m_bar[k]), half)
        inter[f"{k + 1}"] = f
    return f, inter


def theorem_formula(bar_checks, bar_hats, constants):
    """Assemble the nested effective curve from piece curves and
    contact constants; intermediate half/full-step curves ride along."""
    p = bar_checks[0].p
    for c in list(bar_checks) + list(bar_hats):
        if not np.array_equal(c.p, p):
            raise ValueError("piece curves live on different gradient grids")
    m_bar = np.asarray(constants.m_bar, dtype=float)
    m_lower = np.asarray(constants.M_lower, dtype=float)
    values, inter = theorem_formula_values(
        [c.values for c in bar_checks], [c.values for c in bar_hats],
        m_bar, m_lower)
    bars = np.max([c.error_bars for c in bar_checks]
                  + [c.error_bars for c in bar_hats], axis=0)
    curve = EffectiveCurve(p, values, bars, "formula", "coercive")
    curve.intermediates = inter
    return curve.validate()


def _wrap_hamiltonian(obj):
    if isinstance(obj, MinMaxFamily):
        return LevelHamiltonian(obj, obj.ell)
    return obj


def verify_symmetries(hamiltonian, p_samples, medium, lam_schedule, grid,
                      params=None):
    """Duality report: negation (every Hamiltonian) and evenness
    (quasiconvex pieces). Discrepancies come with their error bars."""
    p_samples = [float(p) for p in p_samples]
    h_orig = _wrap_hamiltonian(hamiltonian)
    h_neg = _wrap_hamiltonian(negate_dual(hamiltonian))

    neg_disc, neg_bars = [], []
    for p in p_samples:
        a = estimate_effective(h_neg, [p], medium, lam_schedule, grid, params)
        b = estimate_effective(h_orig, [-p], medium, lam_schedule, grid,
                               params)
        neg_disc.append(abs(a.value + b.value))
        neg_bars.append(a.error_bar + b.error_bar)
    report = {"p": p_samples,
              "negation": {"discrepancy": neg_disc, "bars": neg_bars,
                           "max": max(neg_disc)}}

    if getattr(hamiltonian, "tag", None) == QUASICONVEX:
        h_even = _wrap_hamiltonian(even_dual(hamiltonian))
        ev_disc, ev_bars = [], []
        for p in p_samples:
            a = estimate_effective(h_even, [p], medium, lam_schedule, grid,
                                   params)
            b = estimate_effective(h_orig, [-p], medium, lam_schedule, grid,
                                   params)
            ev_disc.append(abs(a.value - b.value))
            ev_bars.append(a.error_bar + b.error_bar)
        report["evenness"] = {"discrepancy": ev_disc, "bars": ev_bars,
                              "max": max(ev_disc)}
    else:
        report["evenness"] = None
    return report


def _level_crossings(curve, level, side="sublevel", tol=1e-12):
    """Boundary points of {curve <= level} (sublevel) or {curve >= level}
    (superlevel), by linear interpolation on the curve's own samples.
    Tangential contact counts as inside, so a plateau that only touches
    the level still yields its endpoints."""
    v = curve.values - level
    inside = (v <= tol) if side == "sublevel" else (v >= -tol)
    pts = []
    for i in range(v.size - 1):
        if inside[i] != inside[i + 1]:
            t = v[i] / (v[i] - v[i + 1])
            pts.append(float(curve.p[i] + t * (curve.p[i + 1] - curve.p[i])))
    return pts


def plateau_check(family, constants, medium, grid, lam_schedule,
                  p_samples=None, params=None, kappas=(0.0, 0.5, 1.0),
                  x_nodes=None, p_box=None, n_p=2049):
    """Flat-piece report for a one-level family.

    Verifies that the direct estimate equals the upper contact constant
    on the region where both piece curves sit at or below it, and
    reports the kappa-shifted families: their contact constants (which
    the shift provably preserves) and the per-piece level-set boundaries
    at that constant.
    """
    if family.ell != 1:
        raise ValueError("plateau analysis is for one-level families")
    constants.require_stable()
    m1 = float(constants.m_bar[0])
    if p_samples is None:
        p_samples = np.linspace(-3.0, 3.0, 25)
    p_samples = np.asarray(p_samples, dtype=float)

    check_curve = piece_effective_curve(family.checks[0], medium, p_samples)
    hat_curve = piece_effective_curve(family.hats[0], medium, p_samples)
    region = (check_curve.values <= m1 + 1e-9) \
        & (hat_curve.values <= m1 + 1e-9)
    h1 = LevelHamiltonian(family, 1)
    probes, deviations = [], []
    idx = np.flatnonzero(region)
    take = idx[np.unique(np.linspace(0, idx.size - 1, min(5, idx.size))
                         .astype(int))] if idx.size else []
    for i in take:
        est = estimate_effective(h1, [float(p_samples[i])], medium,
                                 lam_schedule, grid, params)
        probes.append({"p": float(p_samples[i]), "value": est.value,
                       "error_bar": est.error_bar})
        deviations.append(abs(est.value - m1))
    report = {"m_bar_1": m1,
              "region": [float(p_samples[i]) for i in idx],
              "probes": probes,
              "max_deviation": max(deviations) if deviations else None,
              "kappa": {}}

    if x_nodes is None:
        x_nodes = np.linspace(0.0, medium.period, 33)[:-1]
    for kappa in kappas:
        fam_k = kappa_shift(family, kappa, (medium, x_nodes, p_box, n_p))
        consts_k = contact_fields(fam_k, medium, x_nodes, p_box, n_p)
        ck = piece_effective_curve(fam_k.checks[0], medium, p_samples,
                                   n_table=1024)
        hk = piece_effective_curve(fam_k.hats[0], medium, p_samples,
                                   n_table=1024)
        report["kappa"][kappa] = {
            "m_bar_1": float(consts_k.m_bar[0]),
            "check_boundaries": _level_crossings(ck, m1, "sublevel"),
            "hat_boundaries": _level_crossings(hk, m1, "superlevel"),
        }
    ks = sorted(report["kappa"])
    first, last = report["kappa"][ks[0]], report["kappa"][ks[-1]]
    report["boundary_shift"] = {
        side: max((abs(a - b) for a, b in zip(first[side], last[side])),
                  default=None)
        for side in ("check_boundaries", "hat_boundaries")
        if len(first[side]) == len(last[side])}
    return report
