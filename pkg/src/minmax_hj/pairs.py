"""Stable pairs and contact values.

For a coercive quasiconvex V and an anticoercive quasiconcave L (both
functions of the gradient at a frozen medium point), the comparison
region is D = {L >= V}. The pair is stable when D is empty, or when V
is constant on the boundary of D and strictly larger everywhere outside.
The V-contact value is min V (empty D) or the shared boundary value; the
L-contact value is max L (empty D) or the boundary value of L.

Per-level contact fields m_k (V-contact of the k-th pair) and M_k
(L-contact of hat_k against check_{k-1}, with the convention that an
absent check_0 means +infinity, so M_1 is the peak of hat_1) feed the
effective-Hamiltonian formula; their extrema over the medium sample are
the constants whose monotone chains the main gate checks.

Everything works on a gradient grid. Boundary points are located by
linear interpolation, which is exact for the piecewise-linear catalogue
as long as profile kinks do not share a cell with a crossing.
"""

import numpy as np

from .errors import (BoxTooSmallError, MonotonicityError, PerturbationError,
                     StabilityError)
from .family import CombinedPiece, MinMaxFamily


class PairReport:
    def __init__(self, delta_nonempty, delta_descriptor, contact_value_V,
                 contact_value_Lambda, boundary_variation, stable, tau_b,
                 outside_gap=None):
        self.delta_nonempty = delta_nonempty
        self.delta_descriptor = delta_descriptor
        self.contact_value_V = contact_value_V
        self.contact_value_Lambda = contact_value_Lambda
        self.boundary_variation = boundary_variation
        self.stable = stable
        self.tau_b = tau_b
        self.outside_gap = outside_gap

    def to_dict(self):
        return {"delta_nonempty": bool(self.delta_nonempty),
                "delta_descriptor": self.delta_descriptor,
                "contact_value_V": float(self.contact_value_V),
                "contact_value_Lambda": float(self.contact_value_Lambda),
                "boundary_variation": float(self.boundary_variation),
                "stable": bool(self.stable),
                "tau_b": float(self.tau_b)}


def _grid_1d(p_box, n_p):
    lo, hi = float(p_box[0]), float(p_box[1])
    if not lo < hi:
        raise ValueError("need p_box lo < hi")
    return np.linspace(lo, hi, int(n_p))


def _default_tau_b(vals_V, vals_L, h):
    lip = max(np.max(np.abs(np.diff(vals_V))), np.max(np.abs(np.diff(vals_L)))) / h
    return 10.0 * lip * h


def analyze_pair(V_fn, L_fn, p_box, n_p=2049, tau_b=None):
    """Stability report for one (V, L) pair on a gradient box.

    V_fn/L_fn take gradient arrays (1-D) or component tuples (2-D).
    Raises BoxTooSmallError when the comparison region or the V-minimum
    touches the box boundary.
    """
    if np.ndim(p_box[0]) > 0:
        return _analyze_pair_2d(V_fn, L_fn, p_box, n_p, tau_b)
    p = _grid_1d(p_box, n_p)
    h = p[1] - p[0]
    vV = np.asarray(V_fn(p), dtype=float)
    vL = np.asarray(L_fn(p), dtype=float)
    if tau_b is None:
        tau_b = _default_tau_b(vV, vL, h)
    g = vL - vV
    mask = g >= 0.0
    if mask[0] or mask[-1]:
        raise BoxTooSmallError("comparison region touches the gradient box")
    if not mask.any():
        imin = int(np.argmin(vV))
        if imin in (0, vV.size - 1):
            raise BoxTooSmallError("V attains its grid minimum on the box boundary")
        return PairReport(False, [], float(vV[imin]), float(np.max(vL)),
                          0.0, True, tau_b)

    idx = np.flatnonzero(mask[:-1] != mask[1:])
    p_star = p[idx] + g[idx] * h / (g[idx] - g[idx + 1])
    bV = np.asarray(V_fn(p_star), dtype=float)
    bL = np.asarray(L_fn(p_star), dtype=float)
    variation = float(np.max(bV) - np.min(bV))
    c_V = float(np.mean(bV))
    c_L = float(np.mean(bL))

    intervals = []
    starts = np.flatnonzero(np.diff(mask.astype(int)) == 1)  # False -> True
    ends = np.flatnonzero(np.diff(mask.astype(int)) == -1)   # True -> False
    for s_i, e_i in zip(starts, ends):
        lo = p[s_i] + g[s_i] * h / (g[s_i] - g[s_i + 1])
        hi = p[e_i] + g[e_i] * h / (g[e_i] - g[e_i + 1])
        intervals.append([float(lo), float(hi)])

    outside_gap = float(np.min(vV[~mask]) - c_V)
    stable = variation <= tau_b and outside_gap > -tau_b
    return PairReport(True, intervals, c_V, c_L, variation, stable, tau_b,
                      outside_gap)


def _analyze_pair_2d(V_fn, L_fn, p_box, n_p, tau_b):
    (lox, hix), (loy, hiy) = p_box
    n = int(n_p)
    px = np.linspace(lox, hix, n)
    py = np.linspace(loy, hiy, n)
    PX, PY = np.meshgrid(px, py, indexing="ij")
    vV = np.asarray(V_fn((PX, PY)), dtype=float)
    vL = np.asarray(L_fn((PX, PY)), dtype=float)
    h = max(px[1] - px[0], py[1] - py[0])
    if tau_b is None:
        lip = max(np.max(np.abs(np.diff(vV, axis=0))) / (px[1] - px[0]),
                  np.max(np.abs(np.diff(vV, axis=1))) / (py[1] - py[0]))
        tau_b = 10.0 * lip * h
    g = vL - vV
    mask = g >= 0.0
    ring = np.zeros_like(mask)
    ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
    if (mask & ring).any():
        raise BoxTooSmallError("comparison region touches the gradient box")
    if not mask.any():
        imin = np.unravel_index(np.argmin(vV), vV.shape)
        if ring[imin]:
            raise BoxTooSmallError("V attains its grid minimum on the box boundary")
        return PairReport(False, {"cells": 0}, float(vV[imin]), float(np.max(vL)),
                          0.0, True, tau_b)

    pts_V, pts_L = [], []
    for axis in (0, 1):
        m0 = mask if axis == 0 else mask.T
        g0 = g if axis == 0 else g.T
        grid = px if axis == 0 else py
        other = py if axis == 0 else px
        trans = m0[:-1, :] != m0[1:, :]
        ii, jj = np.nonzero(trans)
        if ii.size:
            frac = g0[ii, jj] / (g0[ii, jj] - g0[ii + 1, jj])
            pa = grid[ii] + frac * (grid[1] - grid[0])
            pb = other[jj]
            comp = (pa, pb) if axis == 0 else (pb, pa)
            pts_V.append(np.asarray(V_fn(comp), dtype=float))
            pts_L.append(np.asarray(L_fn(comp), dtype=float))
    bV = np.concatenate(pts_V)
    bL = np.concatenate(pts_L)
    variation = float(np.max(bV) - np.min(bV))
    c_V = float(np.mean(bV))
    c_L = float(np.mean(bL))
    ij = np.nonzero(mask)
    descriptor = {"cells": int(mask.sum()),
                  "bbox": [[float(px[ij[0].min()]), float(px[ij[0].max()])],
                           [float(py[ij[1].min()]), float(py[ij[1].max()])]]}
    outside_gap = float(np.min(vV[~mask]) - c_V)
    stable = variation <= tau_b and outside_gap > -tau_b
    return PairReport(True, descriptor, c_V, c_L, variation, stable, tau_b,
                      outside_gap)


def expand_p_box(family, medium, x_probe=None, start=4.0, cap=1024.0):
    """Grow a symmetric gradient box until every check dominates every hat
    on its boundary (1-D families)."""
    if family.dim != 1:
        raise ValueError("automatic boxes are one-dimensional")
    if x_probe is None:
        x_probe = np.linspace(0.0, medium.period, 65) if medium is not None \
            else np.zeros(1)
    R = start
    while R <= cap:
        edges = np.array([-R, R])
        ok = True
        for ck in family.checks:
            for ht in family.hats:
                cv = ck.evaluate(edges[:, None], x_probe[None, :], medium)
                hv = ht.evaluate(edges[:, None], x_probe[None, :], medium)
                if not np.all(cv > hv):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return (-R, R)
        R *= 2.0
    raise BoxTooSmallError("could not find a gradient box with dominant checks")


class ContactConstants:
    """Per-level contact fields on the medium sample plus their extrema.

    m_fields/M_fields: list over realizations of (ell, n_x) arrays.
    m_bar[k-1] = max over samples of m_k; M_lower[k-1] = min of M_k.
    """

    def __init__(self, m_fields, M_fields, x_nodes, seeds, witnesses, tau_b):
        self.m_fields = m_fields
        self.M_fields = M_fields
        self.x_nodes = x_nodes
        self.seeds = seeds
        self.witnesses = witnesses
        self.tau_b = tau_b
        stacked_m = np.concatenate(m_fields, axis=1)
        stacked_M = np.concatenate(M_fields, axis=1)
        self.m_bar = stacked_m.max(axis=1)
        self.M_lower = stacked_M.min(axis=1)

    @property
    def all_pairs_stable(self):
        return not self.witnesses

    def require_stable(self):
        if self.witnesses:
            w = self.witnesses[0]
            raise StabilityError(
                f"unstable pair at level {w['level']} ({w['kind']}), "
                f"x={w['x']}: boundary variation {w['variation']:.4g} "
                f"exceeds {w['tau_b']:.4g}", witness=w)

    def to_dict(self):
        return {"m_bar": self.m_bar.tolist(),
                "M_lower": self.M_lower.tolist(),
                "seeds": list(self.seeds),
                "all_pairs_stable": self.all_pairs_stable,
                "n_x": int(sum(f.shape[1] for f in self.m_fields)),
                "witnesses": self.witnesses[:8]}


def _piece_peak(piece, x, medium):
    """Exact max over p of a quasiconcave piece at fixed x when decomposable;
    grid scan otherwise."""
    if isinstance(piece, CombinedPiece):
        return None
    peak = piece.profile.extreme_value()
    if piece.coupling is None:
        return peak + 0.0 * np.asarray(x, dtype=float)
    coeff = piece.scale * medium.evaluate_channel(piece.channel, x)
    if piece.coupling == "additive":
        val = peak + coeff
    else:
        val = coeff * peak
    extras = piece.extra_const
    if piece.extra_field is not None:
        extras = extras + piece.extra_field(x)
    return val + extras


def contact_fields(family, media, x_nodes, p_box=None, n_p=2049, tau_b=None):
    """Contact fields and constants for a max-first family.

    ``media`` is one realization or a list (the extrema then run over
    all of them). Unstable pairs are recorded as witnesses, not raised;
    call .require_stable() on the result to gate.
    """
    if family.orientation != "max_first":
        raise ValueError("contact analysis expects a max-first family")
    if family.dim != 1:
        raise ValueError("contact fields are implemented for 1-D gradients")
    if not isinstance(media, (list, tuple)):
        media = [media]
    if p_box is None:
        p_box = expand_p_box(family, media[0])
    x_nodes = np.asarray(x_nodes, dtype=float)
    ell = family.ell

    m_fields, M_fields, witnesses = [], [], []
    tau_used = tau_b
    for medium in media:
        m_arr = np.empty((ell, x_nodes.size))
        M_arr = np.empty((ell, x_nodes.size))
        peak = _piece_peak(family.hats[0], x_nodes, medium)
        if peak is not None:
            M_arr[0] = peak
        for j, xj in enumerate(x_nodes):
            for k in range(ell):
                rep = analyze_pair(
                    lambda P: family.checks[k].evaluate(P, xj, medium),
                    lambda P: family.hats[k].evaluate(P, xj, medium),
                    p_box, n_p, tau_b)
                m_arr[k, j] = rep.contact_value_V
                if not rep.stable:
                    witnesses.append(_witness(k + 1, "level pair", xj, rep,
                                              medium.seed))
                tau_used = rep.tau_b if tau_used is None else tau_used
                if k > 0:
                    rep2 = analyze_pair(
                        lambda P: family.checks[k - 1].evaluate(P, xj, medium),
                        lambda P: family.hats[k].evaluate(P, xj, medium),
                        p_box, n_p, tau_b)
                    M_arr[k, j] = rep2.contact_value_Lambda
                    if not rep2.stable:
                        witnesses.append(_witness(k + 1, "cross pair", xj, rep2,
                                                  medium.seed))
            if peak is None:
                # grid peak fallback for combined hats
                P = _grid_1d(p_box, n_p)
                M_arr[0, j] = float(np.max(family.hats[0].evaluate(P, xj, medium)))
        m_fields.append(m_arr)
        M_fields.append(M_arr)
    seeds = [m.seed for m in media]
    return ContactConstants(m_fields, M_fields, x_nodes, seeds, witnesses,
                            tau_used)


def _witness(level, kind, x, rep, seed):
    return {"level": level, "kind": kind, "x": float(x), "seed": seed,
            "variation": rep.boundary_variation, "tau_b": rep.tau_b,
            "contact_value_V": rep.contact_value_V,
            "outside_gap": rep.outside_gap}


def check_monotonicity(constants, strict=False):
    """Verdicts for the two contact chains: m_bar non-increasing,
    M_lower non-decreasing (strictly, when asked)."""
    m, M = constants.m_bar, constants.M_lower
    failures = []
    for k in range(m.size - 1):
        ok = m[k] > m[k + 1] if strict else m[k] >= m[k + 1]
        if not ok:
            failures.append({"chain": "upper", "index": k + 1,
                             "values": [float(m[k]), float(m[k + 1])]})
        ok = M[k] < M[k + 1] if strict else M[k] <= M[k + 1]
        if not ok:
            failures.append({"chain": "lower", "index": k + 1,
                             "values": [float(M[k]), float(M[k + 1])]})
    return {"monotone": not failures, "strict": strict, "failures": failures}


def require_monotone(constants, strict=False):
    verdict = check_monotonicity(constants, strict)
    if not verdict["monotone"]:
        f = verdict["failures"][0]
        chain = "m-bar" if f["chain"] == "upper" else "M-lower"
        raise MonotonicityError(
            f"{chain} chain fails at levels {f['index']}/{f['index'] + 1}: "
            f"{f['values'][0]:.6g} vs {f['values'][1]:.6g}",
            chain=f["chain"], index=f["index"])
    return verdict


def perturb_to_strict(family, media, eps, x_nodes, p_box=None, n_p=2049,
                      tau_b=None):
    """Shift both pieces of level k by -k*eps/(2*ell).

    Constant shifts move each m_k exactly by the shift (the comparison
    region is unchanged), so the upper chain gains gaps of eps/(2*ell).
    The lower chain moves by level-coupled amounts; if it fails to come
    out strictly monotone (possible when it has exact ties), this raises
    instead of pretending.

    Returns (perturbed family, its contact constants).
    """
    ell = family.ell
    checks, hats = [], []
    for k in range(ell):
        d = -(k + 1) * eps / (2.0 * ell)
        checks.append(family.checks[k].with_extra_const(d))
        hats.append(family.hats[k].with_extra_const(d))
    fam2 = MinMaxFamily(checks, hats, family.orientation,
                        normalized=family.normalized)
    consts2 = contact_fields(fam2, media, x_nodes, p_box, n_p, tau_b)
    verdict = check_monotonicity(consts2, strict=True)
    if not verdict["monotone"]:
        raise PerturbationError(
            "constant level shifts cannot make the contact chains strictly "
            f"monotone here: {verdict['failures'][0]}")
    return fam2, consts2


def kappa_shift(family, kappa, constants_args, level=1):
    """Add the field kappa * (m_bar_k - m_k(x)) to both pieces of one level.

    ``constants_args`` is (media, x_nodes, p_box, n_p) describing where
    m_k and its max are computed; the field itself is evaluated exactly
    (pair analysis on demand) at whatever x the shifted pieces see.
    The shift is affine in kappa and vanishes at the contact maximizer.
    """
    media, x_nodes, p_box, n_p = constants_args
    consts = contact_fields(family, media, x_nodes, p_box, n_p)
    k = level - 1
    m_bar_k = float(consts.m_bar[k])
    medium0 = media[0] if isinstance(media, (list, tuple)) else media
    if p_box is None:
        p_box = expand_p_box(family, medium0)
    check_k, hat_k = family.checks[k], family.hats[k]

    def field(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        for j, xj in enumerate(x):
            rep = analyze_pair(lambda P: check_k.evaluate(P, xj, medium0),
                               lambda P: hat_k.evaluate(P, xj, medium0),
                               p_box, n_p)
            out[j] = kappa * (m_bar_k - rep.contact_value_V)
        return out if out.size > 1 else float(out[0])

    checks = list(family.checks)
    hats = list(family.hats)
    checks[k] = checks[k].with_extra_field(field)
    hats[k] = hats[k].with_extra_field(field)
    return MinMaxFamily(checks, hats, family.orientation,
                        normalized=False)


def check_condition_e(family, medium, x_nodes, p_box=None, n_p=2049,
                      tol=1e-9):
    """Thin-level-set check at level 1.

    For each sampled x, the set {p : |piece(p, x) - m_1(x)| <= tol} must
    have no grid-interior point for either level-1 piece. The catalogue
    is exactly evaluable, so tol is an arithmetic tolerance, not a
    grid-scale one: genuine flats produce exact runs, sharp minima do
    not.
    """
    if p_box is None:
        p_box = expand_p_box(family, medium)
    P = _grid_1d(p_box, n_p)
    x_nodes = np.asarray(x_nodes, dtype=float)
    witnesses = []
    for xj in x_nodes:
        rep = analyze_pair(lambda q: family.checks[0].evaluate(q, xj, medium),
                           lambda q: family.hats[0].evaluate(q, xj, medium),
                           p_box, n_p)
        m1 = rep.contact_value_V
        scale = max(1.0, abs(m1))
        for name, piece in (("check", family.checks[0]),
                            ("hat", family.hats[0])):
            vals = piece.evaluate(P, xj, medium)
            hit = np.abs(vals - m1) <= tol * scale
            interior = hit[1:-1] & hit[:-2] & hit[2:]
            if interior.any():
                i = int(np.flatnonzero(interior)[0]) + 1
                witnesses.append({"x": float(xj), "piece": name,
                                  "p": float(P[i]), "value": float(vals[i]),
                                  "contact": float(m1)})
                break
    return {"holds": not witnesses, "witnesses": witnesses[:8]}
