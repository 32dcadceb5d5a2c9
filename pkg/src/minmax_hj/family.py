"""Min-max families of Hamiltonian pieces and the scalar nesting identity.

A family holds an equal number of quasiconvex pieces (``checks``) and
quasiconcave pieces (``hats``). Whole levels nest as

    H_1 = max(check_1, hat_1)
    H_k = max(check_k, min(hat_k, H_{k-1}))

and half levels as H_{k+1/2} = min(hat_{k+1}, H_k). The scalar identity
behind reordering says the nested value is unchanged when the sequences
are replaced by their running extrema; ``reorder_family`` is its
function-level counterpart.

Families carry an ``orientation``: negation duality swaps piece roles
and flips the nesting to min-first, so that evaluating the dual at p
equals the negated original at -p exactly (no roundoff: only negations,
maxima and minima are involved).
"""

import numpy as np

from .errors import OrderingViolationError, ProfileShapeError
from .profiles import QUASICONCAVE, QUASICONVEX, as_components, profile_from_dict


def minmax_scalar(a, b):
    """Alternating nested value of two equal-length sequences.

    First entries are outermost:
    max(a[0], min(b[0], max(a[1], ..., max(a[-1], b[-1])))).
    Entries may be floats or broadcastable arrays.
    """
    a = [np.asarray(v, dtype=float) for v in a]
    b = [np.asarray(v, dtype=float) for v in b]
    if len(a) != len(b) or not a:
        raise ValueError("need equal-length, nonempty sequences")
    v = np.maximum(a[-1], b[-1])
    for k in range(len(a) - 2, -1, -1):
        v = np.maximum(a[k], np.minimum(b[k], v))
    return v if v.shape else float(v)


def minmax_scalar_monotone(a, b):
    """Same nested value, computed from running extrema.

    Replaces a by its running maxima and b by its running minima (from
    the outside in) before nesting. Equal to ``minmax_scalar`` for
    arbitrary inputs; the monotone sequences are what the reordering
    construction produces.
    """
    a = np.stack([np.asarray(v, dtype=float) for v in a])
    b = np.stack([np.asarray(v, dtype=float) for v in b])
    if a.shape != b.shape:
        raise ValueError("need equal-length sequences")
    alpha = np.maximum.accumulate(a, axis=0)
    beta = np.minimum.accumulate(b, axis=0)
    v = np.maximum(alpha[-1], beta[-1])
    for k in range(a.shape[0] - 2, -1, -1):
        v = np.maximum(alpha[k], np.minimum(beta[k], v))
    return v if v.shape else float(v)


class Piece:
    """One Hamiltonian piece: profile in p coupled to a medium coefficient.

    coupling:
      None        -- x-independent, H(p) = profile(p)
      "additive"  -- profile(p) + scale * coeff(x)
      "amplitude" -- scale * coeff(x) * profile(p); coefficient must stay
                     positive or the convexity tag would be wrong.

    ``extra_const`` and ``extra_field`` hold additive modifications used
    by the strictness perturbation and the contact-flattening shift.
    """

    def __init__(self, profile, coupling=None, channel=None, scale=1.0,
                 extra_const=0.0, extra_field=None):
        if coupling not in (None, "additive", "amplitude"):
            raise ProfileShapeError(f"unknown coupling {coupling!r}")
        if coupling is not None and channel is None:
            raise ProfileShapeError("coupled pieces need a medium channel")
        if coupling == "amplitude" and scale <= 0:
            raise ProfileShapeError("amplitude coupling needs a positive scale")
        self.profile = profile
        self.coupling = coupling
        self.channel = channel
        self.scale = float(scale)
        self.extra_const = float(extra_const)
        self.extra_field = extra_field

    @property
    def dim(self):
        return self.profile.dim

    @property
    def tag(self):
        return self.profile.tag

    def _coeff(self, x, medium):
        vals = medium.evaluate_channel(self.channel, x)
        return self.scale * vals

    def _extras(self, x):
        e = self.extra_const
        if self.extra_field is not None:
            e = e + self.extra_field(x)
        return e

    def evaluate(self, p, x=None, medium=None):
        comps = as_components(p, self.dim)
        base = self.profile(comps)
        if self.coupling is None:
            val = base
        elif self.coupling == "additive":
            val = base + self._coeff(x, medium)
        else:
            val = self._coeff(x, medium) * base
        return val + self._extras(x)

    def bind_base(self, pbase, x, medium):
        """Freeze the x-dependence on a node set; returns f(dv) = H(pbase+dv, x)."""
        f = self.profile.bind_base(pbase)
        extras = self._extras(x)
        if self.coupling is None:
            if np.all(np.asarray(extras) == 0.0):
                return f
            return lambda dv: f(dv) + extras
        coeff = self._coeff(x, medium)
        if self.coupling == "additive":
            shift = coeff + extras
            return lambda dv: f(dv) + shift
        if np.any(coeff <= 0):
            raise ProfileShapeError(
                "amplitude coefficient is not positive on the node set; "
                "convexity tag would be invalid")
        return lambda dv: coeff * f(dv) + extras

    def lipschitz(self, medium=None):
        lip = self.profile.lipschitz()
        if self.coupling == "amplitude":
            lo, hi = medium.channel_bounds(self.channel)
            lip *= self.scale * max(abs(lo), abs(hi))
        return lip

    def with_extra_const(self, delta):
        return Piece(self.profile, self.coupling, self.channel, self.scale,
                     self.extra_const + delta, self.extra_field)

    def with_extra_field(self, field):
        if self.extra_field is not None:
            old = self.extra_field
            field_new = lambda x, _old=old, _f=field: _old(x) + _f(x)
        else:
            field_new = field
        return Piece(self.profile, self.coupling, self.channel, self.scale,
                     self.extra_const, field_new)

    def negate_dual(self):
        scale = -self.scale if self.coupling == "additive" else self.scale
        field = self.extra_field
        if field is not None:
            field = lambda x, _f=self.extra_field: -_f(x)
        return Piece(self.profile.negate_dual(), self.coupling, self.channel,
                     scale, -self.extra_const, field)

    def even_dual(self):
        return Piece(self.profile.even_dual(), self.coupling, self.channel,
                     self.scale, self.extra_const, self.extra_field)

    def describe(self):
        d = {"profile": self.profile.describe(), "coupling": self.coupling,
             "channel": self.channel, "scale": self.scale}
        if self.extra_const:
            d["extra_const"] = self.extra_const
        if self.extra_field is not None:
            d["extra_field"] = "callable"
        return d


class CombinedPiece:
    """Pointwise max (of quasiconvex) or min (of quasiconcave) pieces.

    Produced by reordering; closed under the dualities.
    """

    def __init__(self, op, pieces):
        if op not in ("max", "min"):
            raise ValueError("op must be 'max' or 'min'")
        tags = {p.tag for p in pieces}
        if len(tags) != 1:
            raise ProfileShapeError("combined pieces must share a convexity tag")
        want = QUASICONVEX if op == "max" else QUASICONCAVE
        if tags.pop() != want:
            raise ProfileShapeError(f"{op} combination would break the convexity tag")
        self.op = op
        self.pieces = list(pieces)

    @property
    def dim(self):
        return self.pieces[0].dim

    @property
    def tag(self):
        return QUASICONVEX if self.op == "max" else QUASICONCAVE

    def evaluate(self, p, x=None, medium=None):
        red = np.maximum if self.op == "max" else np.minimum
        out = self.pieces[0].evaluate(p, x, medium)
        for pc in self.pieces[1:]:
            out = red(out, pc.evaluate(p, x, medium))
        return out

    def bind_base(self, pbase, x, medium):
        red = np.maximum if self.op == "max" else np.minimum
        fs = [pc.bind_base(pbase, x, medium) for pc in self.pieces]

        def run(dv):
            out = fs[0](dv)
            for f in fs[1:]:
                out = red(out, f(dv))
            return out
        return run

    def lipschitz(self, medium=None):
        return max(pc.lipschitz(medium) for pc in self.pieces)

    def negate_dual(self):
        op = "min" if self.op == "max" else "max"
        return CombinedPiece(op, [pc.negate_dual() for pc in self.pieces])

    def even_dual(self):
        return CombinedPiece(self.op, [pc.even_dual() for pc in self.pieces])

    def describe(self):
        return {"combine": self.op, "pieces": [pc.describe() for pc in self.pieces]}


class MinMaxFamily:
    """Equal-length lists of quasiconvex and quasiconcave pieces."""

    def __init__(self, checks, hats, orientation="max_first", normalized=False):
        if len(checks) != len(hats) or not checks:
            raise ProfileShapeError("need equally many checks and hats, at least one")
        dims = {pc.dim for pc in checks} | {pc.dim for pc in hats}
        if len(dims) != 1:
            raise ProfileShapeError("mixed dimensions in family")
        for pc in checks:
            if pc.tag != QUASICONVEX:
                raise ProfileShapeError("checks must be quasiconvex")
        for pc in hats:
            if pc.tag != QUASICONCAVE:
                raise ProfileShapeError("hats must be quasiconcave")
        if orientation not in ("max_first", "min_first"):
            raise ProfileShapeError(f"unknown orientation {orientation!r}")
        self.checks = list(checks)
        self.hats = list(hats)
        self.orientation = orientation
        self.normalized = bool(normalized)

    @property
    def ell(self):
        return len(self.checks)

    @property
    def dim(self):
        return self.checks[0].dim

    def levels(self):
        """All valid evaluation levels: 1, 3/2, ..., ell."""
        return [k / 2 for k in range(2, 2 * self.ell + 1)]

    def evaluate(self, s, p, x=None, medium=None):
        return eval_minmax(self, s, p, x, medium)

    def as_hamiltonian(self, s=None):
        return LevelHamiltonian(self, self.ell if s is None else s)

    def lipschitz(self, medium=None):
        return max(pc.lipschitz(medium) for pc in self.checks + self.hats)

    def describe(self):
        return {"orientation": self.orientation,
                "checks": [pc.describe() for pc in self.checks],
                "hats": [pc.describe() for pc in self.hats]}


def _level_split(family, s):
    two_s = int(round(2 * float(s)))
    if abs(2 * float(s) - two_s) > 0:
        raise ValueError(f"level must be a whole or half integer, got {s}")
    if two_s < 2 or two_s > 2 * family.ell:
        raise ValueError(f"level {s} out of range for a {family.ell}-level family")
    return two_s // 2, two_s % 2 == 1


def _fold(values_checks, values_hats, n_full, with_half, orientation):
    # max_first: checks take the outer max, hats the inner min, half levels
    # append an outer min with the next hat. min_first mirrors the roles.
    if orientation == "max_first":
        lead, other = values_checks, values_hats
        outer, inner = np.maximum, np.minimum
    else:
        lead, other = values_hats, values_checks
        outer, inner = np.minimum, np.maximum
    v = outer(lead[0], other[0])
    for k in range(1, n_full):
        v = outer(lead[k], inner(other[k], v))
    if with_half:
        v = inner(other[n_full], v)
    return v


def _used_counts(family, n_full, with_half):
    if family.orientation == "max_first":
        return n_full, n_full + (1 if with_half else 0)
    return n_full + (1 if with_half else 0), n_full


def eval_minmax(family, s, p, x=None, medium=None):
    """Evaluate the family nesting at whole or half level ``s``.

    If the family has not been marked normalized, the ordering is
    checked on the evaluation points themselves and a violation raises
    with the failing level.
    """
    n_full, with_half = _level_split(family, s)
    n_checks, n_hats = _used_counts(family, n_full, with_half)
    cv = [pc.evaluate(p, x, medium) for pc in family.checks[:n_checks]]
    hv = [pc.evaluate(p, x, medium) for pc in family.hats[:n_hats]]
    if not family.normalized:
        _check_ordering_values(cv, hv, p, x)
    return _fold(cv, hv, n_full, with_half, family.orientation)


def _check_ordering_values(check_vals, hat_vals, p, x):
    def first_witness(bad):
        idx = np.argwhere(bad)
        return tuple(idx[0]) if idx.size else None

    for k in range(len(check_vals) - 1):
        bad = check_vals[k] < check_vals[k + 1]
        if np.any(bad):
            w = first_witness(np.asarray(bad))
            lhs = np.asarray(check_vals[k])[w] if w else float(check_vals[k])
            rhs = np.asarray(check_vals[k + 1])[w] if w else float(check_vals[k + 1])
            raise OrderingViolationError("check", k + 1, p, x, float(lhs), float(rhs))
    for k in range(len(hat_vals) - 1):
        bad = hat_vals[k] > hat_vals[k + 1]
        if np.any(bad):
            w = first_witness(np.asarray(bad))
            lhs = np.asarray(hat_vals[k])[w] if w else float(hat_vals[k])
            rhs = np.asarray(hat_vals[k + 1])[w] if w else float(hat_vals[k + 1])
            raise OrderingViolationError("hat", k + 1, p, x, float(lhs), float(rhs))


def validate_ordering(family, medium, p_samples, x_samples):
    """Check the monotone ordering on a sample lattice, tolerance zero.

    Marks the family normalized on success; raises with the failing
    level and a witness point otherwise.
    """
    for xs in x_samples:
        cv = [pc.evaluate(p_samples, xs, medium) for pc in family.checks]
        hv = [pc.evaluate(p_samples, xs, medium) for pc in family.hats]
        _check_ordering_values(cv, hv, p_samples, xs)
    family.normalized = True
    return family


def reorder_family(family):
    """Replace pieces by running extrema over levels k..ell.

    The nested value at every level is unchanged (scalar identity); the
    returned family is normalized by construction.
    """
    ell = family.ell

    def combine(pieces, op):
        out = []
        for k in range(ell):
            tail = pieces[k:]
            out.append(tail[0] if len(tail) == 1 else CombinedPiece(op, tail))
        return out

    # running extrema respect the convexity roles in both orientations
    checks = combine(family.checks, "max")
    hats = combine(family.hats, "min")
    return MinMaxFamily(checks, hats, family.orientation, normalized=True)


def negate_dual(obj):
    """p -> -H(-p, x) duality; swaps convexity roles.

    Families swap checks/hats and flip nesting orientation so that
    evaluating the dual at (s, p) gives exactly the negated original at
    (s, -p).
    """
    if isinstance(obj, MinMaxFamily):
        orient = "min_first" if obj.orientation == "max_first" else "max_first"
        return MinMaxFamily([pc.negate_dual() for pc in obj.hats],
                            [pc.negate_dual() for pc in obj.checks],
                            orientation=orient, normalized=obj.normalized)
    return obj.negate_dual()


def even_dual(obj):
    """p -> H(-p, x) duality; preserves convexity roles."""
    if isinstance(obj, MinMaxFamily):
        return MinMaxFamily([pc.even_dual() for pc in obj.checks],
                            [pc.even_dual() for pc in obj.hats],
                            orientation=obj.orientation, normalized=obj.normalized)
    return obj.even_dual()


class LevelHamiltonian:
    """Solver-facing view of one nesting level (or a bare piece)."""

    def __init__(self, family, s):
        self.family = family
        self.s = s
        self._n_full, self._with_half = _level_split(family, s)

    @property
    def dim(self):
        return self.family.dim

    def evaluate(self, p, x=None, medium=None):
        return eval_minmax(self.family, self.s, p, x, medium)

    def bind_base(self, pbase, x, medium):
        fam = self.family
        n_checks, n_hats = _used_counts(fam, self._n_full, self._with_half)
        fc = [pc.bind_base(pbase, x, medium) for pc in fam.checks[:n_checks]]
        fh = [pc.bind_base(pbase, x, medium) for pc in fam.hats[:n_hats]]
        n_full, with_half, orient = self._n_full, self._with_half, fam.orientation

        def run(dv):
            cv = [f(dv) for f in fc]
            hv = [f(dv) for f in fh]
            return _fold(cv, hv, n_full, with_half, orient)
        return run

    def lipschitz(self, medium=None):
        n_checks, n_hats = _used_counts(self.family, self._n_full, self._with_half)
        pcs = self.family.checks[:n_checks] + self.family.hats[:n_hats]
        return max(pc.lipschitz(medium) for pc in pcs)


class GradientShift:
    """H'(p, x) = H(p - delta, x), with the shift folded into the base point.

    Folding keeps a shifted solve bit-identical to the original one when
    pbase - delta reproduces the original base point exactly in floating
    point.
    """

    def __init__(self, inner, delta):
        self.inner = inner
        self.delta = np.atleast_1d(np.asarray(delta, dtype=float))

    @property
    def dim(self):
        return self.inner.dim

    def evaluate(self, p, x=None, medium=None):
        comps = as_components(p, self.dim)
        shifted = tuple(c - d for c, d in zip(comps, self.delta))
        return self.inner.evaluate(shifted, x, medium)

    def bind_base(self, pbase, x, medium):
        base = np.atleast_1d(np.asarray(pbase, dtype=float)) - self.delta
        if self.dim == 1:
            base = float(base[0])
        return self.inner.bind_base(base, x, medium)

    def lipschitz(self, medium=None):
        return self.inner.lipschitz(medium)


class NegatedView:
    """Pointwise -H(-p, x) of an arbitrary Hamiltonian-like object."""

    def __init__(self, inner):
        self.inner = inner

    @property
    def dim(self):
        return self.inner.dim

    def evaluate(self, p, x=None, medium=None):
        comps = as_components(p, self.dim)
        return -self.inner.evaluate(tuple(-c for c in comps), x, medium)

    def bind_base(self, pbase, x, medium):
        base = -np.atleast_1d(np.asarray(pbase, dtype=float))
        if self.dim == 1:
            base = float(base[0])
        f = self.inner.bind_base(base, x, medium)
        if self.dim == 1:
            return lambda dv: -f((-dv[0],))
        return lambda dv: -f(tuple(-c for c in dv))

    def lipschitz(self, medium=None):
        return self.inner.lipschitz(medium)


def piece_from_dict(data, medium_channels=None):
    """Build a piece from plain config data."""
    data = dict(data)
    profile = profile_from_dict(data.pop("profile"))
    return Piece(profile,
                 coupling=data.pop("coupling", None),
                 channel=data.pop("channel", None),
                 scale=data.pop("scale", 1.0))
