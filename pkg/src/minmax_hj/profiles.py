"""Gradient profiles: the p-dependent part of every Hamiltonian piece.

Three shapes cover everything the rest of the package builds:

* ``AbsShift``     -- offset + slope * |p - center|   (quasiconvex, coercive)
* ``NegatedAbs``   -- offset - slope * |p - center|   (quasiconcave, -> -inf)
* ``PiecewiseMonotone`` -- piecewise-linear valley or hill on the line,
  extended past the end breakpoints with the terminal slopes. Valleys may
  have a flat bottom; branches must otherwise be strictly monotone.

All three are exactly evaluable (piecewise linear in the scalar argument),
closed under the two dualities ``negate_dual`` (phi -> -phi(-p)) and
``even_dual`` (phi -> phi(-p)), and expose exact level-set endpoints,
which the contact-value and cell-problem code relies on.

Points in gradient space are handled as component tuples: a profile in
dimension d evaluates on a tuple of d broadcastable arrays.
"""

import numpy as np

from .errors import ProfileShapeError

QUASICONVEX = "quasiconvex"
QUASICONCAVE = "quasiconcave"


def as_components(p, dim):
    """Normalize a gradient point/batch to a tuple of ``dim`` arrays."""
    if isinstance(p, (tuple, list)):
        if len(p) != dim:
            raise ValueError(f"expected {dim} gradient components, got {len(p)}")
        return tuple(np.asarray(c, dtype=float) for c in p)
    arr = np.asarray(p, dtype=float)
    if dim == 1:
        return (arr,)
    if arr.shape and arr.shape[-1] == dim:
        return tuple(arr[..., i] for i in range(dim))
    raise ValueError(f"cannot interpret point of shape {arr.shape} in dimension {dim}")


def _radial(comps, center):
    if len(comps) == 1:
        return np.abs(comps[0] - center[0])
    return np.hypot(comps[0] - center[0], comps[1] - center[1])


class AbsShift:
    """offset + slope * |p - center|."""

    kind = "abs_shift"
    tag = QUASICONVEX

    def __init__(self, center, slope, offset=0.0):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if center.ndim != 1 or center.size not in (1, 2):
            raise ProfileShapeError("center must be scalar or length-2")
        if not slope > 0:
            raise ProfileShapeError("slope must be positive for a coercive profile")
        self.center = center
        self.slope = float(slope)
        self.offset = float(offset)

    @property
    def dim(self):
        return self.center.size

    def __call__(self, comps):
        return self.offset + self.slope * _radial(comps, self.center)

    def bind_base(self, pbase):
        e = np.asarray(pbase, dtype=float).reshape(self.center.shape) - self.center
        s, o = self.slope, self.offset
        if self.dim == 1:
            e0 = e[0]
            return lambda dv: o + s * np.abs(dv[0] + e0)
        e0, e1 = e
        return lambda dv: o + s * np.hypot(dv[0] + e0, dv[1] + e1)

    def lipschitz(self):
        return self.slope

    def extreme_value(self):
        return self.offset

    def sublevel_interval(self, t):
        """Endpoints of {phi <= t} (1-D only); None if empty."""
        if self.dim != 1:
            raise ValueError("interval queries are one-dimensional")
        if t < self.offset:
            return None
        r = (t - self.offset) / self.slope
        return (self.center[0] - r, self.center[0] + r)

    def branch_inverses(self, t):
        """Leftmost/rightmost solutions of phi = t, vectorized (1-D only)."""
        if self.dim != 1:
            raise ValueError("interval queries are one-dimensional")
        t = np.asarray(t, dtype=float)
        if np.any(t < self.offset - 1e-12):
            raise ValueError("level below the profile minimum")
        r = np.maximum(t - self.offset, 0.0) / self.slope
        return self.center[0] - r, self.center[0] + r

    def negate_dual(self):
        return NegatedAbs(-self.center, self.slope, -self.offset)

    def even_dual(self):
        return AbsShift(-self.center, self.slope, self.offset)

    def describe(self):
        return {"kind": self.kind, "center": self.center.tolist(),
                "slope": self.slope, "offset": self.offset}


class NegatedAbs:
    """offset - slope * |p - center|."""

    kind = "negated_abs"
    tag = QUASICONCAVE

    def __init__(self, center, slope, offset=0.0):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if center.ndim != 1 or center.size not in (1, 2):
            raise ProfileShapeError("center must be scalar or length-2")
        if not slope > 0:
            raise ProfileShapeError("slope must be positive")
        self.center = center
        self.slope = float(slope)
        self.offset = float(offset)

    @property
    def dim(self):
        return self.center.size

    def __call__(self, comps):
        return self.offset - self.slope * _radial(comps, self.center)

    def bind_base(self, pbase):
        e = np.asarray(pbase, dtype=float).reshape(self.center.shape) - self.center
        s, o = self.slope, self.offset
        if self.dim == 1:
            e0 = e[0]
            return lambda dv: o - s * np.abs(dv[0] + e0)
        e0, e1 = e
        return lambda dv: o - s * np.hypot(dv[0] + e0, dv[1] + e1)

    def lipschitz(self):
        return self.slope

    def extreme_value(self):
        return self.offset

    def superlevel_interval(self, t):
        """Endpoints of {phi >= t} (1-D only); None if empty."""
        if self.dim != 1:
            raise ValueError("interval queries are one-dimensional")
        if t > self.offset:
            return None
        r = (self.offset - t) / self.slope
        return (self.center[0] - r, self.center[0] + r)

    def negate_dual(self):
        return AbsShift(-self.center, self.slope, -self.offset)

    def even_dual(self):
        return NegatedAbs(-self.center, self.slope, self.offset)

    def describe(self):
        return {"kind": self.kind, "center": self.center.tolist(),
                "slope": self.slope, "offset": self.offset}


def _pl_eval(u, breaks, values, slope_l, slope_r):
    out = np.interp(u, breaks, values)
    out = np.where(u < breaks[0], values[0] + slope_l * (u - breaks[0]), out)
    out = np.where(u > breaks[-1], values[-1] + slope_r * (u - breaks[-1]), out)
    return out


class PiecewiseMonotone:
    """Piecewise-linear valley or hill on the line.

    ``direction`` is "valley" (quasiconvex, coercive) or "hill"
    (quasiconcave, anticoercive). The slope pattern is validated:
    strictly falling, then an optional flat run (the bottom/top), then
    strictly rising -- mirrored for hills. Terminal slopes extend the
    profile linearly, so coercivity is genuine.
    """

    kind = "piecewise_monotone"

    def __init__(self, breaks, values, direction="valley"):
        breaks = np.asarray(breaks, dtype=float)
        values = np.asarray(values, dtype=float)
        if breaks.ndim != 1 or breaks.size < 2 or breaks.shape != values.shape:
            raise ProfileShapeError("need matching 1-D breaks/values, at least two")
        if not np.all(np.diff(breaks) > 0):
            raise ProfileShapeError("breaks must be strictly increasing")
        slopes = np.diff(values) / np.diff(breaks)
        sgn = np.sign(slopes)
        if direction == "valley":
            pattern_ok = self._valley_pattern(sgn)
        elif direction == "hill":
            pattern_ok = self._valley_pattern(-sgn)
        else:
            raise ProfileShapeError(f"unknown direction {direction!r}")
        if not pattern_ok:
            raise ProfileShapeError(
                f"values do not form a {direction}: slope signs {sgn.tolist()}")
        self.breaks = breaks
        self.values = values
        self.direction = direction
        self._slopes = slopes
        # indices bracketing the extremum plateau
        ext = values.argmin() if direction == "valley" else values.argmax()
        vext = values[ext]
        att = np.flatnonzero(values == vext)
        self._ext_lo = int(att[0])
        self._ext_hi = int(att[-1])

    @staticmethod
    def _valley_pattern(sgn):
        # strictly -1 run, optional 0 run, strictly +1 run; both strict runs required
        n = sgn.size
        i = 0
        while i < n and sgn[i] < 0:
            i += 1
        if i == 0:
            return False
        j = i
        while j < n and sgn[j] == 0:
            j += 1
        if j == n or np.any(sgn[j:] <= 0):
            return False
        return True

    @property
    def tag(self):
        return QUASICONVEX if self.direction == "valley" else QUASICONCAVE

    @property
    def dim(self):
        return 1

    def __call__(self, comps):
        return _pl_eval(comps[0], self.breaks, self.values,
                        self._slopes[0], self._slopes[-1])

    def bind_base(self, pbase):
        b = self.breaks - np.asarray(pbase, dtype=float).reshape(())
        v, sl, sr = self.values, self._slopes[0], self._slopes[-1]
        return lambda dv: _pl_eval(dv[0], b, v, sl, sr)

    def lipschitz(self):
        return float(np.max(np.abs(self._slopes)))

    def extreme_value(self):
        return float(self.values[self._ext_lo])

    def sublevel_interval(self, t):
        if self.direction != "valley":
            raise ValueError("sublevel interval applies to valleys")
        if t < self.extreme_value():
            return None
        lo, hi = self.branch_inverses(t)
        return (float(lo), float(hi))

    def superlevel_interval(self, t):
        if self.direction != "hill":
            raise ValueError("superlevel interval applies to hills")
        if t > self.extreme_value():
            return None
        dual = self.negate_dual()
        lo, hi = dual.branch_inverses(-t)
        return (-float(hi), -float(lo))

    def branch_inverses(self, t):
        """Leftmost/rightmost solutions of phi = t for a valley, vectorized."""
        if self.direction != "valley":
            raise ValueError("branch inverses apply to valleys")
        t = np.asarray(t, dtype=float)
        vmin = self.extreme_value()
        if np.any(t < vmin - 1e-12):
            raise ValueError("level below the profile minimum")
        t = np.maximum(t, vmin)
        i0, i1 = self._ext_lo, self._ext_hi
        # falling branch, reversed so values ascend
        vb, bb = self.values[:i0 + 1][::-1], self.breaks[:i0 + 1][::-1]
        left = np.interp(t, vb, bb)
        over = t > self.values[0]
        if np.any(over):
            left = np.where(over, self.breaks[0] + (t - self.values[0]) / self._slopes[0], left)
        vb2, bb2 = self.values[i1:], self.breaks[i1:]
        right = np.interp(t, vb2, bb2)
        over2 = t > self.values[-1]
        if np.any(over2):
            right = np.where(over2, self.breaks[-1] + (t - self.values[-1]) / self._slopes[-1], right)
        return left, right

    def negate_dual(self):
        d = "hill" if self.direction == "valley" else "valley"
        return PiecewiseMonotone(-self.breaks[::-1], -self.values[::-1], d)

    def even_dual(self):
        return PiecewiseMonotone(-self.breaks[::-1], self.values[::-1], self.direction)

    def describe(self):
        return {"kind": self.kind, "breaks": self.breaks.tolist(),
                "values": self.values.tolist(), "direction": self.direction}


_KINDS = {"abs_shift": AbsShift, "negated_abs": NegatedAbs,
          "piecewise_monotone": PiecewiseMonotone}


def profile_from_dict(data):
    """Build a profile from its ``describe()`` dictionary (config loading)."""
    data = dict(data)
    kind = data.pop("kind", None)
    if kind not in _KINDS:
        raise ProfileShapeError(f"unknown profile kind {kind!r}")
    return _KINDS[kind](**data)
