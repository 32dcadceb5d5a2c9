"""Coefficient fields on a torus: periodic formulas, seeded checkerboards,
periodized quasiperiodic sums.

A medium spec declares named coefficient channels; a realization is the
spec plus a seed (random kinds draw their cell tables from it) plus an
accumulated translation offset. Evaluation wraps the argument into the
fundamental cell, so evaluate(x + period) == evaluate(x) holds exactly,
and translate(z) followed by evaluate(x) matches evaluate(x + z) bit for
bit because both paths reduce to the same float expression.

Checkerboard cells define the only genuine lattice; translating one by a
non-lattice vector snaps to the nearest lattice point with a warning.
Quasiperiodic sums are wrapped at the torus seam (they are surrogates,
not true quasiperiodic fields).
"""

import warnings

import numpy as np

from .errors import ConfigError
from .profiles import as_components

_PERIODIC_FORMULAS = ("sin_sq", "cos_sq", "cos", "constant")


class MediumSpec:
    def __init__(self, kind, period=1.0, dim=1, channels=None):
        if kind not in ("periodic", "checkerboard", "quasiperiodic"):
            raise ConfigError(f"unknown medium kind {kind!r}")
        if not period > 0:
            raise ConfigError("period must be positive")
        if dim not in (1, 2):
            raise ConfigError("dimension must be 1 or 2")
        self.kind = kind
        self.period = float(period)
        self.dim = int(dim)
        self.channels = [dict(c) for c in (channels or [])]
        if not self.channels:
            raise ConfigError("medium needs at least one channel")
        for i, ch in enumerate(self.channels):
            self._validate_channel(i, ch)

    def _validate_channel(self, i, ch):
        if self.kind == "periodic":
            f = ch.get("formula")
            if f not in _PERIODIC_FORMULAS:
                raise ConfigError(f"channel {i}: unknown formula {f!r}")
            if f == "constant" and "value" not in ch:
                raise ConfigError(f"channel {i}: constant needs a value")
        elif self.kind == "checkerboard":
            cell = ch.get("cell")
            if not cell or cell <= 0:
                raise ConfigError(f"channel {i}: checkerboard needs a positive cell")
            n = self.period / cell
            if abs(n - round(n)) > 1e-12:
                raise ConfigError(f"channel {i}: cell must divide the period")
            lo, hi = ch.get("low"), ch.get("high")
            if lo is None or hi is None or not lo < hi:
                raise ConfigError(f"channel {i}: need value bounds low < high")
        else:
            freqs = ch.get("freqs")
            amps = ch.get("amps")
            if not freqs or not amps or len(freqs) != len(amps):
                raise ConfigError(f"channel {i}: need matching freqs/amps")

    def describe(self):
        return {"kind": self.kind, "period": self.period, "dim": self.dim,
                "channels": [dict(c) for c in self.channels]}


def sample_realization(spec, seed=0):
    """Draw the realization for (spec, seed); deterministic."""
    tables = []
    if spec.kind == "checkerboard":
        for i, ch in enumerate(spec.channels):
            rng = np.random.default_rng([int(seed), i])
            ncell = int(round(spec.period / ch["cell"]))
            shape = (ncell,) * spec.dim
            tables.append(rng.uniform(ch["low"], ch["high"], size=shape))
    return MediumRealization(spec, int(seed), tables)


class MediumRealization:
    def __init__(self, spec, seed, tables, offset=None):
        self.spec = spec
        self.seed = seed
        self.tables = tables
        if offset is None:
            offset = np.zeros(spec.dim)
        self.offset = np.asarray(offset, dtype=float)

    @property
    def dim(self):
        return self.spec.dim

    @property
    def period(self):
        return self.spec.period

    def translate(self, z):
        """Shifted realization; evaluate(x) afterwards equals evaluate(x+z)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.shape != (self.dim,):
            raise ValueError(f"translation must have {self.dim} components")
        if self.spec.kind == "checkerboard":
            cell = min(ch["cell"] for ch in self.spec.channels)
            snapped = np.round(z / cell) * cell
            if np.any(np.abs(snapped - z) > 1e-12 * max(1.0, self.period)):
                warnings.warn(
                    f"translation {z.tolist()} is not cell-aligned; "
                    f"snapping to {snapped.tolist()}", stacklevel=2)
            z = snapped
        return MediumRealization(self.spec, self.seed, self.tables,
                                 self.offset + z)

    def _wrap(self, x):
        comps = as_components(x, self.dim)
        return tuple(np.mod(c + o, self.period)
                     for c, o in zip(comps, self.offset))

    def evaluate_channel(self, idx, x):
        """Channel value at x (components broadcast); exact wrap semantics."""
        ch = self.spec.channels[idx]
        y = self._wrap(x)
        if self.spec.kind == "periodic":
            return self._periodic_value(ch, y)
        if self.spec.kind == "checkerboard":
            table = self.tables[idx]
            cell = ch["cell"]
            n = table.shape[0]
            ij = tuple(np.floor(c / cell).astype(np.int64) % n for c in y)
            return table[ij]
        return self._quasi_value(ch, y)

    def _periodic_value(self, ch, y):
        f = ch["formula"]
        if f == "constant":
            return float(ch["value"]) + 0.0 * y[0]
        amp = ch.get("amplitude", 1.0)
        off = ch.get("offset", 0.0)
        shift = ch.get("shift", 0.0)
        L = self.period
        acc = 0.0
        for c in y:
            u = (c - shift) / L
            if f == "sin_sq":
                acc = acc + np.sin(np.pi * u) ** 2
            elif f == "cos_sq":
                acc = acc + np.cos(np.pi * u) ** 2
            else:
                acc = acc + np.cos(2 * np.pi * u)
        return off + amp * acc / len(y)

    def _quasi_value(self, ch, y):
        off = ch.get("offset", 0.0)
        phases = ch.get("phases", [0.0] * len(ch["freqs"]))
        acc = 0.0
        for fr, am, phz in zip(ch["freqs"], ch["amps"], phases):
            fr = np.atleast_1d(np.asarray(fr, dtype=float))
            if fr.size == 1:
                fr = np.repeat(fr, len(y))
            s = 0.0
            for c, fc in zip(y, fr):
                s = s + fc * c
            acc = acc + am * np.cos(2 * np.pi * s + phz)
        return off + acc

    def evaluate_coeffs(self, x):
        """All channel values at x, as a tuple."""
        return tuple(self.evaluate_channel(i, x)
                     for i in range(len(self.spec.channels)))

    def channel_bounds(self, idx):
        """Certified (low, high) bounds for a channel's values."""
        ch = self.spec.channels[idx]
        if self.spec.kind == "periodic":
            f = ch["formula"]
            if f == "constant":
                v = float(ch["value"])
                return (v, v)
            amp = ch.get("amplitude", 1.0)
            off = ch.get("offset", 0.0)
            if f in ("sin_sq", "cos_sq"):
                lo, hi = sorted((off, off + amp))
            else:
                lo, hi = off - abs(amp), off + abs(amp)
            return (float(lo), float(hi))
        if self.spec.kind == "checkerboard":
            return (float(ch["low"]), float(ch["high"]))
        off = ch.get("offset", 0.0)
        spread = sum(abs(a) for a in ch["amps"])
        return (float(off - spread), float(off + spread))

    def describe(self):
        return {"spec": self.spec.describe(), "seed": self.seed,
                "offset": self.offset.tolist()}
