"""Two-species local jump rates and their structural checks.

A two-species rate g = (g1, g2) on occupation pairs k = (k1, k2) must vanish
in species i exactly when k_i = 0, satisfy a Lipschitz bound in its own
species, and obey the compatibility identity

    g1(k) * g2(k - e1) == g1(k - e2) * g2(k)

which makes the factorial g!(k) (product of rates along any increasing lattice
path from the origin) path independent. All factorial quantities live in
log-space; series code routinely needs k in the thousands.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import DomainError

COMPAT_REL_TOL = 1e-9  # pure float roundoff from <= 60 multiplications


@dataclass(frozen=True, eq=False)
class OneSpeciesRate:
    """Single-species jump rate with a log-factorial in closed form when known.

    closed_form_tag is one of 'linear' (g(k)=k), 'constant' (g(k)=1 for k>=1),
    'evans' (g(k)=1+b/k) or 'custom'.
    """

    closed_form_tag: str
    b: float = 0.0
    func: object = None
    gstar: float = 1.0
    bounded: bool = True
    _cum_cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def linear(cls):
        return cls("linear", gstar=1.0, bounded=False)

    @classmethod
    def constant(cls):
        return cls("constant", gstar=1.0, bounded=True)

    @classmethod
    def evans(cls, b):
        if b <= 0:
            raise ValueError("evans parameter b must be positive")
        return cls("evans", b=float(b), gstar=1.0 + float(b), bounded=True)

    @classmethod
    def custom(cls, func, gstar, bounded):
        return cls("custom", func=func, gstar=float(gstar), bounded=bounded)

    def __call__(self, k):
        k = np.asarray(k)
        pos = k > 0
        kf = np.where(pos, k, 1).astype(np.float64)
        if self.closed_form_tag == "linear":
            val = kf
        elif self.closed_form_tag == "constant":
            val = np.ones_like(kf)
        elif self.closed_form_tag == "evans":
            val = 1.0 + self.b / kf
        else:
            val = np.asarray(self.func(np.where(pos, k, 1)), dtype=np.float64)
        out = np.where(pos, val, 0.0)
        return out if out.ndim else float(out)

    def log_factorial(self, k):
        """log g!(k) = sum_{j<=k} log g(j), vectorized; g!(0) = 1."""
        k = np.asarray(k)
        if np.any(k < 0):
            raise DomainError("negative occupancy")
        kf = k.astype(np.float64)
        if self.closed_form_tag == "linear":
            out = gammaln(kf + 1.0)
        elif self.closed_form_tag == "constant":
            out = np.zeros_like(kf)
        elif self.closed_form_tag == "evans":
            out = gammaln(kf + self.b + 1.0) - gammaln(self.b + 1.0) - gammaln(kf + 1.0)
        else:
            out = self._cum_log(int(k.max()) if k.ndim else int(k))[k]
        return out if out.ndim else float(out)

    def _cum_log(self, kmax):
        cached = self._cum_cache.get("cum")
        if cached is None or cached.size <= kmax:
            n = max(kmax + 1, 1024)
            vals = self(np.arange(n))
            if np.any(vals[1:] <= 0):
                raise DomainError("custom one-species rate vanishes at k >= 1")
            cum = np.concatenate([[0.0], np.cumsum(np.log(vals[1:]))])
            self._cum_cache["cum"] = cum
            cached = cum
        return cached


@dataclass(frozen=True, eq=False)
class SpeciesBlindRate:
    """Two-species rate g_i(k) = k_i * h(|k|_1) with h(m) = ghat(m)/m.

    Obtained from a one-species ZRP by colouring particles; compatibility
    holds identically and g!(k) = k1! k2! h!(k1+k2).
    """

    base: OneSpeciesRate
    gstar: float
    bounded: bool
    family_tag: str = "species_blind"

    def evaluate(self, k1, k2):
        g1, g2 = self.evaluate_vec(np.asarray(k1), np.asarray(k2))
        return float(g1), float(g2)

    def evaluate_vec(self, k1, k2):
        k1 = np.asarray(k1)
        k2 = np.asarray(k2)
        m = k1 + k2
        h = np.where(m > 0, self.base(m) / np.where(m > 0, m, 1), 0.0)
        return k1 * h, k2 * h

    def log_g_factorial_vec(self, k1, k2):
        k1 = np.asarray(k1, dtype=np.float64)
        k2 = np.asarray(k2, dtype=np.float64)
        m = (k1 + k2).astype(np.int64)
        log_h_fact = self.base.log_factorial(m) - gammaln(m + 1.0)
        return gammaln(k1 + 1.0) + gammaln(k2 + 1.0) + log_h_fact

    def tables(self, kmax1, kmax2):
        """Rate tables on [0..kmax1] x [0..kmax2] for the KMC kernels."""
        k1, k2 = np.meshgrid(
            np.arange(kmax1 + 1), np.arange(kmax2 + 1), indexing="ij"
        )
        g1, g2 = self.evaluate_vec(k1, k2)
        return np.ascontiguousarray(g1), np.ascontiguousarray(g2)

    def axis_rate(self, i):
        # both axis restrictions equal the underlying one-species rate
        return self.base


@dataclass(frozen=True, eq=False)
class TabulatedRate:
    """Rate given by explicit value tables on the finite box [0..box]^2.

    Evaluation outside the box is a domain error, never an extrapolation.
    """

    g1: np.ndarray
    g2: np.ndarray
    box: int
    gstar: float
    bounded: bool = True
    family_tag: str = "tabulated"
    _cum_cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_arrays(cls, g1, g2):
        g1 = np.asarray(g1, dtype=np.float64)
        g2 = np.asarray(g2, dtype=np.float64)
        if g1.shape != g2.shape or g1.ndim != 2 or g1.shape[0] != g1.shape[1]:
            raise ValueError("rate tables must be two equal square arrays")
        if np.any(g1 < 0) or np.any(g2 < 0):
            raise ValueError("negative jump rates")
        if np.any(g1[0, :] != 0) or np.any(g2[:, 0] != 0):
            raise ValueError("non-degeneracy requires g_i = 0 on the k_i = 0 axis")
        box = g1.shape[0] - 1
        d1 = np.abs(np.diff(g1, axis=0)).max() if box >= 1 else 0.0
        d2 = np.abs(np.diff(g2, axis=1)).max() if box >= 1 else 0.0
        return cls(g1=g1, g2=g2, box=box, gstar=float(max(d1, d2)))

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 4:
            raise ValueError("rate table CSV needs columns k1,k2,g1,g2")
        k1 = data[:, 0].astype(np.int64)
        k2 = data[:, 1].astype(np.int64)
        if np.any(k1 < 0) or np.any(k2 < 0):
            raise ValueError("negative occupancies in rate table")
        box = int(max(k1.max(), k2.max()))
        g1 = np.full((box + 1, box + 1), np.nan)
        g2 = np.full((box + 1, box + 1), np.nan)
        g1[k1, k2] = data[:, 2]
        g2[k1, k2] = data[:, 3]
        if np.isnan(g1).any() or np.isnan(g2).any():
            raise ValueError(f"rate table does not cover the full box [0..{box}]^2")
        return cls.from_arrays(g1, g2)

    def _check_box(self, k1, k2):
        if np.any(k1 < 0) or np.any(k2 < 0) or np.any(k1 > self.box) or np.any(k2 > self.box):
            raise DomainError(f"occupancy outside the tabulated box [0..{self.box}]^2")

    def evaluate(self, k1, k2):
        g1, g2 = self.evaluate_vec(np.asarray(k1), np.asarray(k2))
        return float(g1), float(g2)

    def evaluate_vec(self, k1, k2):
        k1 = np.asarray(k1)
        k2 = np.asarray(k2)
        self._check_box(k1, k2)
        return self.g1[k1, k2], self.g2[k1, k2]

    def _cumulants(self):
        """Cumulative log tables along the all-e1-first path."""
        cached = self._cum_cache.get("cums")
        if cached is None:
            with np.errstate(divide="ignore"):
                l1 = np.where(self.g1 > 0, np.log(np.where(self.g1 > 0, self.g1, 1.0)), -np.inf)
                l2 = np.where(self.g2 > 0, np.log(np.where(self.g2 > 0, self.g2, 1.0)), -np.inf)
            c1 = np.concatenate([[0.0], np.cumsum(l1[1:, 0])])
            c2 = np.concatenate(
                [np.zeros((self.box + 1, 1)), np.cumsum(l2[:, 1:], axis=1)], axis=1
            )
            cached = (c1, c2)
            self._cum_cache["cums"] = cached
        return cached

    def log_g_factorial_vec(self, k1, k2):
        k1 = np.asarray(k1)
        k2 = np.asarray(k2)
        self._check_box(k1, k2)
        c1, c2 = self._cumulants()
        out = c1[k1] + c2[k1, k2]
        if np.any(np.isneginf(np.atleast_1d(out))):
            raise DomainError("a path factor vanishes at positive occupancy")
        return out

    def tables(self, kmax1, kmax2):
        if kmax1 > self.box or kmax2 > self.box:
            raise DomainError(
                f"total particle counts ({kmax1},{kmax2}) exceed the tabulated box {self.box}"
            )
        return (
            np.ascontiguousarray(self.g1[: kmax1 + 1, : kmax2 + 1]),
            np.ascontiguousarray(self.g2[: kmax1 + 1, : kmax2 + 1]),
        )

    def axis_rate(self, i):
        vals = self.g1[:, 0] if i == 0 else self.g2[0, :]
        box = self.box

        def func(k):
            k = np.asarray(k)
            if np.any(k > box):
                raise DomainError("occupancy outside the tabulated box")
            return vals[k]

        return OneSpeciesRate.custom(func, gstar=self.gstar, bounded=True)


def species_blind_rate(base):
    """Colour a one-species rate into the two-species species-blind rate."""
    return SpeciesBlindRate(base=base, gstar=base.gstar, bounded=base.bounded)


def builtin_rate(name, b=4.0):
    """Built-in species-blind families: 'linear', 'constant', 'evans'."""
    if name == "linear":
        return species_blind_rate(OneSpeciesRate.linear())
    if name == "constant":
        return species_blind_rate(OneSpeciesRate.constant())
    if name == "evans":
        return species_blind_rate(OneSpeciesRate.evans(b))
    raise ValueError(f"unknown rate family {name!r}")


@dataclass(frozen=True)
class CompatibilityReport:
    holds: bool
    worst_violation: float
    worst_k: tuple


def check_compatibility(rate, box_extent):
    """Exhaustively check g1(k)g2(k-e1) == g1(k-e2)g2(k) on {1..box_extent}^2.

    worst_violation is the maximum absolute residual; `holds` applies the
    relative tolerance COMPAT_REL_TOL per point.
    """
    if box_extent < 2:
        raise ValueError("box_extent must be >= 2")
    k1, k2 = np.meshgrid(
        np.arange(1, box_extent + 1), np.arange(1, box_extent + 1), indexing="ij"
    )
    g1_k, g2_k = rate.evaluate_vec(k1, k2)
    _, g2_km_e1 = rate.evaluate_vec(k1 - 1, k2)
    g1_km_e2, _ = rate.evaluate_vec(k1, k2 - 1)
    lhs = g1_k * g2_km_e1
    rhs = g1_km_e2 * g2_k
    resid = np.abs(lhs - rhs)
    scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    holds = bool(np.all(resid <= COMPAT_REL_TOL * scale))
    idx = np.unravel_index(np.argmax(resid), resid.shape)
    return CompatibilityReport(
        holds=holds,
        worst_violation=float(resid[idx]),
        worst_k=(int(k1[idx]), int(k2[idx])),
    )


def g_factorial(rate, k1, k2):
    """log g!(k), the factorial of g along any increasing path to (k1, k2)."""
    if k1 < 0 or k2 < 0:
        raise DomainError("negative occupancy")
    out = rate.log_g_factorial_vec(np.asarray(k1), np.asarray(k2))
    out = float(out)
    if not np.isfinite(out):
        raise DomainError("a path factor vanishes at positive occupancy")
    return out


def path_independence_probe(rate, k1, k2):
    """Max relative discrepancy of log g! over the two axis-aligned paths."""
    if k1 < 0 or k2 < 0:
        raise DomainError("negative occupancy")
    i = np.arange(1, k1 + 1)
    j = np.arange(1, k2 + 1)

    def _logsum(gvals):
        if gvals.size == 0:
            return 0.0
        if np.any(gvals <= 0):
            raise DomainError("a path factor vanishes at positive occupancy")
        return float(np.sum(np.log(gvals)))

    # all e1 steps first, then e2
    a = _logsum(rate.evaluate_vec(i, np.zeros_like(i))[0]) + _logsum(
        rate.evaluate_vec(np.full_like(j, k1), j)[1]
    )
    # all e2 steps first, then e1
    b = _logsum(rate.evaluate_vec(np.zeros_like(j), j)[1]) + _logsum(
        rate.evaluate_vec(i, np.full_like(i, k2))[0]
    )
    return abs(a - b) / max(1.0, abs(a), abs(b))
