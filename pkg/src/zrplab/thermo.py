"""Grand-canonical thermodynamics of two-species zero range processes.

Everything is built on the partition series

    Z(phi) = sum_k phi1^k1 phi2^k2 / g!(k)

summed shell-by-shell in |k|_1 with an explicit truncation-error report. The
density map R, its inverse Phi (Newton in log-fugacity coordinates with the
covariance Jacobian), the entropy-maximising extension Phi_bar, the
thermodynamic entropy S, the log-MGF and its Cramer conjugate, the
quasi-potential, directional critical fugacities, the recession function of S
and the condensation phase diagram all live here.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from .errors import CriticalDensityError, DivergenceError, DomainError
from .rates import OneSpeciesRate, SpeciesBlindRate, TabulatedRate

DEFAULT_REL_TOL = 1e-10
DEFAULT_SHELL_CAP = 100_000
_CONSECUTIVE = 3
_DIV_RUN = 40


@dataclass(frozen=True)
class GrandCanonicalPoint:
    """One grand-canonical equilibrium: fugacity with cached observables."""

    fugacity: tuple
    logZ: float
    rho: np.ndarray
    covariance: np.ndarray
    truncation_k: int
    truncation_error_bound: float
    converged: bool


@dataclass(frozen=True)
class DirectionalEstimate:
    """Extrapolated directional limit (chemical-potential scale) with its trace."""

    value: float
    trace_k: np.ndarray
    trace_values: np.ndarray
    converged: bool
    unbounded: bool

    @property
    def fugacity(self):
        return math.exp(self.value) if np.isfinite(self.value) else np.inf


@dataclass
class PhaseDiagram:
    """Sampled condensation phase diagram on the l1 direction sphere."""

    directions: np.ndarray  # (n, 2), |y|_1 = 1
    mu_c: np.ndarray  # (n,) directional critical chemical potential
    phi_c: np.ndarray  # (n, 2) boundary fugacity points (envelope)
    rho_c: np.ndarray  # (n, 2) critical density curve, +inf where divergent
    condensing: bool

    def to_csv(self, path):
        header = "y1,y2,phi_c_1,phi_c_2,rho_c_1,rho_c_2"
        data = np.column_stack([self.directions, self.phi_c, self.rho_c])
        np.savetxt(path, data, delimiter=",", header=header, comments="")


# ---------------------------------------------------------------------------
# one-species machinery (axis reductions, species-blind closed forms, oracles)
# ---------------------------------------------------------------------------


class OneSpeciesThermo:
    """Partition series and critical point of a one-species jump rate."""

    def __init__(self, base: OneSpeciesRate, k_cap=DEFAULT_SHELL_CAP):
        self.base = base
        self.k_cap = int(k_cap)
        self._neg_log_fact = None
        self._crit = None
        self._interp = None

    def _weights(self, kmax):
        if self._neg_log_fact is None or self._neg_log_fact.size <= kmax:
            n = min(max(kmax + 1, 4096), self.k_cap + 1)
            self._neg_log_fact = -self.base.log_factorial(np.arange(n))
        return self._neg_log_fact

    def partition(self, phi, rel_tol=DEFAULT_REL_TOL):
        """(logZ, rho, var, k_stop, err_bound, converged) at scalar fugacity."""
        phi = float(phi)
        if phi < 0:
            raise DomainError("fugacity must be nonnegative")
        if phi == 0.0:
            return 0.0, 0.0, 0.0, 0, 0.0, True
        lphi = math.log(phi)
        chunk = 2048
        off = 0.0  # log-offset; first term is k=0 with log-term 0
        s0 = s1 = s2 = 0.0
        conv = div = 0
        prev_max = -np.inf
        k_stop = self.k_cap
        converged = False
        last_ratio = np.inf
        k0 = 0
        while k0 <= self.k_cap:
            k = np.arange(k0, min(k0 + chunk, self.k_cap + 1))
            lt = k * lphi + self._weights(k[-1])[k]
            mx = float(lt.max())
            if mx > off:
                scale = math.exp(off - mx)
                s0 *= scale
                s1 *= scale
                s2 *= scale
                off = mx
            w = np.exp(lt - off)
            s0 += float(w.sum())
            s1 += float((k * w).sum())
            s2 += float((k * k * w).sum())
            # chunk-level convergence/divergence bookkeeping
            rel = float(w.sum()) / s0
            if mx >= prev_max - 1e-15:
                div += 1
            else:
                div = 0
            if div >= 3 and k0 > 64:
                raise DivergenceError((phi, 0.0), f"one-species series diverges at phi={phi}")
            if rel < rel_tol and (k * w).sum() / max(s1, 1e-300) < rel_tol:
                conv += 1
            else:
                conv = 0
            last_ratio = math.exp(float(lt[-1]) - float(lt[0])) ** (1.0 / max(len(k) - 1, 1))
            if conv >= _CONSECUTIVE:
                k_stop = int(k[-1])
                converged = True
                break
            prev_max = mx
            k0 += chunk
        logZ = off + math.log(s0)
        rho = s1 / s0
        var = s2 / s0 - rho * rho
        if converged and last_ratio < 1.0:
            err = (math.exp(float(lt[-1]) - off) / s0) * last_ratio / (1.0 - last_ratio)
        else:
            err = np.inf
        return logZ, rho, var, k_stop, err, converged

    def critical(self):
        """(mu_c, phi_c) by Richardson extrapolation of log ghat!(k)/k."""
        if self._crit is not None:
            return self._crit
        ks = np.array([self.k_cap // 16, self.k_cap // 8, self.k_cap // 4,
                       self.k_cap // 2, self.k_cap], dtype=np.int64)
        try:
            v = self.base.log_factorial(ks) / ks
        except DomainError:
            # rate undefined at large k (finite tables): no tail, no boundary
            self._crit = (np.inf, np.inf)
            return self._crit
        diffs = np.diff(v)
        if np.all(diffs > 0) and diffs[-1] > 0.05:
            self._crit = (np.inf, np.inf)
            return self._crit
        basis = np.column_stack([np.ones_like(v), np.log(ks) / ks, 1.0 / ks])
        coef, *_ = np.linalg.lstsq(basis, v, rcond=None)
        mu_c = float(coef[0])
        self._crit = (mu_c, math.exp(mu_c))
        return self._crit

    @property
    def phi_c(self):
        return self.critical()[1]

    def rho_c(self):
        """Critical density by series summation at the critical fugacity."""
        mu_c, phi_c = self.critical()
        if not np.isfinite(phi_c):
            return np.inf
        k = np.arange(1, self.k_cap + 1)
        lt = k * mu_c + self._weights(self.k_cap)[k]
        lt_num = lt + np.log(k)
        tail = lt_num[-256:]
        if np.mean(tail[128:]) >= np.mean(tail[:128]):
            return np.inf
        mx = lt.max()
        z = math.exp(-mx) + np.exp(lt - mx).sum()  # include k=0 term
        num = np.exp(lt_num - mx).sum()
        return float(num / z)

    def R(self, phi, rel_tol=DEFAULT_REL_TOL):
        return self.partition(phi, rel_tol)[1]

    def Phi(self, rho, rel_tol=DEFAULT_REL_TOL):
        """Inverse of the density map R on [0, rho_c)."""
        rho = float(rho)
        if rho < 0:
            raise DomainError("density must be nonnegative")
        if rho == 0.0:
            return 0.0
        phi_c = self.phi_c
        if np.isfinite(phi_c):
            rc = self.rho_c()
            if rho >= rc:
                raise CriticalDensityError(f"density {rho} >= critical density {rc}")
            hi = phi_c * (1.0 - 1e-13)
            if self.R(hi) < rho:  # truncation roundoff at the boundary
                hi = phi_c
        else:
            hi = 1.0
            while self.R(hi) < rho:
                hi *= 2.0
                if hi > 1e12:
                    raise CriticalDensityError("density not reachable")
        return brentq(lambda p: self.R(p) - rho, 0.0, hi, xtol=1e-14, rtol=1e-14)

    def Phi_bar(self, rho):
        rc = self.rho_c()
        return self.Phi(min(float(rho), rc * (1.0 - 1e-12))) if np.isfinite(rc) else self.Phi(rho)

    def phi_interp(self, n=2048, rho_max=None):
        """Monotone (rho, phi) table for fast vectorised Phi evaluation."""
        if self._interp is not None:
            return self._interp
        phi_c = self.phi_c
        if np.isfinite(phi_c):
            mu_hi = math.log(phi_c) - 1e-10
        else:
            rho_max = 8.0 if rho_max is None else rho_max
            mu_hi = math.log(self.Phi(rho_max))
        mus = np.linspace(mu_hi - 30.0, mu_hi, n)
        phis = np.exp(mus)
        rhos = np.array([self.R(p, rel_tol=1e-11) for p in phis])
        keep = np.concatenate([[True], np.diff(rhos) > 0])
        self._interp = (np.concatenate([[0.0], rhos[keep]]),
                        np.concatenate([[0.0], phis[keep]]))
        return self._interp


# ---------------------------------------------------------------------------
# two-species shell engine
# ---------------------------------------------------------------------------


class _ShellWeights:
    """Per-shell diagonal of -log g!(k1, m - k1), family-aware."""

    def __init__(self, rate, cap):
        self.rate = rate
        self.cap = cap
        if isinstance(rate, SpeciesBlindRate):
            n = cap + 2
            self._glt = gammaln(np.arange(n, dtype=np.float64) + 1.0)
            self._lhf = rate.base.log_factorial(np.arange(cap + 1)) - self._glt[: cap + 1]
            self.max_shell = cap
        elif isinstance(rate, TabulatedRate):
            self.max_shell = min(cap, 2 * rate.box)
        else:
            self.max_shell = cap

    def diag(self, m):
        """(k1 array, -log g! array) for the shell |k|_1 = m."""
        rate = self.rate
        if isinstance(rate, SpeciesBlindRate):
            k1 = np.arange(m + 1)
            return k1, -(self._glt[k1] + self._glt[m - k1] + self._lhf[m])
        if isinstance(rate, TabulatedRate):
            lo = max(0, m - rate.box)
            hi = min(m, rate.box)
            if lo > hi:
                return np.arange(0), np.arange(0, dtype=np.float64)
            k1 = np.arange(lo, hi + 1)
            return k1, -rate.log_g_factorial_vec(k1, m - k1)
        k1 = np.arange(m + 1)
        return k1, -rate.log_g_factorial_vec(k1, m - k1)


@lru_cache(maxsize=None)
def _thermo(rate):
    return Thermo(rate)


class Thermo:
    """Cached thermodynamic calculator bound to one immutable jump rate."""

    def __init__(self, rate, shell_cap=DEFAULT_SHELL_CAP):
        self.rate = rate
        self.shell_cap = int(shell_cap)
        self._shells = _ShellWeights(rate, self.shell_cap)
        self._one = {}
        self._z_cache = {}

    # -- structure helpers -------------------------------------------------

    def axis(self, i):
        one = self._one.get(i)
        if one is None:
            one = OneSpeciesThermo(self.rate.axis_rate(i), k_cap=self.shell_cap)
            self._one[i] = one
        return one

    @property
    def blind(self):
        return isinstance(self.rate, SpeciesBlindRate)

    @property
    def one_species(self):
        if not self.blind:
            raise DomainError("one-species reduction only exists for species-blind rates")
        return self.axis(0)

    def rho_c_hat(self):
        """Critical total density of the species-blind reduction (inf if none)."""
        return self.one_species.rho_c() if self.blind else np.inf

    def is_subcritical(self, rho):
        rho = np.asarray(rho, dtype=np.float64)
        if self.blind:
            return float(rho.sum()) < self.rho_c_hat()
        try:
            self.mean_jump_rate(rho)
            return True
        except CriticalDensityError:
            return False

    # -- partition function -------------------------------------------------

    def partition_function(self, phi, rel_tol=DEFAULT_REL_TOL):
        phi = np.asarray(phi, dtype=np.float64)
        if phi.shape != (2,) or np.any(phi < 0) or not np.all(np.isfinite(phi)):
            raise DomainError("fugacity must be a nonnegative pair")
        key = (float(phi[0]), float(phi[1]), rel_tol)
        hit = self._z_cache.get(key)
        if hit is not None:
            return hit
        point = self._partition_impl(phi, rel_tol)
        if len(self._z_cache) > 4096:
            self._z_cache.clear()
        self._z_cache[key] = point
        return point

    def _partition_impl(self, phi, rel_tol):
        p1, p2 = float(phi[0]), float(phi[1])
        if p1 == 0.0 and p2 == 0.0:
            return GrandCanonicalPoint((0.0, 0.0), 0.0, np.zeros(2), np.zeros((2, 2)), 0, 0.0, True)
        if p1 == 0.0 or p2 == 0.0:
            i = 0 if p2 == 0.0 else 1
            one = self.axis(i)
            logZ, rho, var, kstop, err, conv = one.partition(phi[i], rel_tol)
            rho_vec = np.zeros(2)
            rho_vec[i] = rho
            cov = np.zeros((2, 2))
            cov[i, i] = var
            return GrandCanonicalPoint((p1, p2), logZ, rho_vec, cov, kstop, err, conv)

        lp1, lp2 = math.log(p1), math.log(p2)
        off = 0.0
        s0 = 0.0
        s1 = np.zeros(2)
        s2 = np.zeros(3)  # E k1^2, E k1 k2, E k2^2 accumulators (unnormalised)
        conv = 0
        div = 0
        prev_log_shell = -np.inf
        log_shell = -np.inf
        prev_prev = -np.inf
        m_stop = self._shells.max_shell
        converged = False
        for m in range(self._shells.max_shell + 1):
            k1, lw = self._shells.diag(m)
            if k1.size == 0:
                if m >= self._shells.max_shell:
                    converged = True
                    m_stop = m
                    break
                continue
            k2 = m - k1
            lt = k1 * lp1 + k2 * lp2 + lw
            mx = float(lt.max())
            if mx > off:
                scale = math.exp(off - mx)
                s0 *= scale
                s1 *= scale
                s2 *= scale
                off = mx
            w = np.exp(lt - off)
            sh0 = float(w.sum())
            s0 += sh0
            sh1a = float((k1 * w).sum())
            sh1b = float((k2 * w).sum())
            s1[0] += sh1a
            s1[1] += sh1b
            s2[0] += float((k1 * k1 * w).sum())
            s2[1] += float((k1 * k2 * w).sum())
            s2[2] += float((k2 * k2 * w).sum())
            log_shell = math.log(sh0) + off if sh0 > 0 else -np.inf
            if log_shell >= prev_log_shell - 1e-15 and m >= 2:
                div += 1
            else:
                div = 0
            if div >= _DIV_RUN and m >= 50 and self._shells.max_shell >= self.shell_cap:
                raise DivergenceError(phi)
            r0 = sh0 / s0
            r1 = (sh1a + sh1b) / max(s1[0] + s1[1], 1e-300)
            if r0 < rel_tol and r1 < rel_tol and m >= 3:
                conv += 1
            else:
                conv = 0
            prev_prev = prev_log_shell
            prev_log_shell = log_shell
            if conv >= _CONSECUTIVE:
                m_stop = m
                converged = True
                break
        if self._shells.max_shell < self.shell_cap:
            converged = True  # finite tabulated support: the sum is exact
            err = 0.0
        elif converged and np.isfinite(log_shell) and np.isfinite(prev_prev):
            r = math.exp(log_shell - prev_prev) ** 0.5
            err = (math.exp(log_shell - off) / s0) * (r / (1.0 - r)) if r < 1.0 else np.inf
        else:
            err = np.inf
        logZ = off + math.log(s0)
        rho = s1 / s0
        cov = np.array(
            [
                [s2[0] / s0 - rho[0] ** 2, s2[1] / s0 - rho[0] * rho[1]],
                [s2[1] / s0 - rho[0] * rho[1], s2[2] / s0 - rho[1] ** 2],
            ]
        )
        return GrandCanonicalPoint((p1, p2), logZ, rho, cov, m_stop, float(err), converged)

    def log_partition(self, phi, rel_tol=DEFAULT_REL_TOL):
        return self.partition_function(phi, rel_tol).logZ

    # -- density inversion ---------------------------------------------------

    def mean_jump_rate(self, rho, tol=1e-10):
        """Phi(rho): Newton in log-fugacity with the covariance Jacobian."""
        rho = np.asarray(rho, dtype=np.float64)
        if np.any(rho < 0):
            raise DomainError("density must be nonnegative")
        if rho[0] == 0.0 and rho[1] == 0.0:
            return np.zeros(2)
        if rho[0] == 0.0 or rho[1] == 0.0:
            i = 0 if rho[1] == 0.0 else 1
            out = np.zeros(2)
            out[i] = self.axis(i).Phi(rho[i])
            return out
        if self.blind:
            rc = self.rho_c_hat()
            if np.isfinite(rc) and rho.sum() >= rc:
                raise CriticalDensityError(
                    f"density {tuple(rho)} at or beyond the critical region (|rho|_1 >= {rc})"
                )
            sigma = float(rho.sum())
            phi_hat = self.one_species.Phi(sigma)
            phi = rho * (phi_hat / sigma)
        else:
            phi = np.minimum(rho, 0.5)
        mu = np.log(phi)
        point = self.partition_function(tuple(np.exp(mu)))
        resid = point.rho - rho
        best = float(np.abs(resid).max())
        for _ in range(50):
            if best <= tol * (1.0 + float(np.abs(rho).max())):
                return np.exp(mu)
            try:
                step = np.linalg.solve(point.covariance, rho - point.rho)
            except np.linalg.LinAlgError:
                raise CriticalDensityError("covariance Jacobian singular; density at/beyond criticality")
            lam = 1.0
            for _ in range(30):
                trial_mu = mu + lam * step
                try:
                    trial = self.partition_function(tuple(np.exp(trial_mu)))
                except DivergenceError:
                    lam *= 0.5
                    continue
                trial_res = float(np.abs(trial.rho - rho).max())
                if trial_res < best:
                    mu, point, best = trial_mu, trial, trial_res
                    break
                lam *= 0.5
            else:
                raise CriticalDensityError(
                    f"Newton stalled inverting the density map at rho={tuple(rho)}"
                )
        raise CriticalDensityError(f"no convergence inverting the density map at rho={tuple(rho)}")

    # -- extension, entropy, projection --------------------------------------

    def extended_mean_jump_rate(self, rho):
        """Phi_bar(rho): the entropy-maximising fugacity, defined for all rho >= 0."""
        rho = np.asarray(rho, dtype=np.float64)
        if np.any(rho < 0):
            raise DomainError("density must be nonnegative")
        if rho[0] == 0.0 and rho[1] == 0.0:
            return np.zeros(2)
        if rho[0] == 0.0 or rho[1] == 0.0:
            i = 0 if rho[1] == 0.0 else 1
            out = np.zeros(2)
            out[i] = self.axis(i).Phi_bar(rho[i])
            return out
        try:
            return self.mean_jump_rate(rho)
        except CriticalDensityError:
            pass
        if not self.condensing():
            raise CriticalDensityError(
                "density outside the reachable region of a non-condensing rate"
            )
        return self._boundary_maximiser(rho)

    def _boundary_phi(self, s):
        """Envelope point of the fugacity-domain boundary at l1 direction (s, 1-s)."""
        mu_c, dmu = self._boundary_mu(s)
        mu1 = mu_c + (1.0 - s) * dmu
        mu2 = mu_c - s * dmu
        return np.array([math.exp(mu1), math.exp(mu2)])

    def _boundary_mu(self, s):
        """(m(s), m'(s)) of the directional critical chemical potential."""
        if self.blind:
            mu_hat = self.one_species.critical()[0]
            m = s * math.log(s) + (1.0 - s) * math.log(1.0 - s) + mu_hat
            dm = math.log(s) - math.log(1.0 - s)
            return m, dm
        h = 1e-5
        lo, hi = max(1e-8, s - h), min(1.0 - 1e-8, s + h)
        f = lambda t: self.directional_critical_fugacity(np.array([t, 1.0 - t])).value
        vlo, vhi, v = f(lo), f(hi), f(s)
        return v, (vhi - vlo) / (hi - lo)

    def _boundary_maximiser(self, rho):
        obj = lambda s: -(
            rho[0] * math.log(self._boundary_phi(s)[0])
            + rho[1] * math.log(self._boundary_phi(s)[1])
            - self.log_partition(tuple(self._boundary_phi(s)), rel_tol=1e-11)
        )
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = 1e-9, 1.0 - 1e-9
        c, d = b - invphi * (b - a), a + invphi * (b - a)
        fc, fd = obj(c), obj(d)
        while b - a > 1e-10:
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = obj(c)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = obj(d)
        return self._boundary_phi(0.5 * (a + b))

    def thermodynamic_entropy(self, rho):
        """S(rho) = <rho, log Phi_bar(rho)> - log Z(Phi_bar(rho))."""
        rho = np.asarray(rho, dtype=np.float64)
        phi = self.extended_mean_jump_rate(rho)
        val = -self.log_partition(tuple(phi))
        for i in range(2):
            if rho[i] > 0:
                val += rho[i] * math.log(phi[i])
        return float(val)

    def condensed_density(self, rho):
        """R_c(rho) = R(Phi_bar(rho)), the projection onto reachable densities."""
        phi = self.extended_mean_jump_rate(np.asarray(rho, dtype=np.float64))
        return self.partition_function(tuple(phi), rel_tol=1e-11).rho

    # -- large deviations -----------------------------------------------------

    def log_mgf(self, rho, lam):
        """Lambda_rho(lam) of the one-site occupation pair."""
        rho = np.asarray(rho, dtype=np.float64)
        lam = np.asarray(lam, dtype=np.float64)
        phi = self.mean_jump_rate(rho)
        shifted = np.exp(lam) * phi
        if self.blind:
            phic = self.one_species.phi_c
            if np.isfinite(phic) and shifted.sum() > phic * (1.0 + 1e-12):
                raise DivergenceError(tuple(shifted))
        a = self.log_partition(tuple(shifted))
        b = self.log_partition(tuple(phi))
        return float(a - b)

    def rate_function(self, rho, lam):
        """Cramer rate function of i.i.d. occupation pairs at density rho."""
        rho = np.asarray(rho, dtype=np.float64)
        lam = np.asarray(lam, dtype=np.float64)
        if np.any(lam < 0):
            raise DomainError("the rate function argument must be nonnegative")
        phi = self.mean_jump_rate(rho)
        if np.any(phi <= 0):
            raise DomainError("rate function needs a strictly positive base density")
        val = self.thermodynamic_entropy(lam) + self.log_partition(tuple(phi))
        for i in range(2):
            if lam[i] > 0:
                val -= lam[i] * math.log(phi[i])
        return float(val)

    def jacobian_phi(self, rho, step=None):
        """D Phi(rho) by central finite differences of the Newton inverse."""
        rho = np.asarray(rho, dtype=np.float64)
        h = step if step is not None else 1e-5 * (1.0 + float(np.abs(rho).sum()))
        jac = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            jac[:, j] = (self.mean_jump_rate(rho + e) - self.mean_jump_rate(rho - e)) / (2 * h)
        return jac

    def quasi_potential(self, rho, lam):
        """Psi(rho, lam) = Phi_bar(lam) - Phi(rho) - DPhi(rho)(lam - rho)."""
        rho = np.asarray(rho, dtype=np.float64)
        lam = np.asarray(lam, dtype=np.float64)
        if np.array_equal(rho, lam):
            return np.zeros(2)
        jac = self.jacobian_phi(rho)
        return self.extended_mean_jump_rate(lam) - self.mean_jump_rate(rho) - jac @ (lam - rho)

    def ratio_diagnostic(self, rho_grid, lam_grid):
        """sup |Psi(rho, lam)|_2 / Lambda*_rho(lam) over the grids, with argmax."""
        best = 0.0
        arg = (None, None)
        for rho in rho_grid:
            rho = np.asarray(rho, dtype=np.float64)
            jac = self.jacobian_phi(rho)
            phi = self.mean_jump_rate(rho)
            logz = self.log_partition(tuple(phi))
            for lam in lam_grid:
                lam = np.asarray(lam, dtype=np.float64)
                if np.allclose(lam, rho, atol=1e-12):
                    continue
                psi = self.extended_mean_jump_rate(lam) - phi - jac @ (lam - rho)
                denom = self.thermodynamic_entropy(lam) + logz
                for i in range(2):
                    if lam[i] > 0:
                        denom -= lam[i] * math.log(phi[i])
                if denom <= 0:
                    continue
                val = float(np.linalg.norm(psi) / denom)
                if val > best:
                    best = val
                    arg = (tuple(rho), tuple(lam))
        return best, arg

    # -- tails, recession function, phase diagram -----------------------------

    def directional_critical_fugacity(self, yhat, k_max=DEFAULT_SHELL_CAP):
        """phi_c along an l1 direction from g!(k)^(1/|k|_1) on the nearest ray."""
        yhat = np.asarray(yhat, dtype=np.float64)
        if abs(yhat.sum() - 1.0) > 1e-9 or np.any(yhat < 0):
            raise DomainError("direction must lie on the nonnegative l1 sphere")
        ms = np.unique(
            np.maximum(2, (k_max / 2 ** np.arange(4, -1, -1.0)).astype(np.int64))
        )
        k1 = np.rint(yhat[0] * ms).astype(np.int64)
        k2 = ms - k1
        try:
            vals = self.rate.log_g_factorial_vec(k1, k2) / ms
        except DomainError:
            return DirectionalEstimate(np.inf, ms, np.full(ms.shape, np.inf), True, True)
        diffs = np.diff(vals)
        if np.all(diffs > 0) and diffs[-1] > 0.05:
            return DirectionalEstimate(np.inf, ms, vals, True, True)
        basis = np.column_stack([np.ones_like(vals), np.log(ms) / ms, 1.0 / ms])
        coef, res, *_ = np.linalg.lstsq(basis, vals, rcond=None)
        mu = float(coef[0])
        scatter = float(np.abs(basis @ coef - vals).max())
        converged = scatter < 1e-6 + 0.05 * abs(mu)
        return DirectionalEstimate(mu, ms, vals, converged, False)

    def recession_entropy(self, yhat, t_max=512.0):
        """S_inf(yhat) = lim S(t yhat)/t for an l2-normalised direction."""
        yhat = np.asarray(yhat, dtype=np.float64)
        if abs(np.linalg.norm(yhat) - 1.0) > 1e-9 or np.any(yhat < 0):
            raise DomainError("direction must lie on the nonnegative l2 sphere")
        ts = t_max / 2 ** np.arange(3, -1.0, -1.0)
        try:
            vals = np.array([self.thermodynamic_entropy(t * yhat) / t for t in ts])
        except CriticalDensityError:
            return DirectionalEstimate(np.inf, ts, np.full(ts.shape, np.inf), True, True)
        diffs = np.diff(vals)
        if np.all(diffs > 0) and diffs[-1] > 0.45 * diffs[0]:
            # increments not collapsing: S(t y)/t grows without bound
            return DirectionalEstimate(np.inf, ts, vals, True, True)
        basis = np.column_stack([np.ones_like(vals), 1.0 / ts])
        coef, *_ = np.linalg.lstsq(basis, vals, rcond=None)
        scatter = float(np.abs(basis @ coef - vals).max())
        return DirectionalEstimate(float(coef[0]), ts, vals, scatter < 1e-6 + 1e-3 * abs(coef[0]), False)

    def condensing(self):
        if self.blind:
            return bool(np.isfinite(self.rho_c_hat()))
        if isinstance(self.rate, TabulatedRate):
            return False
        est = self.directional_critical_fugacity(np.array([0.5, 0.5]))
        if est.unbounded:
            return False
        return bool(np.isfinite(self._rho_on_boundary(0.5)).all())

    def _rho_on_boundary(self, s, rel_tol=1e-9):
        phi = self._boundary_phi(s)
        try:
            return self.partition_function(tuple(phi), rel_tol=rel_tol).rho
        except DivergenceError:
            return np.array([np.inf, np.inf])

    def phase_diagram(self, resolution=64):
        """Sample the fugacity-domain boundary and the critical density curve."""
        if resolution < 8:
            raise ValueError("resolution must be >= 8 directions")
        ss = np.linspace(0.0, 1.0, resolution)
        dirs = np.column_stack([ss, 1.0 - ss])
        mu_c = np.empty(resolution)
        phi_c = np.full((resolution, 2), np.inf)
        rho_c = np.full((resolution, 2), np.inf)
        bounded_any = False
        for j, s in enumerate(ss):
            est = self.directional_critical_fugacity(dirs[j])
            mu_c[j] = est.value
            if est.unbounded or not np.isfinite(est.value):
                continue
            bounded_any = True
            if s == 0.0:
                phi_c[j] = (0.0, self.axis(1).phi_c)
                rc = self.axis(1).rho_c()
                rho_c[j] = (0.0, rc)
            elif s == 1.0:
                phi_c[j] = (self.axis(0).phi_c, 0.0)
                rc = self.axis(0).rho_c()
                rho_c[j] = (rc, 0.0)
            else:
                phi_c[j] = self._boundary_phi(s)
                rho_c[j] = self._rho_on_boundary(s)
        condensing = bool(bounded_any and np.isfinite(rho_c).any())
        return PhaseDiagram(
            directions=dirs, mu_c=mu_c, phi_c=phi_c, rho_c=rho_c, condensing=condensing
        )


# ---------------------------------------------------------------------------
# functional API
# ---------------------------------------------------------------------------


def thermo_for(rate):
    """The cached Thermo calculator for an immutable rate."""
    return _thermo(rate)


def partition_function(rate, phi, rel_tol=DEFAULT_REL_TOL):
    return thermo_for(rate).partition_function(tuple(np.asarray(phi, dtype=np.float64)), rel_tol)


def species_blind_Z_identity_check(rate, phi):
    """|Z(phi) - Zhat(phi1 + phi2)| / Zhat via two independent series."""
    t = thermo_for(rate)
    if not t.blind:
        raise DomainError("identity check applies to species-blind rates")
    z2 = math.exp(t.log_partition(tuple(np.asarray(phi, dtype=np.float64))))
    z1 = math.exp(t.one_species.partition(float(np.sum(phi)))[0])
    return abs(z2 - z1) / z1


def mean_jump_rate(rate, rho, tol=1e-10):
    return thermo_for(rate).mean_jump_rate(rho, tol)


def thermodynamic_entropy(rate, rho):
    return thermo_for(rate).thermodynamic_entropy(rho)


def extended_mean_jump_rate(rate, rho):
    return thermo_for(rate).extended_mean_jump_rate(rho)


def condensed_density(rate, rho):
    return thermo_for(rate).condensed_density(rho)


def log_mgf(rate, rho, lam):
    return thermo_for(rate).log_mgf(rho, lam)


def rate_function(rate, rho, lam):
    return thermo_for(rate).rate_function(rho, lam)


def quasi_potential(rate, rho, lam):
    return thermo_for(rate).quasi_potential(rho, lam)


def ratio_diagnostic(rate, rho_grid, lam_grid):
    return thermo_for(rate).ratio_diagnostic(rho_grid, lam_grid)


def directional_critical_fugacity(rate, yhat, k_max=DEFAULT_SHELL_CAP):
    return thermo_for(rate).directional_critical_fugacity(yhat, k_max)


def recession_entropy(rate, yhat, t_max=512.0):
    return thermo_for(rate).recession_entropy(yhat, t_max)


def phase_diagram(rate, resolution=64):
    return thermo_for(rate).phase_diagram(resolution)
