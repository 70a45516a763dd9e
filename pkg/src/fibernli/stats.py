"""Symbol-energy correlations and covariances.

Analytical results hold for ideal constant-composition amplitude blocks
(uniform over all arrangements of a fixed multiset) mapped onto 1, 2 or 4 real
dimensions. When the alphabet is integer valued the scalar functions work in
exact rational arithmetic, so small cases can be compared with exhaustive
enumeration without rounding noise.

Notation: ``E2, E4, E6`` are amplitude moments E[u^k]; ``m2, m4, m6`` are symbol
moments E|a|^k per polarization; ``Ms = N / H`` is the correlation length.
"""
from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .errors import DataError, ParameterError, UsageError

MAPPINGS = (1, 2, 4)
KINDS = ("S1", "S2", "S3", "X1", "X2", "X3")


@dataclass(frozen=True)
class AmplitudeComposition:
    """Multiset of positive amplitude levels used by every block."""

    alphabet: tuple
    counts: tuple

    def __post_init__(self):
        alphabet = tuple(self.alphabet)
        counts = tuple(int(c) for c in self.counts)
        if len(alphabet) != len(counts) or not alphabet:
            raise ParameterError("alphabet and counts must be non-empty and of equal length")
        if any(c < 0 for c in counts):
            raise ParameterError("counts must be non-negative")
        if sum(counts) < 1:
            raise ParameterError("composition is empty")
        if any(not a > 0 for a in alphabet):
            raise ParameterError("amplitude levels must be positive")
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "counts", counts)

    @property
    def blocklength(self):
        return sum(self.counts)

    @property
    def is_exact(self):
        """True when every level is an integer, so moments are rational."""
        return all(float(a).is_integer() for a in self.alphabet)

    def levels(self):
        if self.is_exact:
            return [Fraction(int(a)) for a in self.alphabet]
        return [float(a) for a in self.alphabet]

    def multiset(self):
        return np.repeat(np.asarray(self.alphabet, dtype=float), self.counts)


@dataclass(frozen=True)
class MomentSet:
    """Amplitude moments E[u^k] and per-polarization symbol moments E|a|^k.

    ``p_ch`` equals ``sym_moments[2]``. Values are exact fractions when the
    composition is integer valued and no power scaling was requested.
    ``amp_moments`` is None for moments measured from symbols.
    """

    amp_moments: dict | None
    sym_moments: dict | None = None
    p_ch: object = None

    def __post_init__(self):
        a = self.amp_moments
        if a is not None and a[2] ** 2 > a[4] * (1 + 1e-12):
            raise ParameterError("amplitude moments violate Cauchy-Schwarz")
        s = self.sym_moments
        if s is not None and s[2] ** 2 > s[4] * (1 + 1e-12):
            raise ParameterError("symbol moments violate Cauchy-Schwarz")


@lru_cache(maxsize=256)
def amplitude_moments(comp):
    """E[u^2], E[u^4], E[u^6] of the composition."""
    lv = comp.levels()
    N = comp.blocklength
    mom = {}
    for k in (2, 4, 6):
        tot = sum(c * u**k for u, c in zip(lv, comp.counts))
        mom[k] = tot / N if not comp.is_exact else Fraction(tot) / N
    return MomentSet(mom)


def _check_h(H):
    if H not in MAPPINGS:
        raise UsageError(f"mapping H must be one of {MAPPINGS}, got {H!r}")


@lru_cache(maxsize=256)
def rho_pair(comp):
    """(rho1, rho2): E[u_i^2 u_j^2] and E[u_i^2 u_j^4] for distinct positions."""
    N = comp.blocklength
    if N < 2:
        raise ParameterError("rho_pair needs N >= 2")
    m = amplitude_moments(comp).amp_moments
    rho1 = (N * m[2] ** 2 - m[4]) / (N - 1)
    rho2 = (N * m[2] * m[4] - m[6]) / (N - 1)
    return rho1, rho2


@lru_cache(maxsize=256)
def rho_triple(comp):
    """E[u_i^2 u_j^2 u_k^2] for three distinct positions."""
    N = comp.blocklength
    if N < 3:
        raise ParameterError("rho_triple needs N >= 3")
    m = amplitude_moments(comp).amp_moments
    return (N**2 * m[2] ** 3 - 3 * N * m[2] * m[4] + 2 * m[6]) / ((N - 1) * (N - 2))


def _rhos(comp):
    N = comp.blocklength
    rho1, rho2 = rho_pair(comp) if N >= 2 else (None, None)
    rho3 = rho_triple(comp) if N >= 3 else None
    return rho1, rho2, rho3


@lru_cache(maxsize=256)
def symbol_moments(comp, H, power=None):
    """Per-polarization symbol moments for H-D mapping.

    Without ``power`` the moments are in amplitude units (``E|a|^2 = 2E[u^2]``).
    With ``power`` the amplitudes are scaled so that ``E|a|^2 = power``.
    """
    _check_h(H)
    amp = amplitude_moments(comp).amp_moments
    E2, E4, E6 = amp[2], amp[4], amp[6]
    if H == 1:
        m4 = 2 * E4 + 2 * E2**2
        m6 = 2 * E6 + 6 * E4 * E2
    else:
        rho1, rho2 = rho_pair(comp)
        m4 = 2 * E4 + 2 * rho1
        m6 = 2 * E6 + 6 * rho2
    sym = {2: 2 * E2, 4: m4, 6: m6}
    if power is not None:
        if not power > 0:
            raise ParameterError("power must be positive")
        s = float(power) / float(sym[2])
        amp = {k: float(v) * s ** (k // 2) for k, v in amp.items()}
        sym = {k: float(v) * s ** (k // 2) for k, v in sym.items()}
    return MomentSet(amp, sym, sym[2])


@lru_cache(maxsize=256)
def intra_block_pair(comp, H):
    """(rhoS1, rhoX1, rhoS2, rhoX2) for two distinct slots of one block period."""
    _check_h(H)
    amp = amplitude_moments(comp).amp_moments
    E2, E4 = amp[2], amp[4]
    rho1, rho2, rho3 = _rhos(comp)
    if H == 1:
        return (
            2 * rho1 + 2 * E2**2,
            4 * E2**2,
            2 * rho2 + 2 * E2 * E4 + 4 * rho1 * E2,
            4 * E2 * E4 + 4 * E2**3,
        )
    if H == 2:
        return 4 * rho1, 4 * E2**2, 4 * rho2 + 4 * rho3, 4 * E2 * E4 + 4 * rho1 * E2
    return 4 * rho1, 4 * rho1, 4 * rho2 + 4 * rho3, 4 * rho2 + 4 * rho3


@lru_cache(maxsize=256)
def intra_block_triple(comp, H):
    """(rhoS3, rhoX3) for three distinct slots of one block period."""
    _check_h(H)
    E2 = amplitude_moments(comp).amp_moments[2]
    rho1, _, rho3 = _rhos(comp)
    if H == 1:
        return 2 * rho3 + 6 * rho1 * E2, 4 * rho1 * E2 + 4 * E2**3
    if H == 2:
        return 8 * rho3, 8 * rho1 * E2
    return 8 * rho3, 8 * rho3


def _blend(tau, Ms, independent, correlated):
    if tau < Ms:
        return (tau * independent + (Ms - tau) * correlated) / Ms
    return independent


def _corr_length(comp, H):
    _check_h(H)
    N = comp.blocklength
    if N % H:
        raise ParameterError(f"blocklength {N} is not a multiple of H={H}")
    return N // H


def time_avg_pair_correlations(comp, H, tau):
    """(RS1, RS2, RX1, RX2) averaged over one block period, for tau >= 1."""
    if int(tau) != tau or tau < 1:
        raise UsageError("tau must be an integer >= 1")
    Ms = _corr_length(comp, H)
    m = symbol_moments(comp, H).sym_moments
    rS1, rX1, rS2, rX2 = intra_block_pair(comp, H)
    return (
        _blend(tau, Ms, m[2] ** 2, rS1),
        _blend(tau, Ms, m[2] * m[4], rS2),
        _blend(tau, Ms, m[2] ** 2, rX1),
        _blend(tau, Ms, m[2] * m[4], rX2),
    )


def _triple_blend(tau, taup, Ms, m2, pair, triple):
    if taup < Ms:
        return (taup * m2 * pair + (Ms - taup) * triple) / Ms
    if tau < Ms and taup - tau >= Ms:
        return (tau * m2**3 + (Ms - tau) * m2 * pair) / Ms
    if tau < Ms:
        return ((taup - Ms) * m2**3 + (2 * Ms - taup) * m2 * pair) / Ms
    if taup - tau < Ms:
        return ((taup - tau) * m2**3 + (Ms - taup + tau) * m2 * pair) / Ms
    return m2**3


def time_avg_triple_correlations(comp, H, tau, tau_prime):
    """(RS3, RX3) for delays 0 < tau < tau_prime.

    RX3 is the (x, y, x) ordering. With independent polarizations (H = 1, 2)
    it factorizes as E|a|^2 * RS1(tau_prime).
    """
    if not 0 < tau < tau_prime:
        raise UsageError("triple correlations need 0 < tau < tau_prime")
    Ms = _corr_length(comp, H)
    m2 = symbol_moments(comp, H).sym_moments[2]
    rS1, rX1, _, _ = intra_block_pair(comp, H)
    rS3, rX3 = intra_block_triple(comp, H) if comp.blocklength >= 3 else (None, None)
    RS3 = _triple_blend(tau, tau_prime, Ms, m2, rS1, rS3)
    if H == 4:
        RX3 = _triple_blend(tau, tau_prime, Ms, m2, rX1, rX3)
    else:
        RX3 = m2 * _blend(tau_prime, Ms, m2**2, rS1)
    return RS3, RX3


def zero_delay_cross_correlations(comp, H, tau):
    """Same-slot cross-polarization correlations.

    Returns ``(RX1(0), RX2(0), RX3(0, tau))`` where ``RX3(0, tau)`` is
    E|a^x_w|^2 |a^y_w|^2 |a^x_{w+tau}|^2 averaged over the period, tau >= 1.
    For H = 4 the first two symbols share a block in every slot; the third
    joins them with probability (Ms - tau)/Ms.
    """
    if int(tau) != tau or tau < 1:
        raise UsageError("tau must be an integer >= 1")
    Ms = _corr_length(comp, H)
    m = symbol_moments(comp, H).sym_moments
    if H == 4:
        _, rX1, _, rX2 = intra_block_pair(comp, H)
        _, rX3 = intra_block_triple(comp, H) if comp.blocklength >= 3 else (None, None)
        return rX1, rX2, _blend(tau, Ms, m[2] * rX1, rX3)
    RS1 = _blend(tau, Ms, m[2] ** 2, intra_block_pair(comp, H)[0])
    return m[2] ** 2, m[2] * m[4], m[2] * RS1


@dataclass
class CorrelationSet:
    """Time-averaged correlations on a delay grid (raw, not yet centered)."""

    mapping_h: int
    corr_length: int
    r_s1: np.ndarray
    r_s2: np.ndarray
    r_x1: np.ndarray
    r_x2: np.ndarray
    r_s3: np.ndarray
    r_x3: np.ndarray
    r_x3_0: np.ndarray


@dataclass
class CovarianceSet:
    """Time-averaged symbol-energy covariances.

    Pair arrays are indexed by tau (``k_x1[0]``, ``k_x2[0]`` hold the
    same-slot cross-polarization values; ``k_s1[0]``, ``k_s2[0]`` are unused
    and zero). Triple arrays are indexed ``[tau, tau_prime]`` and only the
    region ``0 < tau < tau_prime`` is populated. ``k_x3_0[tau]`` is
    K_X3(0, tau). Entries beyond the stored range are taken as zero.
    """

    mapping_h: int | None
    corr_length: int | None
    p_ch: float
    k_s1: np.ndarray
    k_s2: np.ndarray
    k_x1: np.ndarray
    k_x2: np.ndarray
    k_s3: np.ndarray
    k_x3: np.ndarray
    k_x3_0: np.ndarray
    stderr: dict | None = None
    meta: dict = field(default_factory=dict)

    @property
    def max_tau(self):
        return self.k_s1.size - 1

    @property
    def max_tau_prime(self):
        return self.k_s3.shape[1] - 1

    @property
    def k_x1_0(self):
        return float(self.k_x1[0])

    @property
    def k_x2_0(self):
        return float(self.k_x2[0])

    def pair(self, kind, taus):
        arr = {"S1": self.k_s1, "S2": self.k_s2, "X1": self.k_x1, "X2": self.k_x2}[kind]
        taus = np.asarray(taus)
        out = np.zeros(taus.shape)
        ok = (taus >= 0) & (taus < arr.size)
        out[ok] = arr[taus[ok]]
        return out

    def triple(self, kind, taus, taus_prime):
        arr = {"S3": self.k_s3, "X3": self.k_x3}[kind]
        taus, taus_prime = np.broadcast_arrays(np.asarray(taus), np.asarray(taus_prime))
        out = np.zeros(taus.shape)
        ok = (taus >= 0) & (taus < arr.shape[0]) & (taus_prime >= 0) & (taus_prime < arr.shape[1])
        out[ok] = arr[taus[ok], taus_prime[ok]]
        return out

    def x3_zero(self, taus):
        taus = np.asarray(taus)
        out = np.zeros(taus.shape)
        ok = (taus >= 1) & (taus < self.k_x3_0.size)
        out[ok] = self.k_x3_0[taus[ok]]
        return out

    def scaled(self, power):
        """Copy rescaled to per-polarization power ``power``."""
        s = float(power) / self.p_ch
        out = replace(
            self,
            p_ch=float(power),
            k_s1=self.k_s1 * s**2,
            k_x1=self.k_x1 * s**2,
            k_s2=self.k_s2 * s**3,
            k_x2=self.k_x2 * s**3,
            k_s3=self.k_s3 * s**3,
            k_x3=self.k_x3 * s**3,
            k_x3_0=self.k_x3_0 * s**3,
        )
        if self.stderr is not None:
            order = {"S1": 2, "X1": 2, "S2": 3, "X2": 3, "S3": 3, "X3": 3, "X3_0": 3}
            out.stderr = {k: v * s ** order[k] for k, v in self.stderr.items()}
        return out

    def is_zero(self, atol=0.0):
        arrays = (self.k_s1, self.k_s2, self.k_x1, self.k_x2, self.k_s3, self.k_x3, self.k_x3_0)
        return all(np.all(np.abs(a) <= atol) for a in arrays)

    def cross_polarization_free(self, rtol=1e-12):
        """True when every cross-polarization covariance is zero, so the
        polarization-multiplexed reduction applies."""
        scale = max(np.abs(self.k_s1).max(initial=0.0), 1e-300)
        scale3 = max(self.p_ch * scale, 1e-300)
        x3_excess = self.k_x3_0 - self.p_ch * self.pair("S1", np.arange(self.k_x3_0.size))
        x3_excess[0] = 0.0
        return (
            np.all(np.abs(self.k_x1) <= rtol * scale)
            and np.all(np.abs(self.k_x2) <= rtol * scale3)
            and np.all(np.abs(x3_excess) <= rtol * scale3)
        )

    def to_rows(self):
        """Rows ``(kind, tau, tau_prime, value, stderr)`` for CSV export."""
        se = self.stderr or {}
        rows = []
        for kind, arr in (("S1", self.k_s1), ("S2", self.k_s2), ("X1", self.k_x1), ("X2", self.k_x2)):
            err = se.get(kind)
            start = 0 if kind.startswith("X") else 1
            for t in range(start, arr.size):
                rows.append((kind, t, "", float(arr[t]), "" if err is None else float(err[t])))
        err = se.get("X3_0")
        for t in range(1, self.k_x3_0.size):
            rows.append(("X3", 0, t, float(self.k_x3_0[t]), "" if err is None else float(err[t])))
        for kind, arr in (("S3", self.k_s3), ("X3", self.k_x3)):
            err = se.get(kind)
            for t in range(1, arr.shape[0]):
                for tp in range(t + 1, arr.shape[1]):
                    rows.append((kind, t, tp, float(arr[t, tp]), "" if err is None else float(err[t, tp])))
        return rows


def analytic_correlations(comp, H, max_tau, max_tau_prime=None):
    """Evaluate every time-averaged correlation on the delay grid (exact when
    the alphabet is integer valued; returned as float arrays)."""
    if max_tau_prime is None:
        max_tau_prime = 2 * max_tau
    Ms = _corr_length(comp, H)
    m = symbol_moments(comp, H).sym_moments
    T, Tp = int(max_tau), int(max_tau_prime)
    r = {k: np.zeros(T + 1) for k in ("s1", "s2", "x1", "x2")}
    rX1_0, rX2_0, _ = zero_delay_cross_correlations(comp, H, 1)
    r["s1"][0] = m[2] ** 2
    r["s2"][0] = m[2] * m[4]
    r["x1"][0] = rX1_0
    r["x2"][0] = rX2_0
    x3_0 = np.zeros(Tp + 1)
    x3_0[0] = m[2] ** 3
    for t in range(1, max(T, Tp) + 1):
        if t <= T:
            vals = time_avg_pair_correlations(comp, H, t)
            for k, v in zip(("s1", "s2", "x1", "x2"), vals):
                r[k][t] = v
        x3_0[t] = zero_delay_cross_correlations(comp, H, t)[2]
    s3 = np.zeros((T + 1, Tp + 1))
    x3 = np.zeros((T + 1, Tp + 1))
    s3[:] = m[2] ** 3
    x3[:] = m[2] ** 3
    for t in range(1, T + 1):
        for tp in range(t + 1, Tp + 1):
            s3[t, tp], x3[t, tp] = time_avg_triple_correlations(comp, H, t, tp)
    return CorrelationSet(H, Ms, r["s1"], r["s2"], r["x1"], r["x2"], s3, x3, x3_0)


def covariances_from_correlations(moments, correlations):
    """Subtract moment products from a :class:`CorrelationSet`."""
    m = moments.sym_moments
    m2, m4 = float(m[2]), float(m[4])
    c = correlations
    k_s1 = c.r_s1 - m2**2
    k_s2 = c.r_s2 - m2 * m4
    k_s1[0] = k_s2[0] = 0.0
    k_s3 = c.r_s3 - m2**3
    k_x3 = c.r_x3 - m2**3
    tri = np.triu(np.ones(k_s3.shape, dtype=bool), k=1)
    tri[0, :] = False
    k_s3[~tri] = 0.0
    k_x3[~tri] = 0.0
    k_x3_0 = c.r_x3_0 - m2**3
    k_x3_0[0] = 0.0
    return CovarianceSet(
        mapping_h=c.mapping_h,
        corr_length=c.corr_length,
        p_ch=m2,
        k_s1=k_s1,
        k_s2=k_s2,
        k_x1=c.r_x1 - m2**2,
        k_x2=c.r_x2 - m2 * m4,
        k_s3=k_s3,
        k_x3=k_x3,
        k_x3_0=k_x3_0,
    )


def _exact_covariances(comp, H, max_tau, max_tau_prime):
    # centre in exact arithmetic first, then convert
    Ms = _corr_length(comp, H)
    m = symbol_moments(comp, H).sym_moments
    m2, m4 = m[2], m[4]
    T, Tp = int(max_tau), int(max_tau_prime)
    k = {n: np.zeros(T + 1) for n in ("s1", "s2", "x1", "x2")}
    rX1_0, rX2_0, _ = zero_delay_cross_correlations(comp, H, 1)
    k["x1"][0] = float(rX1_0 - m2**2)
    k["x2"][0] = float(rX2_0 - m2 * m4)
    for t in range(1, min(T, Ms) + 1):
        RS1, RS2, RX1, RX2 = time_avg_pair_correlations(comp, H, t)
        k["s1"][t] = float(RS1 - m2**2)
        k["s2"][t] = float(RS2 - m2 * m4)
        k["x1"][t] = float(RX1 - m2**2)
        k["x2"][t] = float(RX2 - m2 * m4)
    x3_0 = np.zeros(Tp + 1)
    tail = float(zero_delay_cross_correlations(comp, H, Ms)[2] - m2**3)
    for t in range(1, Tp + 1):
        x3_0[t] = float(zero_delay_cross_correlations(comp, H, t)[2] - m2**3) if t < Ms else tail
    s3 = np.zeros((T + 1, Tp + 1))
    x3 = np.zeros((T + 1, Tp + 1))
    for t in range(1, T + 1):
        # beyond tau' >= tau + Ms with tau >= Ms every branch is independent
        for tp in range(t + 1, min(Tp, t + Ms) + 1 if t >= Ms else Tp + 1):
            RS3, RX3 = time_avg_triple_correlations(comp, H, t, tp)
            s3[t, tp] = float(RS3 - m2**3)
            x3[t, tp] = float(RX3 - m2**3)
    return CovarianceSet(H, Ms, float(m2), k["s1"], k["s2"], k["x1"], k["x2"], s3, x3, x3_0)


def analytic_covariances(comp, H, max_tau, max_tau_prime=None, power=None):
    """Covariances of ideal constant-composition blocks under H-D mapping.

    Differences are formed before converting to floating point, so entries in
    the independent regions are exactly zero. ``power`` rescales to the given
    per-polarization power (W).
    """
    if max_tau_prime is None:
        max_tau_prime = 2 * max_tau
    if max_tau < 0 or max_tau_prime < max_tau:
        raise UsageError("need 0 <= max_tau <= max_tau_prime")
    cov = _exact_covariances(comp, H, max_tau, max_tau_prime)
    cov.meta = {"source": "analytic", "alphabet": comp.alphabet, "counts": comp.counts}
    if power is not None:
        if not power > 0:
            raise ParameterError("power must be positive")
        cov = cov.scaled(power)
    return cov


def zero_covariances(p_ch, max_tau=0, max_tau_prime=None):
    """All-zero set, the i.i.d. reduction."""
    Tp = 2 * max_tau if max_tau_prime is None else max_tau_prime
    z = np.zeros(max_tau + 1)
    return CovarianceSet(
        None, None, float(p_ch), z.copy(), z.copy(), z.copy(), z.copy(),
        np.zeros((max_tau + 1, Tp + 1)), np.zeros((max_tau + 1, Tp + 1)), np.zeros(Tp + 1),
        meta={"source": "iid"},
    )


# --- empirical estimator ---------------------------------------------------------


def _energies(stream):
    if hasattr(stream, "x_pol"):
        x, y = stream.x_pol, stream.y_pol
    else:
        arr = np.asarray(stream)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise DataError("symbols must be an (n_slots, 2) array or a SymbolStream")
        x, y = arr[:, 0], arr[:, 1]
    ex = np.abs(np.asarray(x)) ** 2
    ey = np.abs(np.asarray(y)) ** 2
    return ex.astype(float), ey.astype(float)


class _GroupedMean:
    """Sample means with per-group partial sums for delete-one-group jackknife.

    Partial sums within a group use numpy's pairwise summation; group totals
    are combined with ``math.fsum`` (exactly rounded).
    """

    def __init__(self, n_groups, group_len):
        self.G = n_groups
        self.g = group_len
        self.n = n_groups * group_len

    def partials(self, values):
        return values[: self.n].reshape(self.G, self.g).sum(axis=1)

    def full_and_loo(self, partials):
        total = math.fsum(partials)
        full = total / self.n
        loo = (total - partials) / (self.n - self.g)
        return full, loo


def _jackknife_se(loo):
    G = loo.shape[0]
    return float(np.sqrt((G - 1) / G * np.sum((loo - loo.mean()) ** 2)))


def empirical_covariances(stream, period_ms, max_tau, max_tau_prime=None, n_groups=100, triples=True,
                          triple_pairs=None):
    """Direct time-average estimate of every covariance with jackknife errors.

    The stream is cut to a whole number of periods (``period_ms`` slots each,
    aligned to slot 0) and treated as circular, so each slot phase within the
    period is weighted equally. Both polarizations are pooled (X3 uses the
    (x, y, x) and (y, x, y) orderings). Standard errors come from deleting one
    contiguous group of periods at a time.

    ``triple_pairs`` restricts the order-3 estimates to the listed
    ``(tau, tau_prime)`` pairs; the other triple entries are NaN.
    """
    ex, ey = _energies(stream)
    period_ms = int(period_ms)
    if period_ms < 1:
        raise ParameterError("period_ms must be >= 1")
    n_periods = ex.size // period_ms
    if n_periods < 2:
        raise DataError("stream is shorter than two correlation periods")
    if max_tau_prime is None:
        max_tau_prime = 2 * max_tau if triples else max_tau
    G = int(min(n_groups, n_periods))
    per_group = n_periods // G
    L = G * per_group * period_ms
    if L <= max_tau_prime:
        raise DataError("stream too short for the requested delays")
    ex = ex[:L]
    ey = ey[:L]
    acc = _GroupedMean(G, per_group * period_ms)
    wrap = max_tau_prime + 1
    ex_c = np.concatenate([ex, ex[:wrap]])
    ey_c = np.concatenate([ey, ey[:wrap]])

    def lag(a, t):
        return a[t : t + L]

    # moment partials
    p2 = acc.partials(0.5 * (ex + ey))
    p4 = acc.partials(0.5 * (ex**2 + ey**2))
    m2, m2_loo = acc.full_and_loo(p2)
    m4, m4_loo = acc.full_and_loo(p4)

    def estimate(values, sub_full, sub_loo):
        full, loo = acc.full_and_loo(acc.partials(values))
        return full - sub_full, _jackknife_se(loo - sub_loo)

    T, Tp = int(max_tau), int(max_tau_prime)
    out = {k: np.zeros(T + 1) for k in ("S1", "S2", "X1", "X2")}
    err = {k: np.zeros(T + 1) for k in ("S1", "S2", "X1", "X2")}
    ex2, ey2 = ex_c**2, ey_c**2
    for t in range(0, T + 1):
        xs, ys = lag(ex_c, t), lag(ey_c, t)
        xs2, ys2 = lag(ex2, t), lag(ey2, t)
        if t > 0:
            out["S1"][t], err["S1"][t] = estimate(0.5 * (ex * xs + ey * ys), m2**2, m2_loo**2)
            out["S2"][t], err["S2"][t] = estimate(0.5 * (ex * xs2 + ey * ys2), m2 * m4, m2_loo * m4_loo)
        out["X1"][t], err["X1"][t] = estimate(0.5 * (ex * ys + ey * xs), m2**2, m2_loo**2)
        out["X2"][t], err["X2"][t] = estimate(0.5 * (ex * ys2 + ey * xs2), m2 * m4, m2_loo * m4_loo)

    s3 = np.zeros((T + 1, Tp + 1))
    x3 = np.zeros((T + 1, Tp + 1))
    s3e = np.zeros_like(s3)
    x3e = np.zeros_like(x3)
    x3_0 = np.zeros(Tp + 1)
    x3_0e = np.zeros(Tp + 1)
    exy = ex * ey
    for t in range(1, Tp + 1):
        x3_0[t], x3_0e[t] = estimate(0.5 * exy * (lag(ex_c, t) + lag(ey_c, t)), m2**3, m2_loo**3)
    if triple_pairs is not None:
        wanted = {}
        for t, tp in triple_pairs:
            if not 0 < t < tp <= Tp or t > T:
                raise UsageError(f"triple pair {(t, tp)} outside 0 < tau < tau' <= {Tp}, tau <= {T}")
            wanted.setdefault(int(t), []).append(int(tp))
        for arr in (s3, x3, s3e, x3e):
            arr[1:, :] = np.nan
    else:
        wanted = {t: range(t + 1, Tp + 1) for t in range(1, T + 1)}
    if triples:
        for t in sorted(wanted):
            xs, ys = lag(ex_c, t), lag(ey_c, t)
            a_s = ex * xs
            b_s = ey * ys
            a_x = ex * ys
            b_x = ey * xs
            for tp in sorted(wanted[t]):
                xp, yp = lag(ex_c, tp), lag(ey_c, tp)
                s3[t, tp], s3e[t, tp] = estimate(0.5 * (a_s * xp + b_s * yp), m2**3, m2_loo**3)
                x3[t, tp], x3e[t, tp] = estimate(0.5 * (a_x * xp + b_x * yp), m2**3, m2_loo**3)

    stderr = {
        "S1": err["S1"], "S2": err["S2"], "X1": err["X1"], "X2": err["X2"],
        "S3": s3e, "X3": x3e, "X3_0": x3_0e,
    }
    return CovarianceSet(
        mapping_h=getattr(stream, "mapping_h", None),
        corr_length=period_ms,
        p_ch=float(m2),
        k_s1=out["S1"], k_s2=out["S2"], k_x1=out["X1"], k_x2=out["X2"],
        k_s3=s3, k_x3=x3, k_x3_0=x3_0,
        stderr=stderr,
        meta={"source": "empirical", "n_slots": int(L), "n_groups": G, "m4": float(m4)},
    )
