"""Memory-enhanced EGN: NLI PSD for temporally correlated symbol energies.

The PSD is the EGN term plus corrections driven by symbol-energy covariances:
self-polarization temporal (SPT), cross-polarization temporal (XPT) and
same-slot cross-polarization (XP) terms. First-order terms are single sums
over the delay ``tau``; second-order terms are double sums over
``tau < tau'``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, UsageError
from .kernels import DOUBLE_DELAY_IDS, PHI_IDS, SINGLE_DELAY_IDS, QuadratureConfig, build_kernel_grid, kernel_table
from .linkmodel import LinkConfig, PulseShape, ase_power

log = logging.getLogger(__name__)

MODES = ("full", "approx", "pm_approx")

# The kernel prefactors give the PSD in a single-polarization normalization;
# the per-polarization NLI PSD of a dual-polarization signal with
# per-polarization power P is four times larger (checked against the
# split-step simulator with Gaussian symbols).
PSD_SCALE = 4.0


@dataclass(frozen=True)
class MEGNConfig:
    """Model settings.

    ``memory`` is the truncation length M of the delay sums. ``n_freq`` odd
    points span [-Rs/2, Rs/2] unless ``f_grid`` (normalized to Rs, symmetric)
    is given.
    """

    memory: int = 50
    mode: str = "approx"
    n_freq: int = 65
    f_grid: tuple | None = None
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)

    def __post_init__(self):
        if int(self.memory) != self.memory or self.memory < 0:
            raise ParameterError("memory must be a non-negative integer")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}")
        if self.f_grid is None:
            if self.n_freq < 3 or self.n_freq % 2 == 0:
                raise ParameterError("n_freq must be odd and >= 3")
        else:
            g = np.asarray(self.f_grid, dtype=float)
            if g.ndim != 1 or g.size < 2 or not np.allclose(g, -g[::-1], atol=1e-12):
                raise ParameterError("f_grid must be a symmetric 1-D grid")
            if np.any(np.diff(g) <= 0) or np.abs(g).max() > 0.5 + 1e-12:
                raise ParameterError("f_grid must be increasing within [-0.5, 0.5] (units of Rs)")
            object.__setattr__(self, "f_grid", tuple(float(v) for v in g))

    def frequencies(self, pulse):
        if self.f_grid is not None:
            return np.asarray(self.f_grid) * pulse.symbol_rate_hz
        return np.linspace(-0.5, 0.5, self.n_freq) * pulse.symbol_rate_hz


@dataclass
class KernelBank:
    """Kernel tables on a symmetric frequency grid.

    ``phi[id]`` has shape (n_f,), ``single[id]`` (n_f, M+1) and
    ``double[id]`` (n_f, M+1, 2M+1).
    """

    f: np.ndarray
    memory: int
    phi: dict
    single: dict
    double: dict


def _table_at(args):
    f, pulse, link, quad, M, double = args
    grid = build_kernel_grid(f, pulse, link, quad, cache=False)
    t = kernel_table(grid, M, 2 * M, double=double)
    return t.phi, t.single, t.double


def _run(tasks, workers):
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_table_at, tasks))
    return [_table_at(t) for t in tasks]


def build_kernel_bank(f_grid, pulse, link, memory, quad=None, double=False, workers=1):
    """Evaluate every kernel on ``f_grid``.

    The EGN and single-delay kernels are even in ``f`` and are computed for
    ``f >= 0`` only, then mirrored. The double-delay kernels are not even in
    ``f`` individually; they are evaluated at ``+f`` and ``-f`` and averaged so
    that the assembled PSD stays symmetric.
    """
    quad = quad or QuadratureConfig()
    f = np.asarray(f_grid, dtype=float)
    if not np.allclose(f, -f[::-1], rtol=0, atol=1e-9 * max(1.0, np.abs(f).max())):
        raise ParameterError("frequency grid must be symmetric about 0")
    M = int(memory)
    half = f[f >= -1e-9 * max(1.0, np.abs(f).max())]
    half = np.where(np.abs(half) < 1e-9 * max(1.0, np.abs(f).max()), 0.0, half)
    tasks = [(float(v), pulse, link, quad, M, double) for v in half]
    if double:
        tasks += [(-float(v), pulse, link, quad, M, True) for v in half if v != 0.0]
    results = _run(tasks, workers)
    n_half = half.size
    pos = results[:n_half]
    neg = {float(v): r for v, r in zip([v for v in half if v != 0.0], results[n_half:])}
    idx = np.abs(np.abs(f)[:, None] - half[None, :]).argmin(axis=1)

    phi = {k: np.array([pos[i][0][k] for i in idx]) for k in PHI_IDS}
    single = {k: np.stack([pos[i][1][k] for i in idx]) for k in SINGLE_DELAY_IDS}
    dbl = {}
    if double:
        for k in DOUBLE_DELAY_IDS:
            vals = []
            for i in idx:
                v = half[i]
                a = pos[i][2][k]
                vals.append(a if v == 0.0 else 0.5 * (a + neg[float(v)][2][k]))
            dbl[k] = np.stack(vals)
    return KernelBank(f, M, phi, single, dbl)


@dataclass
class NLISpectrum:
    """Per-polarization NLI PSD (W/Hz) and its contributions."""

    f: np.ndarray
    g_egn: np.ndarray
    g_spt1: np.ndarray
    g_spt2: np.ndarray
    g_xpt1: np.ndarray
    g_xpt2: np.ndarray
    g_xp: np.ndarray
    mode: str = "approx"

    @property
    def g_total(self):
        return self.g_egn + self.g_spt1 + self.g_spt2 + self.g_xpt1 + self.g_xpt2 + self.g_xp

    @property
    def g_correction(self):
        return self.g_total - self.g_egn

    def integral(self, name="g_total"):
        return float(np.trapezoid(getattr(self, name), self.f))

    def to_rows(self):
        cols = (self.f, self.g_egn, self.g_spt1, self.g_spt2, self.g_xpt1, self.g_xpt2, self.g_xp, self.g_total)
        return [tuple(float(c[i]) for c in cols) for i in range(self.f.size)]


@dataclass(frozen=True)
class NLIResult:
    p_ch: float
    p_nli: float
    eta: float
    p_ase: float
    snr_eff_db: float
    snr_opt_db: float
    p_opt: float


# --- channel functions --------------------------------------------------------


def _kappa_s1(s):
    return 5 * s["xi1"] + 5 * s["psi1"] + 2 * s["psi2"] - 22 * s["chi1"] - 21 * s["chi2"] - 5 * s["chi3"]


def _kappa_s2(s):
    return 4 * s["chi1"] + 4 * s["chi2"] + s["chi3"]


def _kappa_pm_s1(s):
    return 5 * s["xi1"] + 5 * s["psi1"] + 2 * s["psi2"] - 16 * s["chi1"] - 16 * s["chi2"] - 4 * s["chi3"]


def _kappa_x1(s):
    return 4 * s["xi1"] + s["psi1"] + s["psi2"] - 14 * s["chi1"] - 9 * s["chi2"] - s["chi3"]


def _kappa_x2(s):
    return 2 * s["chi1"] + s["chi2"]


def _kappa_x3_first(s):
    return 6 * s["chi1"] + 5 * s["chi2"] + s["chi3"]


def _check_memory(bank, M, double=False):
    if M > bank.memory:
        raise UsageError(f"kernel bank holds memory {bank.memory}, requested {M}")
    if double and not bank.double:
        raise UsageError("second-order terms need a kernel bank built with double=True")


def _single(bank, M):
    return {k: v[:, 1 : M + 1] for k, v in bank.single.items()}


def _warn_range(cov, M):
    if cov.max_tau < 2 * M and np.any(cov.k_s1[-1:] != 0):
        log.warning("covariances stored up to tau=%d but sums reach %d; treating the rest as zero", cov.max_tau, 2 * M)


def g_egn(moments, bank):
    """EGN PSD: i.i.d. symbols with the given per-polarization moments."""
    m = moments.sym_moments
    m2, m4, m6 = float(m[2]), float(m[4]), float(m[6])
    p = bank.phi
    k1 = p["phi1"]
    k2 = 5 * p["phi2"] + p["phi3"]
    k3 = p["phi4"]
    return m2**3 * k1 + (m2 * m4 - 2 * m2**3) * k2 + (m6 - 9 * m2 * m4 + 12 * m2**3) * k3


def _double_bracket(cov, M, first_kind, triple_kind):
    """Bracket of the second-order sums on the (tau, tau' - tau) grid,
    shape (M, M): K3(tau, tau') - P (K1(tau) + K_S1(tau') + K1(tau' - tau))."""
    P = cov.p_ch
    tau = np.arange(1, M + 1)[:, None]
    d = np.arange(1, M + 1)[None, :]
    taup = tau + d
    k3 = cov.triple(triple_kind, tau, taup)
    return k3 - P * (cov.pair(first_kind, tau) + cov.pair("S1", taup) + cov.pair(first_kind, d))


def _double_sum(bank, kernel_mix, bracket, M):
    tau = np.arange(1, M + 1)[:, None]
    taup = tau + np.arange(1, M + 1)[None, :]
    kap = kernel_mix(bank.double)[:, tau, taup]  # (n_f, M, M)
    return np.einsum("fij,ij->f", kap, bracket)


def g_spt(cov, bank, M, include_second_order=False):
    """(first-order, second-order) SPT corrections."""
    nf = bank.f.size
    if M == 0:
        return np.zeros(nf), np.zeros(nf)
    _check_memory(bank, M, include_second_order)
    _warn_range(cov, M)
    s = _single(bank, M)
    taus = np.arange(1, M + 1)
    P = cov.p_ch
    g1 = _kappa_s1(s) @ (P * cov.pair("S1", taus)) + _kappa_s2(s) @ cov.pair("S2", taus)
    g2 = np.zeros(nf)
    if include_second_order:
        br = _double_bracket(cov, M, "S1", "S3")
        g2 = _double_sum(bank, lambda d: 4 * d["xi2"] + 2 * d["psi3"], br, M)
    return g1, g2


def g_xpt(cov, bank, M, include_second_order=False):
    """(first-order, second-order) XPT corrections."""
    nf = bank.f.size
    if M == 0:
        return np.zeros(nf), np.zeros(nf)
    _check_memory(bank, M, include_second_order)
    s = _single(bank, M)
    taus = np.arange(1, M + 1)
    P = cov.p_ch
    x3_excess = cov.x3_zero(taus) - P * cov.k_x1_0
    g1 = (
        _kappa_x1(s) @ (P * cov.pair("X1", taus))
        + _kappa_x2(s) @ cov.pair("X2", taus)
        + _kappa_x3_first(s) @ x3_excess
    )
    g2 = np.zeros(nf)
    if include_second_order:
        br = _double_bracket(cov, M, "X1", "X3")
        g2 = _double_sum(bank, lambda d: 5 * d["xi2"] + d["psi3"], br, M)
    return g1, g2


def g_xp(cov, bank):
    """Same-slot cross-polarization correction."""
    p = bank.phi
    return cov.k_x2_0 * 3 * p["phi4"] + cov.p_ch * cov.k_x1_0 * (-12 * p["phi4"] + 5 * p["phi2"] + p["phi3"])


def g_pm(cov, bank, M):
    """First-order correction when polarizations are independent."""
    nf = bank.f.size
    if M == 0:
        return np.zeros(nf)
    _check_memory(bank, M)
    s = _single(bank, M)
    taus = np.arange(1, M + 1)
    return _kappa_pm_s1(s) @ (cov.p_ch * cov.pair("S1", taus)) + _kappa_s2(s) @ cov.pair("S2", taus)


def assemble(mode, moments, cov, bank, M=None):
    """Assemble the per-polarization NLI PSD.

    ``full`` keeps every term, ``approx`` drops the second-order double sums
    and ``pm_approx`` uses the independent-polarization reduction, which
    requires every cross-polarization covariance to vanish.
    """
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}")
    M = bank.memory if M is None else int(M)
    if cov is not None and not np.isclose(float(moments.sym_moments[2]), cov.p_ch, rtol=1e-9):
        raise UsageError("moments and covariances are at different powers")
    nf = bank.f.size
    zero = np.zeros(nf)
    egn = g_egn(moments, bank)
    if cov is None:
        parts = (zero, zero, zero, zero, zero)
    elif mode == "pm_approx":
        if not cov.cross_polarization_free():
            raise UsageError("pm_approx needs independent polarizations (nonzero cross-polarization covariances)")
        parts = (g_pm(cov, bank, M), zero, zero, zero, zero)
    else:
        second = mode == "full"
        s1, s2 = g_spt(cov, bank, M, second)
        x1, x2 = g_xpt(cov, bank, M, second)
        parts = (s1, s2, x1, x2, g_xp(cov, bank))
    scaled = [PSD_SCALE * a for a in (egn,) + parts]
    return NLISpectrum(bank.f.copy(), *scaled, mode=mode)


def eta_and_snr(spectrum, p_ch, link, pulse):
    """NLI coefficient, effective SNR and optimum launch point."""
    if not p_ch > 0:
        raise ParameterError("p_ch must be positive")
    p_nli = spectrum.integral("g_total")
    eta = p_nli / p_ch**3
    p_ase = ase_power(link, pulse)
    snr = p_ch / (p_ase + eta * p_ch**3)
    if eta > 0:
        p_opt = (p_ase / (2.0 * eta)) ** (1.0 / 3.0)
        snr_opt = p_opt / (1.5 * p_ase)
    else:
        p_opt = float("inf")
        snr_opt = float("inf")
    return NLIResult(
        p_ch=float(p_ch),
        p_nli=p_nli,
        eta=eta,
        p_ase=p_ase,
        snr_eff_db=10 * np.log10(snr),
        snr_opt_db=10 * np.log10(snr_opt),
        p_opt=p_opt,
    )


# --- convenience --------------------------------------------------------------

_BANKS = {}


def kernel_bank_for(link, pulse, config, double=None, workers=1):
    """Cached kernel bank for a link and model settings."""
    if not isinstance(link, LinkConfig) or not isinstance(pulse, PulseShape):
        raise UsageError("need a LinkConfig and a PulseShape")
    double = config.mode == "full" if double is None else double
    key = (link, pulse, config.quad, config.memory, config.n_freq, config.f_grid)
    hit = _BANKS.get(key)
    if hit is not None and (hit.double or not double):
        return hit
    bank = build_kernel_bank(config.frequencies(pulse), pulse, link, config.memory, config.quad, double, workers)
    if len(_BANKS) >= 16:
        _BANKS.pop(next(iter(_BANKS)))
    _BANKS[key] = bank
    return bank


def predict(link, pulse, moments, cov, config=None, workers=1):
    """PSD and scalar metrics for one configuration.

    ``cov`` may be None for the EGN (i.i.d.) prediction.
    """
    config = config or MEGNConfig()
    bank = kernel_bank_for(link, pulse, config, workers=workers)
    spec = assemble(config.mode, moments, cov, bank, config.memory)
    return spec, eta_and_snr(spec, float(moments.sym_moments[2]), link, pulse)
