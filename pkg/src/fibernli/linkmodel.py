"""Physical link parameters and the per-link frequency-domain functions.

Everything here works in SI units (Hz, s, m, W). Engineering units from a
config file are converted once, when a :class:`LinkConfig` is built.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.constants import h as PLANCK

from .errors import ParameterError

NU_EPSILON = 1e-12


def beta2_from_dispersion(d_ps_nm_km, lambda_nm):
    """Group-velocity dispersion beta2 in s^2/m from D in ps/(nm km).

    Uses beta2 = -D lambda^2 / (2 pi c).
    """
    if not lambda_nm > 0:
        raise ParameterError(f"wavelength must be positive, got {lambda_nm!r} nm")
    d_si = d_ps_nm_km * 1e-12 / (1e-9 * 1e3)  # s/m^2
    lam = lambda_nm * 1e-9
    return -d_si * lam**2 / (2.0 * np.pi * SPEED_OF_LIGHT)


@dataclass(frozen=True)
class LinkConfig:
    """Homogeneous multi-span fiber link with lumped EDFAs.

    Parameters are given in the usual engineering units. Derived SI values
    are exposed as properties (``alpha``, ``beta2``, ``gamma``, ...).
    """

    alpha_db_per_km: float = 0.22
    dispersion_ps_nm_km: float = 16.7
    gamma_per_w_km: float = 1.3
    span_length_km: float = 100.0
    num_spans: int = 10
    center_wavelength_nm: float = 1550.0
    edfa_noise_figure_db: float = 6.0

    def __post_init__(self):
        if not self.alpha_db_per_km > 0:
            raise ParameterError("alpha_db_per_km must be > 0")
        if not self.gamma_per_w_km >= 0:
            raise ParameterError("gamma_per_w_km must be >= 0")
        if not self.span_length_km > 0:
            raise ParameterError("span_length_km must be > 0")
        if int(self.num_spans) != self.num_spans or self.num_spans < 1:
            raise ParameterError("num_spans must be a positive integer")
        if not self.center_wavelength_nm > 0:
            raise ParameterError("center_wavelength_nm must be > 0")
        object.__setattr__(self, "num_spans", int(self.num_spans))
        for name in ("alpha", "beta2", "gamma"):
            if not np.isfinite(getattr(self, name)):
                raise ParameterError(f"derived {name} is not finite")

    @property
    def alpha(self):
        """Field attenuation in Np/m."""
        return self.alpha_db_per_km * np.log(10.0) / 20.0 / 1e3

    @property
    def beta2(self):
        return beta2_from_dispersion(self.dispersion_ps_nm_km, self.center_wavelength_nm)

    @property
    def gamma(self):
        """Nonlinear coefficient in 1/(W m)."""
        return self.gamma_per_w_km * 1e-3

    @property
    def span_length(self):
        return self.span_length_km * 1e3

    @property
    def carrier_frequency(self):
        return SPEED_OF_LIGHT / (self.center_wavelength_nm * 1e-9)

    @property
    def span_gain_db(self):
        return self.alpha_db_per_km * self.span_length_km

    @property
    def span_gain(self):
        """Linear power gain that restores the span loss."""
        return np.exp(2.0 * self.alpha * self.span_length)

    def derived(self):
        """SI values derived from the engineering inputs, for inspection."""
        return {
            "alpha_np_per_m": self.alpha,
            "beta2_s2_per_m": self.beta2,
            "gamma_per_w_m": self.gamma,
            "span_length_m": self.span_length,
            "carrier_frequency_hz": self.carrier_frequency,
            "span_gain_db": self.span_gain_db,
        }

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class PulseShape:
    """Root-raised-cosine pulse with unit energy per symbol period.

    ``spectrum(f)`` is in seconds and satisfies ``Rs * integral |S|^2 df = 1``,
    so that the symbol energy ``E|a|^2`` equals the launch power.
    """

    symbol_rate_hz: float = 32e9
    rolloff: float = 0.05
    normalization: str = "unit_energy"

    def __post_init__(self):
        if not self.symbol_rate_hz > 0:
            raise ParameterError("symbol_rate_hz must be > 0")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ParameterError("rolloff must lie in [0, 1]")
        if self.normalization != "unit_energy":
            raise ParameterError(f"unsupported normalization {self.normalization!r}")

    @property
    def symbol_period(self):
        return 1.0 / self.symbol_rate_hz

    @property
    def bandwidth(self):
        """Two-sided occupied bandwidth Rs (1 + rolloff)."""
        return self.symbol_rate_hz * (1.0 + self.rolloff)

    def spectrum(self, f):
        f = np.asarray(f, dtype=float)
        T = self.symbol_period
        af = np.abs(f)
        f_lo = (1.0 - self.rolloff) / (2.0 * T)
        f_hi = (1.0 + self.rolloff) / (2.0 * T)
        out = np.zeros_like(af)
        out[af <= f_lo] = T
        if self.rolloff > 0:
            m = (af > f_lo) & (af <= f_hi)
            out[m] = T * np.sqrt(0.5 * (1.0 + np.cos(np.pi * T / self.rolloff * (af[m] - f_lo))))
        return out

    def impulse_response(self, t):
        """Time-domain RRC pulse, the inverse transform of ``spectrum``."""
        t = np.asarray(t, dtype=float)
        T = self.symbol_period
        b = self.rolloff
        x = t / T
        out = np.empty_like(x)
        at0 = np.isclose(x, 0.0, atol=1e-12)
        if b > 0:
            sing = np.isclose(np.abs(x), 1.0 / (4.0 * b), atol=1e-12)
        else:
            sing = np.zeros_like(at0)
        reg = ~(at0 | sing)
        xr = x[reg]
        num = np.sin(np.pi * xr * (1 - b)) + 4 * b * xr * np.cos(np.pi * xr * (1 + b))
        den = np.pi * xr * (1 - (4 * b * xr) ** 2)
        out[reg] = num / den
        out[at0] = 1 - b + 4 * b / np.pi
        if np.any(sing):
            out[sing] = (b / np.sqrt(2)) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
            )
        return out


def _phase_rate(f1, f2, f, link):
    return 4.0 * np.pi**2 * link.beta2 * (np.asarray(f1) - f) * (np.asarray(f2) - f)


def zeta(f1, f2, f, link):
    """Single-span NLI generation efficiency."""
    a = link.alpha
    L = link.span_length
    ph = _phase_rate(f1, f2, f, link)
    return link.gamma * (1.0 - np.exp(-2.0 * a * L + 1j * ph * L)) / (2.0 * a - 1j * ph)


def nu(f1, f2, f, link, eps=NU_EPSILON):
    """Span-coherence (phased-array) factor over ``num_spans`` identical spans."""
    Ns = link.num_spans
    L = link.span_length
    theta = 2.0 * link.beta2 * np.pi**2 * (np.asarray(f1) - f) * (np.asarray(f2) - f)
    s = np.sin(theta * L)
    small = np.abs(s) < eps
    ratio = np.where(small, float(Ns), np.sin(Ns * theta * L) / np.where(small, 1.0, s))
    return ratio * np.exp(1j * theta * (Ns - 1) * L)


def mu(f1, f2, f, link):
    return zeta(f1, f2, f, link) * nu(f1, f2, f, link)


def triplet_beating(f1, f2, f, pulse, link):
    """Upsilon = S(f1) S*(f1+f2-f) S(f2) mu(f1, f2, f)."""
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    s = pulse.spectrum
    return s(f1) * s(f1 + f2 - f) * s(f2) * mu(f1, f2, f, link)


def ase_power(link, pulse):
    """Per-polarization ASE power accumulated over all spans, in W.

    Lumped EDFAs with gain equal to the span loss, ``n_sp = NF/2``.
    """
    return link.num_spans * ase_psd_per_span(link) * pulse.symbol_rate_hz


def ase_psd_per_span(link):
    """Per-polarization ASE PSD added by one amplifier, in W/Hz."""
    nf = 10.0 ** (link.edfa_noise_figure_db / 10.0)
    return (link.span_gain - 1.0) * nf / 2.0 * PLANCK * link.carrier_frequency
