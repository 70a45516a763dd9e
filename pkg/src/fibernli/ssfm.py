"""Dual-polarization split-step Fourier simulator (Manakov equation).

Single channel, lumped amplification. The transmitter, fiber and receiver
all work on one FFT grid of ``num_symbols * oversampling`` samples, so the
symbol stream is treated as periodic; ``guard`` symbols at each edge are
excluded from the error statistics.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import ParameterError, SimulationError, UsageError
from .linkmodel import LinkConfig, PulseShape, ase_psd_per_span
from .shaping import ShapingScheme, SymbolStream, gaussian_stream, generate_stream, iid_stream

log = logging.getLogger(__name__)

MANAKOV_FACTOR = 8.0 / 9.0


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings. ``launch_power_dbm`` is per polarization."""

    oversampling: int = 2
    step_km: float = 1.0
    num_symbols: int = 2**16
    num_runs: int = 4
    seed: int = 0
    ase_enabled: bool = False
    launch_power_dbm: float = -6.0
    guard: int = 256
    fft_workers: int = 1

    def __post_init__(self):
        if int(self.oversampling) != self.oversampling or self.oversampling < 2:
            raise ParameterError("oversampling must be an integer >= 2")
        if not self.step_km > 0:
            raise ParameterError("step_km must be > 0")
        if self.num_symbols < 2 * self.guard + 1:
            raise ParameterError("num_symbols must exceed twice the guard")
        if self.num_runs < 1:
            raise ParameterError("num_runs must be >= 1")
        if self.guard < 0:
            raise ParameterError("guard must be >= 0")

    @property
    def launch_power(self):
        return 1e-3 * 10 ** (self.launch_power_dbm / 10)

    def steps_per_span(self, link):
        n = link.span_length_km / self.step_km
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ParameterError(f"step_km={self.step_km} does not divide span_length_km={link.span_length_km}")
        return int(round(n))

    def to_dict(self):
        return asdict(self)


@dataclass
class Waveform:
    """Sampled dual-polarization field in sqrt(W)."""

    x: np.ndarray
    y: np.ndarray
    sample_rate_hz: float

    def as_array(self):
        return np.stack([self.x, self.y])

    @classmethod
    def from_array(cls, a, fs):
        return cls(a[0], a[1], fs)

    def power(self):
        """Mean power per polarization."""
        return float(np.mean(np.abs(self.x) ** 2)), float(np.mean(np.abs(self.y) ** 2))

    def energy(self):
        return float(np.sum(np.abs(self.x) ** 2) + np.sum(np.abs(self.y) ** 2)) / self.sample_rate_hz


def _freq(n, fs):
    return sfft.fftfreq(n, 1.0 / fs)


def transmit(stream, sim, pulse):
    """Upsample and RRC-filter the symbols.

    The filter has transfer function ``S(f) * fs``, so a single unit symbol
    produces the pulse ``s(t)`` and the per-polarization power equals
    ``E|a|^2``.
    """
    sps = sim.oversampling
    n_sym = len(stream)
    n = n_sym * sps
    fs = pulse.symbol_rate_hz * sps
    up = np.zeros((2, n), dtype=complex)
    up[0, ::sps] = stream.x_pol
    up[1, ::sps] = stream.y_pol
    H = pulse.spectrum(_freq(n, fs)) * fs
    a = sfft.ifft(sfft.fft(up, axis=-1, workers=sim.fft_workers) * H, axis=-1, workers=sim.fft_workers)
    return Waveform.from_array(a, fs)


def split_step(field_, fs, length_m, dz_m, alpha, beta2, gamma_nl, workers=1, step_offset=0):
    """Symmetric split-step solution over ``length_m``.

    ``field_`` is a (2, n) array; ``alpha`` is the field attenuation in Np/m,
    ``gamma_nl`` the coefficient multiplying ``|Ax|^2 + |Ay|^2`` in the
    nonlinear phase. Consecutive linear half-steps are merged.
    """
    n_steps = int(round(length_m / dz_m))
    if n_steps < 1 or abs(n_steps * dz_m - length_m) > 1e-6 * dz_m:
        raise ParameterError("step must divide the propagation length")
    n = field_.shape[-1]
    w = 2 * np.pi * _freq(n, fs)
    lin = (-alpha + 0.5j * beta2 * w**2) * dz_m
    half = np.exp(0.5 * lin)
    full = np.exp(lin)
    A = sfft.fft(field_, axis=-1, workers=workers) * half
    for k in range(n_steps):
        a = sfft.ifft(A, axis=-1, workers=workers)
        if gamma_nl != 0.0:
            p = a[0].real ** 2 + a[0].imag ** 2 + a[1].real ** 2 + a[1].imag ** 2
            a = a * np.exp(1j * gamma_nl * dz_m * p)
        if not np.isfinite(a).all():
            raise SimulationError(f"non-finite field at step {step_offset + k}", step=step_offset + k)
        A = sfft.fft(a, axis=-1, workers=workers)
        A = A * (full if k < n_steps - 1 else half)
    return sfft.ifft(A, axis=-1, workers=workers)


def propagate_span(wave, link, sim, span_index=0):
    """One fiber span (no amplifier)."""
    dz = sim.step_km * 1e3
    steps = sim.steps_per_span(link)
    out = split_step(
        wave.as_array(), wave.sample_rate_hz, link.span_length, dz,
        link.alpha, link.beta2, MANAKOV_FACTOR * link.gamma,
        workers=sim.fft_workers, step_offset=span_index * steps,
    )
    return Waveform.from_array(out, wave.sample_rate_hz)


def amplify(wave, link, sim, rng=None):
    """EDFA restoring the span loss, with optional ASE.

    ASE is white over the simulation bandwidth with the per-polarization PSD
    used by the model's noise budget.
    """
    g = math.exp(link.alpha * link.span_length)
    a = wave.as_array() * g
    if sim.ase_enabled:
        if rng is None:
            raise UsageError("ASE needs an rng")
        var = ase_psd_per_span(link) * wave.sample_rate_hz
        a = a + np.sqrt(var / 2) * (rng.standard_normal(a.shape) + 1j * rng.standard_normal(a.shape))
    return Waveform.from_array(a, wave.sample_rate_hz)


@dataclass
class Reception:
    symbols: np.ndarray  # (2, n) equalized symbols
    error: np.ndarray  # (2, n - 2 guard)
    gains: np.ndarray  # (2,) complex LS gains
    error_power: np.ndarray  # (2,)


def dispersive_spread_symbols(link, pulse, num_spans=None):
    """Pulse broadening over the link, in symbol periods."""
    Ns = link.num_spans if num_spans is None else num_spans
    dt = 2 * np.pi * abs(link.beta2) * Ns * link.span_length * pulse.bandwidth
    return dt * pulse.symbol_rate_hz


def receive(wave, stream, link, sim, pulse, num_spans=None):
    """EDC, matched filter, decimation and a data-aided complex gain."""
    Ns = link.num_spans if num_spans is None else num_spans
    sps = sim.oversampling
    fs = wave.sample_rate_hz
    a = wave.as_array()
    n = a.shape[-1]
    f = _freq(n, fs)
    w = 2 * np.pi * f
    S = pulse.spectrum(f)
    edc = np.exp(-0.5j * link.beta2 * w**2 * link.span_length * Ns)
    mf = S / (np.sum(S**2) * fs / n)
    r = sfft.ifft(sfft.fft(a, axis=-1, workers=sim.fft_workers) * edc * mf, axis=-1, workers=sim.fft_workers)[:, ::sps]
    if sim.guard < 0.5 * dispersive_spread_symbols(link, pulse, Ns):
        warnings.warn("guard shorter than half the dispersive spread", RuntimeWarning, stacklevel=2)
    g = sim.guard
    sl = slice(g, r.shape[-1] - g)
    tx = np.stack([stream.x_pol, stream.y_pol])
    gains = np.empty(2, dtype=complex)
    err = np.empty((2, r.shape[-1] - 2 * g), dtype=complex)
    for p in range(2):
        aa = tx[p, sl]
        rr = r[p, sl]
        h = np.vdot(aa, rr) / np.vdot(aa, aa)
        gains[p] = h
        err[p] = rr / h - aa
    out = r / gains[:, None]
    return Reception(out, err, gains, np.mean(np.abs(err) ** 2, axis=-1))


# --- runs -----------------------------------------------------------------------


@dataclass(frozen=True)
class SourceSpec:
    """What to transmit: ``kind`` in {"ccdm", "iid", "gaussian"}."""

    kind: str = "ccdm"
    scheme: ShapingScheme | None = None
    pmf: tuple = ()
    alphabet: tuple = ()

    def __post_init__(self):
        if self.kind not in ("ccdm", "iid", "gaussian"):
            raise ParameterError(f"unknown source kind {self.kind!r}")
        if self.kind == "ccdm" and self.scheme is None:
            raise ParameterError("ccdm source needs a ShapingScheme")

    def draw(self, n, power, rng):
        if self.kind == "ccdm":
            sch = ShapingScheme(self.scheme.composition, self.scheme.mapping_h, power)
            return generate_stream(sch, n, rng)
        if self.kind == "iid":
            return iid_stream(self.pmf, self.alphabet, n, power, rng)
        return gaussian_stream(n, power, rng)


def simulate_run(source, link, pulse, sim, seed_seq):
    """One independent run; returns the per-polarization error powers."""
    sym_rng, noise_rng = [np.random.default_rng(s) for s in seed_seq.spawn(2)]
    P = sim.launch_power
    stream = source.draw(sim.num_symbols, P, sym_rng)
    wave = transmit(stream, sim, pulse)
    for s in range(link.num_spans):
        wave = propagate_span(wave, link, sim, span_index=s)
        wave = amplify(wave, link, sim, noise_rng)
    rec = receive(wave, stream, link, sim, pulse)
    return rec.error_power


def _run_job(args):
    return simulate_run(*args)


@dataclass
class SimResult:
    eta: float
    stderr: float | None
    per_run: np.ndarray  # (num_runs, 2) error powers in W
    p_ch: float
    manifest: dict = field(default_factory=dict)

    def manifest_rows(self):
        rows = []
        for i, (ex, ey) in enumerate(self.per_run):
            rows.append((i, self.manifest["run_seeds"][i], float(ex), float(ey), float((ex + ey) / 2 / self.p_ch**3)))
        return rows


def _jackknife_mean_se(values):
    v = np.asarray(values, dtype=float)
    n = v.size
    if n < 2:
        return None
    loo = (v.sum() - v) / (n - 1)
    return float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def estimate_eta_sim(source, link, pulse, sim, workers=1):
    """NLI coefficient from ``num_runs`` independent runs.

    ASE must be off so the error vector holds only NLI. Runs use child seeds
    of ``sim.seed`` and are reduced in run order.
    """
    if isinstance(source, ShapingScheme):
        source = SourceSpec("ccdm", source)
    if sim.ase_enabled:
        raise UsageError("estimate_eta_sim needs ase_enabled=False")
    children = np.random.SeedSequence(sim.seed).spawn(sim.num_runs)
    jobs = [(source, link, pulse, sim, c) for c in children]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            per_run = list(ex.map(_run_job, jobs))
    else:
        per_run = [_run_job(j) for j in jobs]
    per_run = np.asarray(per_run)
    P = sim.launch_power
    eta_runs = per_run.mean(axis=1) / P**3
    manifest = {
        "seed": sim.seed,
        "run_seeds": [int(c.generate_state(1)[0]) for c in children],
        "sim": sim.to_dict(),
        "link": link.to_dict(),
        "symbol_rate_hz": pulse.symbol_rate_hz,
        "rolloff": pulse.rolloff,
        "source": source.kind,
    }
    return SimResult(float(eta_runs.mean()), _jackknife_mean_se(eta_runs), per_run, P, manifest)
