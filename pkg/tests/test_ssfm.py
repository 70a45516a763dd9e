import numpy as np
import pytest

from fibernli import megn, ssfm
from fibernli.errors import ParameterError, SimulationError, UsageError
from fibernli.linkmodel import LinkConfig, PulseShape, ase_psd_per_span
from fibernli.pipeline import iid_moments
from fibernli.shaping import ALPHABET_64QAM, PMF_64QAM, SymbolStream, iid_stream
from fibernli.ssfm import SimConfig, SourceSpec

SMALL = SimConfig(num_symbols=2**12, num_runs=1)


def _stream(n, seed=0, power=1e-3):
    return iid_stream(PMF_64QAM, ALPHABET_64QAM, n, power, np.random.default_rng(seed))


def _rel_db(err, ref):
    return 10 * np.log10(np.sum(np.abs(err) ** 2) / np.sum(np.abs(ref) ** 2))


def test_transmit_power_and_zero_symbols(pulse):
    st = _stream(2**13, power=2.5e-4)
    px, py = ssfm.transmit(st, SMALL, pulse).power()
    for p in (px, py):
        assert abs(10 * np.log10(p / 2.5e-4)) < 0.1
    z = SymbolStream(np.zeros(64), np.zeros(64))
    assert np.all(ssfm.transmit(z, SimConfig(num_symbols=64, guard=8), pulse).as_array() == 0)


def test_single_symbol_gives_rrc_template(pulse):
    n = 1024
    x = np.zeros(n, complex)
    x[n // 2] = 1.0
    wave = ssfm.transmit(SymbolStream(x, np.zeros(n)), SimConfig(num_symbols=n, guard=8), pulse)
    t = (np.arange(n * 2) / wave.sample_rate_hz) - (n // 2) * pulse.symbol_period
    ref = pulse.impulse_response(t)
    core = np.abs(t) < 100 * pulse.symbol_period
    assert np.max(np.abs(wave.x[core] - ref[core])) < 1e-3 * ref.max()
    assert np.all(wave.y == 0)


def test_spectral_occupancy(pulse):
    wave = ssfm.transmit(_stream(2**14), SMALL, pulse)
    spec = np.abs(np.fft.fft(wave.x)) ** 2
    f = np.fft.fftfreq(wave.x.size, 1 / wave.sample_rate_hz)
    out = spec[np.abs(f) > pulse.bandwidth / 2 * (1 + 1e-9)].sum() / spec.sum()
    assert out < 1e-20
    occupied = np.abs(f[spec > 1e-6 * spec.max()]).max() * 2
    assert occupied == pytest.approx(pulse.symbol_rate_hz * 1.05, rel=0.02)


def test_linear_span_matches_transfer_function(pulse):
    lin = LinkConfig(gamma_per_w_km=0.0)
    wave = ssfm.transmit(_stream(2**12), SMALL, pulse)
    out = ssfm.propagate_span(wave, lin, SMALL)
    n = wave.x.size
    w = 2 * np.pi * np.fft.fftfreq(n, 1 / wave.sample_rate_hz)
    H = np.exp((-lin.alpha + 0.5j * lin.beta2 * w**2) * lin.span_length)
    ref = np.fft.ifft(np.fft.fft(wave.as_array(), axis=-1) * H, axis=-1)
    got = out.as_array()
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 1e-9


def test_lossless_energy_conservation(pulse):
    lossless = LinkConfig(alpha_db_per_km=1e-30)
    wave = ssfm.transmit(_stream(2**12, power=1e-2), SMALL, pulse)
    out = ssfm.split_step(wave.as_array(), wave.sample_rate_hz, 80e3, 1e3, 0.0, lossless.beta2,
                          ssfm.MANAKOV_FACTOR * lossless.gamma)
    e0 = np.sum(np.abs(wave.as_array()) ** 2)
    e1 = np.sum(np.abs(out) ** 2)
    assert abs(e1 / e0 - 1) < 1e-9


def test_nonlinear_only_phase_rotation(pulse, link):
    wave = ssfm.transmit(_stream(2**10, power=1e-2), SimConfig(num_symbols=2**10), pulse)
    a = wave.as_array()
    g = ssfm.MANAKOV_FACTOR * link.gamma
    out = ssfm.split_step(a, wave.sample_rate_hz, 50e3, 5e3, 0.0, 0.0, g)
    assert np.allclose(np.abs(out), np.abs(a), rtol=1e-12, atol=1e-15)
    p = np.sum(np.abs(a) ** 2, axis=0)
    assert np.allclose(out, a * np.exp(1j * g * 50e3 * p), rtol=1e-9, atol=1e-15)


def test_back_to_back_and_linear_chain(pulse):
    st = _stream(2**12)
    wave = ssfm.transmit(st, SMALL, pulse)
    rec = ssfm.receive(wave, st, LinkConfig(), SMALL, pulse, num_spans=0)
    assert _rel_db(rec.error, st.as_array().T[:, 256:-256]) < -80
    lin = LinkConfig(gamma_per_w_km=0.0, num_spans=3)
    for s in range(lin.num_spans):
        wave = ssfm.amplify(ssfm.propagate_span(wave, lin, SMALL, s), lin, SMALL)
    rec = ssfm.receive(wave, st, lin, SMALL, pulse)
    assert _rel_db(rec.error, st.as_array().T[:, 256:-256]) < -60


def test_amplify_restores_power_exactly(pulse, link):
    wave = ssfm.transmit(_stream(2**12), SMALL, pulse)
    lossy = ssfm.propagate_span(wave, LinkConfig(gamma_per_w_km=0.0), SMALL)
    out = ssfm.amplify(lossy, link, SMALL)
    assert out.power()[0] == pytest.approx(wave.power()[0], rel=1e-9)
    assert 10 * np.log10(np.exp(2 * link.alpha * link.span_length)) == pytest.approx(link.span_gain_db, rel=1e-12)


def test_ase_variance_matches_budget(link):
    sim = SimConfig(num_symbols=2**12, ase_enabled=True)
    n = 2**18
    zero = ssfm.Waveform(np.zeros(n, complex), np.zeros(n, complex), 64e9)
    out = ssfm.amplify(zero, link, sim, np.random.default_rng(1)).as_array()
    var = ase_psd_per_span(link) * 64e9
    for pol in out:
        est = np.mean(np.abs(pol) ** 2)
        assert abs(est - var) < 3 * var / np.sqrt(n)
    with pytest.raises(UsageError):
        ssfm.amplify(zero, link, sim)


def test_gamma_zero_eta_is_zero(pulse):
    lin = LinkConfig(gamma_per_w_km=0.0, num_spans=2)
    r = ssfm.estimate_eta_sim(SourceSpec("iid", pmf=PMF_64QAM, alphabet=ALPHABET_64QAM), lin, pulse,
                              SimConfig(num_symbols=2**12, num_runs=2))
    assert r.eta * r.p_ch**3 < 1e-6 * r.p_ch


def test_seed_determinism(pulse):
    lin = LinkConfig(num_spans=1)
    src = SourceSpec("iid", pmf=PMF_64QAM, alphabet=ALPHABET_64QAM)
    sim = SimConfig(num_symbols=2**12, num_runs=2, seed=3)
    a = ssfm.estimate_eta_sim(src, lin, pulse, sim)
    b = ssfm.estimate_eta_sim(src, lin, pulse, sim)
    assert np.array_equal(a.per_run, b.per_run) and a.eta == b.eta
    c = ssfm.estimate_eta_sim(src, lin, pulse, SimConfig(num_symbols=2**12, num_runs=2, seed=4))
    assert c.eta != a.eta
    assert len(a.manifest_rows()) == 2 and a.stderr is not None


def test_step_halving_small(pulse):
    """Common random numbers isolate the step-size error."""
    lin = LinkConfig(num_spans=3)
    src = SourceSpec("iid", pmf=PMF_64QAM, alphabet=ALPHABET_64QAM)
    a = ssfm.estimate_eta_sim(src, lin, pulse, SimConfig(num_symbols=2**13, num_runs=1, step_km=1.0))
    b = ssfm.estimate_eta_sim(src, lin, pulse, SimConfig(num_symbols=2**13, num_runs=1, step_km=0.5))
    assert abs(a.eta / b.eta - 1) < 0.01


@pytest.mark.slow
def test_step_halving_at_defaults(pulse, link):
    src = SourceSpec("iid", pmf=PMF_64QAM, alphabet=ALPHABET_64QAM)
    a = ssfm.estimate_eta_sim(src, link, pulse, SimConfig(num_runs=1, step_km=1.0))
    b = ssfm.estimate_eta_sim(src, link, pulse, SimConfig(num_runs=1, step_km=0.5))
    assert abs(a.eta / b.eta - 1) < 0.01


@pytest.mark.slow
def test_iid_64qam_matches_egn(pulse, link):
    sim = SimConfig()
    r = ssfm.estimate_eta_sim(SourceSpec("iid", pmf=PMF_64QAM, alphabet=ALPHABET_64QAM), link, pulse, sim)
    mom = iid_moments(PMF_64QAM, ALPHABET_64QAM, sim.launch_power)
    _, res = megn.predict(link, pulse, mom, None)
    assert abs(r.eta - res.eta) / res.eta < 0.05


def test_non_finite_field_raises_with_step():
    a = np.ones((2, 64), complex)
    a[0, 3] = np.nan
    with pytest.raises(SimulationError) as info:
        ssfm.split_step(a, 64e9, 4e3, 1e3, 0.0, -2e-26, 1e-3, step_offset=7)
    assert info.value.step == 7


def test_config_errors(link):
    for bad in ({"oversampling": 1}, {"step_km": 0}, {"num_symbols": 100}, {"num_runs": 0}):
        with pytest.raises(ParameterError):
            SimConfig(**bad)
    with pytest.raises(ParameterError):
        SimConfig(step_km=0.3).steps_per_span(link)
    with pytest.raises(UsageError):
        ssfm.estimate_eta_sim(SourceSpec("gaussian"), link, PulseShape(), SimConfig(ase_enabled=True))
    with pytest.raises(ParameterError):
        SourceSpec("ccdm")
