from collections import Counter

import numpy as np
import pytest

from fibernli import shaping, stats
from fibernli.errors import DataError, ParameterError, UsageError
from fibernli.shaping import ALPHABET_64QAM, PMF_64QAM, ShapingScheme, SymbolStream


def test_make_composition_examples():
    assert shaping.make_composition(PMF_64QAM, ALPHABET_64QAM, 40).counts == (16, 12, 8, 4)
    assert shaping.make_composition([1.0], [3], 8).counts == (8,)
    assert shaping.make_composition(PMF_64QAM, ALPHABET_64QAM, 10).counts == (4, 3, 2, 1)
    c = shaping.make_composition(PMF_64QAM, ALPHABET_64QAM, 12)
    assert sum(c.counts) == 12
    with pytest.raises(ParameterError):
        shaping.make_composition(PMF_64QAM, ALPHABET_64QAM, 12, strict=True)
    with pytest.raises(ParameterError):
        shaping.make_composition([0.5, 0.6], [1, 3], 10)
    with pytest.raises(ParameterError):
        shaping.make_composition([0.5, 0.5], [1, 3, 5], 10)


def test_block_is_a_permutation_and_deterministic():
    comp = shaping.make_composition(PMF_64QAM, ALPHABET_64QAM, 40)
    a = shaping.generate_block(comp, np.random.default_rng(3))
    b = shaping.generate_block(comp, np.random.default_rng(3))
    assert np.array_equal(a, b)
    assert Counter(a.tolist()) == {1.0: 16, 3.0: 12, 5.0: 8, 7.0: 4}
    blocks = shaping.generate_blocks(comp, 100, np.random.default_rng(4))
    for row in blocks:
        assert Counter(row.tolist()) == Counter(a.tolist())


def test_arrangement_frequencies_uniform():
    comp = stats.AmplitudeComposition((1, 3), (2, 2))
    n = 100_000
    blocks = shaping.generate_blocks(comp, n, np.random.default_rng(8))
    freq = Counter(map(tuple, blocks.astype(int).tolist()))
    assert len(freq) == 6
    sigma = np.sqrt(n / 6 * (5 / 6))
    for c in freq.values():
        assert abs(c - n / 6) < 4 * sigma


@pytest.mark.parametrize("H,Ms", [(4, 2), (2, 4), (1, 8)])
def test_mapping_corr_length_and_layout(H, Ms):
    comp = shaping.make_composition(PMF_64QAM, ALPHABET_64QAM, 8)
    scheme = ShapingScheme(comp, H, 1.0)
    assert scheme.corr_length == Ms
    st = shaping.generate_stream(scheme, 64 * Ms, np.random.default_rng(1))
    assert st.block_len_symbols == Ms and st.mapping_h == H
    amps = np.abs(np.stack([st.x_pol.real, st.x_pol.imag, st.y_pol.real, st.y_pol.imag], 1)) / scheme.amplitude_scale
    amps = np.rint(amps).astype(int)
    # every block occupies its own dimension group over one period of Ms slots
    for g in range(64):
        per = amps[g * Ms:(g + 1) * Ms]
        if H == 4:
            groups = [per.ravel()]
        elif H == 2:
            groups = [per[:, :2].ravel(), per[:, 2:].ravel()]
        else:
            groups = [per[:, d] for d in range(4)]
        for blk in groups:
            assert sorted(blk.tolist()) == [1, 1, 1, 3, 3, 5, 5, 7]


def test_power_normalization_exact():
    comp = shaping.make_composition(PMF_64QAM, ALPHABET_64QAM, 40)
    for H in (1, 2, 4):
        st = shaping.generate_stream(ShapingScheme(comp, H, 2.5e-4), 4000, np.random.default_rng(H))
        p = 0.5 * (np.mean(np.abs(st.x_pol) ** 2) + np.mean(np.abs(st.y_pol) ** 2))
        assert p == pytest.approx(2.5e-4, rel=1e-12)


def test_histogram_equals_pmf_exactly():
    comp = shaping.make_composition(PMF_64QAM, ALPHABET_64QAM, 40)
    scheme = ShapingScheme(comp, 4, 1.0)
    st = shaping.generate_stream(scheme, 1000, np.random.default_rng(0))
    dims = np.abs(np.concatenate([st.x_pol.real, st.x_pol.imag, st.y_pol.real, st.y_pol.imag]))
    lv = np.rint(dims / scheme.amplitude_scale).astype(int)
    hist = Counter(lv.tolist())
    assert {k: v / lv.size for k, v in hist.items()} == {1: 0.4, 3: 0.3, 5: 0.2, 7: 0.1}


def test_signs_equiprobable():
    comp = shaping.make_composition(PMF_64QAM, ALPHABET_64QAM, 40)
    st = shaping.generate_stream(ShapingScheme(comp, 4, 1.0), 100_000, np.random.default_rng(2))
    pos = np.mean(st.x_pol.real > 0)
    assert abs(pos - 0.5) < 4 * np.sqrt(0.25 / 100_000)


def test_kurtosis_matches_pmf():
    comp = shaping.make_composition(PMF_64QAM, ALPHABET_64QAM, 40)
    st = shaping.generate_stream(ShapingScheme(comp, 1, 1.0), 400_000, np.random.default_rng(6))
    e = np.abs(st.x_pol) ** 2
    kurt = np.mean(e**2) / np.mean(e) ** 2
    u = np.asarray(ALPHABET_64QAM, float) ** 2
    p = np.asarray(PMF_64QAM)
    E2, E4 = p @ u, p @ u**2
    expect = (2 * E4 + 2 * E2**2) / (2 * E2) ** 2
    assert kurt == pytest.approx(expect, rel=5e-3)


def test_cross_polarization_statistics():
    comp = shaping.make_composition(PMF_64QAM, ALPHABET_64QAM, 40)
    for H in (1, 2):
        st = shaping.generate_stream(ShapingScheme(comp, H, 1.0), 400_000, np.random.default_rng(H))
        cov = stats.empirical_covariances(st, 40 // H, 5, 5, triples=False)
        assert np.all(np.abs(cov.k_x1[1:]) < 4.5 * cov.stderr["X1"][1:])
    st = shaping.generate_stream(ShapingScheme(comp, 4, 1.0), 400_000, np.random.default_rng(4))
    cov = stats.empirical_covariances(st, 10, 5, 5, triples=False)
    se = np.hypot(cov.stderr["X1"], cov.stderr["S1"])
    assert np.all(np.abs(cov.k_x1[1:] - cov.k_s1[1:]) < 4.5 * se[1:])


def test_stream_csv_roundtrip(tmp_path):
    comp = shaping.make_composition(PMF_64QAM, ALPHABET_64QAM, 8)
    st = shaping.generate_stream(ShapingScheme(comp, 2, 1e-3), 20, np.random.default_rng(0))
    path = tmp_path / "s.csv"
    st.to_csv(path)
    assert path.read_text().splitlines()[0] == "slot,x_re,x_im,y_re,y_im"
    back = SymbolStream.from_csv(path)
    assert np.array_equal(back.x_pol, st.x_pol) and np.array_equal(back.y_pol, st.y_pol)


def test_iid_and_gaussian_streams():
    st = shaping.iid_stream(PMF_64QAM, ALPHABET_64QAM, 200_000, 1e-3, np.random.default_rng(0))
    assert np.mean(np.abs(st.x_pol) ** 2) == pytest.approx(1e-3, rel=1e-2)
    g = shaping.gaussian_stream(200_000, 1e-3, np.random.default_rng(0))
    e = np.abs(g.x_pol) ** 2
    assert np.mean(e**2) / np.mean(e) ** 2 == pytest.approx(2.0, rel=2e-2)


def test_errors():
    comp10 = shaping.make_composition(PMF_64QAM, ALPHABET_64QAM, 10)
    with pytest.raises(ParameterError):
        ShapingScheme(comp10, 4, 1.0)
    comp8 = shaping.make_composition(PMF_64QAM, ALPHABET_64QAM, 8)
    with pytest.raises(UsageError):
        ShapingScheme(comp8, 3, 1.0)
    with pytest.raises(ParameterError):
        ShapingScheme(comp8, 4, 0.0)
    with pytest.raises(DataError):
        shaping.map_to_qam(np.ones((3, 8)), 2, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        shaping.map_to_qam(np.ones((4, 10)), 4, np.random.default_rng(0))
    with pytest.raises(DataError):
        SymbolStream(np.ones(3), np.ones(4))
