import math

import numpy as np
import pytest

from amcbench import corpusio, modem
from amcbench.errors import ConfigurationError, DataError
from amcbench.modem import CorpusSpec, ModulationClass, SynthesisConfig


def rect_cfg(sps=8):
    return SynthesisConfig(samples_per_symbol=sps, rectangular_pulse=True)


def instant_values(cls, sps, seed):
    cfg = rect_cfg(sps)
    frame = modem.synthesize(cls, cfg, seed)
    return frame.samples[modem.symbol_instants(cfg)]


def unique_points(values, decimals=9):
    return np.unique(np.round(values.real, decimals) + 1j * np.round(values.imag, decimals))


def kmeans2(points, iters=50):
    """Tiny deterministic 2-means over complex points (independent oracle)."""
    centers = np.array([points[np.argmin(points.real)], points[np.argmax(points.real)]])
    for _ in range(iters):
        assign = np.abs(points[:, None] - centers[None, :]).argmin(axis=1)
        centers = np.array([points[assign == j].mean() for j in (0, 1)])
    radius = max(np.abs(points[assign == j] - centers[j]).max() for j in (0, 1))
    return centers, radius


# ---------------------------------------------------------------------------
# enum / config contracts


def test_class_ids_are_stable_bijection():
    assert [int(c) for c in ModulationClass] == list(range(9))
    assert ModulationClass.QAM16 == 3 and ModulationClass.QAM64 == 4
    assert ModulationClass.AM_DSB_SC == 5 and ModulationClass.AM_SSB_SC == 6


def test_config_validation():
    with pytest.raises(ConfigurationError):
        modem.synthesize(ModulationClass.BPSK, SynthesisConfig(samples_per_symbol=1), 0)
    with pytest.raises(ConfigurationError):
        SynthesisConfig(rrc_rolloff=0.0).validate()


# ---------------------------------------------------------------------------
# synthesis invariants


@pytest.mark.parametrize("cls", list(ModulationClass))
def test_unit_power_and_length(cls):
    for seed in (0, 7, 1234):
        frame = modem.synthesize(cls, SynthesisConfig(), seed)
        assert frame.samples.shape == (modem.FRAME_LEN,)
        assert abs(frame.mean_power() - 1.0) < 1e-9
        assert frame.snr_db == math.inf


@pytest.mark.parametrize("cls", list(ModulationClass))
def test_synthesis_is_deterministic(cls):
    a = modem.synthesize(cls, SynthesisConfig(), 42)
    b = modem.synthesize(cls, SynthesisConfig(), 42)
    np.testing.assert_array_equal(a.samples, b.samples)


@pytest.mark.parametrize("cls", [ModulationClass.FM, ModulationClass.GMSK])
def test_constant_envelope_schemes(cls):
    frame = modem.synthesize(cls, SynthesisConfig(), 11)
    mags = np.abs(frame.samples)
    assert mags.max() - mags.min() < 1e-9
    # unit power + constant envelope -> modulus 1
    np.testing.assert_allclose(mags, 1.0, atol=1e-9)


def test_bpsk_collapses_to_two_clusters():
    vals = instant_values(ModulationClass.BPSK, 8, seed=7)
    centers, radius = kmeans2(vals)
    assert radius < 1e-6
    assert abs(abs(centers[0]) - abs(centers[1])) < 1e-9


@pytest.mark.parametrize("cls,sps,seed,expected", [
    (ModulationClass.BPSK, 8, 7, 2),
    (ModulationClass.QPSK, 8, 1, 4),
    (ModulationClass.PSK8, 8, 1, 8),
    (ModulationClass.QAM16, 8, 1, 16),
    (ModulationClass.QAM64, 2, 1, 64),
])
def test_constellation_cardinality(cls, sps, seed, expected):
    pts = unique_points(instant_values(cls, sps, seed))
    assert len(pts) == expected


def test_psk_symbol_instants_constant_modulus():
    for cls in (ModulationClass.BPSK, ModulationClass.QPSK, ModulationClass.PSK8):
        vals = instant_values(cls, 8, seed=3)
        mags = np.abs(vals)
        assert mags.max() - mags.min() < 1e-9


def test_qam16_grid_structure():
    pts = unique_points(instant_values(ModulationClass.QAM16, 8, seed=1))
    res = np.unique(np.round(pts.real, 9))
    ims = np.unique(np.round(pts.imag, 9))
    assert len(res) == 4 and len(ims) == 4
    np.testing.assert_allclose(np.diff(res), np.diff(res)[0], atol=1e-9)
    np.testing.assert_allclose(np.diff(ims), np.diff(ims)[0], atol=1e-9)


def test_ssb_suppresses_negative_band():
    frame = modem.synthesize(ModulationClass.AM_SSB_SC, SynthesisConfig(), 9)
    spec = np.fft.fft(frame.samples)
    half = modem.FRAME_LEN // 2
    pos = np.sum(np.abs(spec[1:half]) ** 2)
    neg = np.sum(np.abs(spec[half + 1:]) ** 2)
    assert neg < 0.05 * pos


def test_dsb_is_real_message():
    frame = modem.synthesize(ModulationClass.AM_DSB_SC, SynthesisConfig(), 9)
    assert np.abs(frame.samples.imag).max() == 0.0


# ---------------------------------------------------------------------------
# AWGN calibration


def test_awgn_infinite_snr_is_identity():
    frame = modem.synthesize(ModulationClass.QPSK, SynthesisConfig(), 5)
    out = modem.apply_awgn(frame, math.inf, 99)
    np.testing.assert_array_equal(out.samples, frame.samples)
    assert out.snr_db == math.inf


def test_awgn_zero_db_noise_variance_is_one():
    frame = modem.synthesize(ModulationClass.QPSK, SynthesisConfig(), 5)
    assert abs(frame.mean_power() - 1.0) < 1e-9
    noise_sq = []
    for seed in range(100):
        out = modem.apply_awgn(frame, 0.0, seed)
        noise_sq.append(np.mean(np.abs(out.samples - frame.samples) ** 2))
    assert abs(np.mean(noise_sq) - 1.0) < 0.02


def test_awgn_empirical_snr_within_tolerance():
    frame = modem.synthesize(ModulationClass.PSK8, SynthesisConfig(), 2)
    target = 10.0
    total = 0.0
    n_frames = 1000  # > 1e6 noise samples
    for seed in range(n_frames):
        out = modem.apply_awgn(frame, target, seed)
        total += np.mean(np.abs(out.samples - frame.samples) ** 2)
    snr_est = 10.0 * np.log10(frame.mean_power() / (total / n_frames))
    assert abs(snr_est - target) < 0.2


def test_awgn_deterministic_and_composable():
    frame = modem.synthesize(ModulationClass.FM, SynthesisConfig(), 1)
    a = modem.apply_awgn(frame, 5.0, 77)
    b = modem.apply_awgn(frame, 5.0, 77)
    np.testing.assert_array_equal(a.samples, b.samples)
    again = modem.apply_awgn(a, 5.0, 78)  # already-noisy input is accepted
    assert again.snr_db == 5.0


def test_awgn_rejects_bad_inputs():
    frame = modem.synthesize(ModulationClass.FM, SynthesisConfig(), 1)
    bad = modem.IqFrame(samples=np.where(np.arange(1024) == 0, np.nan, frame.samples),
                        label=frame.label, snr_db=frame.snr_db, seed=frame.seed)
    with pytest.raises(DataError):
        modem.apply_awgn(bad, 10.0, 0)
    with pytest.raises(DataError):
        modem.apply_awgn(frame, -math.inf, 0)


# ---------------------------------------------------------------------------
# corpus generation


def test_generate_corpus_counts_and_balance():
    spec = CorpusSpec(classes=tuple(ModulationClass), snr_grid=(0.0, 10.0, 20.0),
                      frames_per_cell=10, seed=3)
    frames = modem.generate_corpus(spec)
    assert len(frames) == 270
    for cls in ModulationClass:
        assert sum(1 for f in frames if f.label == cls) == 30


def test_generate_corpus_rejects_empty_classes():
    with pytest.raises(ConfigurationError):
        modem.generate_corpus(CorpusSpec(classes=()))


def test_generate_corpus_warns_outside_calibrated_range():
    with pytest.warns(UserWarning, match="outside"):
        modem.generate_corpus(CorpusSpec(classes=(ModulationClass.BPSK,), snr_grid=(40.0,),
                                         frames_per_cell=1))


def test_corpus_clean_sentinel_roundtrip(tmp_path):
    spec = CorpusSpec(classes=(ModulationClass.FM,), snr_grid=(math.inf, 10.0), frames_per_cell=2)
    frames = modem.generate_corpus(spec)
    path = tmp_path / "c.amci"
    corpusio.write_corpus(path, frames)
    back, names = corpusio.read_corpus(path)
    assert names == [c.name for c in ModulationClass]
    assert back[0].snr_db == math.inf and back[2].snr_db == 10.0


def test_corpus_rerun_is_byte_identical(tmp_path):
    spec = CorpusSpec(classes=(ModulationClass.QAM16,), snr_grid=(20.0,), frames_per_cell=1, seed=9)
    p1, p2 = tmp_path / "a.amci", tmp_path / "b.amci"
    corpusio.write_corpus(p1, modem.generate_corpus(spec))
    corpusio.write_corpus(p2, modem.generate_corpus(spec))
    assert p1.read_bytes() == p2.read_bytes()


def test_corpus_write_read_write_is_stable(tmp_path):
    spec = CorpusSpec(classes=(ModulationClass.GMSK, ModulationClass.BPSK),
                      snr_grid=(0.0,), frames_per_cell=2, seed=4)
    p1, p2 = tmp_path / "a.amci", tmp_path / "b.amci"
    corpusio.write_corpus(p1, modem.generate_corpus(spec))
    frames, _ = corpusio.read_corpus(p1)
    corpusio.write_corpus(p2, frames)
    assert p1.read_bytes() == p2.read_bytes()


def test_corpus_rejects_corrupt_header(tmp_path):
    path = tmp_path / "bad.amci"
    path.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(DataError, match="magic"):
        corpusio.read_corpus(path)


def test_unique_seeds_across_cells():
    spec = CorpusSpec(classes=(ModulationClass.BPSK, ModulationClass.FM),
                      snr_grid=(0.0, 10.0), frames_per_cell=3, seed=1)
    frames = modem.generate_corpus(spec)
    seeds = [f.seed for f in frames]
    assert len(set(seeds)) == len(seeds)
