"""Complex-baseband waveform synthesis and calibrated AWGN for nine schemes.

All waveforms are dimensionless unit-power baseband at an implicit unit
sample rate; every frame is exactly FRAME_LEN samples and deterministic
for a fixed (class, config, seed).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .errors import ConfigurationError, DataError

FRAME_LEN = 1024

CLEAN_SNR_DB = math.inf  # sentinel for noiseless frames


class ModulationClass(IntEnum):
    """The nine supported schemes; integer ids are stable across runs."""

    BPSK = 0
    QPSK = 1
    PSK8 = 2
    QAM16 = 3
    QAM64 = 4
    AM_DSB_SC = 5
    AM_SSB_SC = 6
    FM = 7
    GMSK = 8


@dataclass(frozen=True)
class SynthesisConfig:
    samples_per_symbol: int = 8
    rrc_rolloff: float = 0.35
    rrc_span_symbols: int = 8
    fm_deviation: float = 0.1      # peak deviation as a fraction of the sample rate
    gmsk_bt: float = 0.3
    am_message_tones: int = 3
    rng_seed: int = 0
    # Bypasses RRC shaping with a sample-and-hold pulse; constellation tests only.
    rectangular_pulse: bool = False

    def validate(self):
        if self.samples_per_symbol < 2:
            raise ConfigurationError(f"samples_per_symbol must be >= 2, got {self.samples_per_symbol}")
        if not 0.0 < self.rrc_rolloff <= 1.0:
            raise ConfigurationError(f"rrc_rolloff must be in (0, 1], got {self.rrc_rolloff}")
        if self.rrc_span_symbols < 1:
            raise ConfigurationError(f"rrc_span_symbols must be >= 1, got {self.rrc_span_symbols}")
        if self.fm_deviation <= 0:
            raise ConfigurationError(f"fm_deviation must be positive, got {self.fm_deviation}")
        if self.gmsk_bt <= 0:
            raise ConfigurationError(f"gmsk_bt must be positive, got {self.gmsk_bt}")
        if self.am_message_tones < 1:
            raise ConfigurationError(f"am_message_tones must be >= 1, got {self.am_message_tones}")


@dataclass(frozen=True)
class IqFrame:
    """One labeled signal instance: FRAME_LEN complex samples + label + SNR tag."""

    samples: np.ndarray
    label: ModulationClass
    snr_db: float
    seed: int

    def __post_init__(self):
        if self.samples.shape != (FRAME_LEN,):
            raise DataError(f"frame must hold exactly {FRAME_LEN} samples, got {self.samples.shape}")

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


# ---------------------------------------------------------------------------
# constellations and filter taps


def _psk_points(order: int) -> np.ndarray:
    k = np.arange(order)
    if order == 4:
        return np.exp(1j * (np.pi / 4 + np.pi / 2 * k))
    return np.exp(2j * np.pi * k / order)


def _qam_points(order: int) -> np.ndarray:
    side = int(round(math.sqrt(order)))
    levels = np.arange(-(side - 1), side, 2, dtype=np.float64)
    grid = (levels[:, None] + 1j * levels[None, :]).ravel()
    return grid / np.sqrt(np.mean(np.abs(grid) ** 2))


_CONSTELLATIONS = {
    ModulationClass.BPSK: np.array([1.0 + 0j, -1.0 + 0j]),
    ModulationClass.QPSK: _psk_points(4),
    ModulationClass.PSK8: _psk_points(8),
    ModulationClass.QAM16: _qam_points(16),
    ModulationClass.QAM64: _qam_points(64),
}

DIGITAL_CLASSES = tuple(_CONSTELLATIONS)
ANALOG_CLASSES = (ModulationClass.AM_DSB_SC, ModulationClass.AM_SSB_SC, ModulationClass.FM)


def constellation(cls: ModulationClass) -> np.ndarray:
    return _CONSTELLATIONS[cls].copy()


def rrc_taps(sps: int, rolloff: float, span: int) -> np.ndarray:
    """Root-raised-cosine taps over `span` symbols, unit energy."""
    n = span * sps + 1
    t = (np.arange(n) - (n - 1) / 2) / sps
    taps = np.empty(n)
    beta = rolloff
    for idx, ti in enumerate(t):
        if abs(ti) < 1e-12:
            taps[idx] = 1.0 - beta + 4.0 * beta / np.pi
        elif abs(abs(ti) - 1.0 / (4.0 * beta)) < 1e-12:
            taps[idx] = (beta / np.sqrt(2.0)) * (
                (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * beta))
                + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * beta))
            )
        else:
            num = np.sin(np.pi * ti * (1.0 - beta)) + 4.0 * beta * ti * np.cos(np.pi * ti * (1.0 + beta))
            den = np.pi * ti * (1.0 - (4.0 * beta * ti) ** 2)
            taps[idx] = num / den
    return taps / np.linalg.norm(taps)


def gaussian_taps(sps: int, bt: float, span: int = 4) -> np.ndarray:
    """Gaussian lowpass impulse response used by the GMSK frequency pulse."""
    n = span * sps + 1
    t = (np.arange(n) - (n - 1) / 2) / sps
    taps = np.exp(-2.0 * np.pi**2 * bt**2 * t**2 / np.log(2.0))
    return taps / taps.sum()


def hilbert_taps(n: int = 129) -> np.ndarray:
    """Type-III FIR Hilbert transformer (odd length, Hamming-windowed)."""
    mid = (n - 1) // 2
    k = np.arange(n) - mid
    taps = np.zeros(n)
    odd = k % 2 != 0
    taps[odd] = 2.0 / (np.pi * k[odd])
    return taps * np.hamming(n)


# ---------------------------------------------------------------------------
# per-scheme synthesis


def _multitone_message(rng: np.random.Generator, length: int, tones: int) -> np.ndarray:
    """Random multi-tone message, peak-normalized to 1."""
    freqs = rng.uniform(0.03, 0.15, size=tones)
    amps = rng.uniform(0.5, 1.0, size=tones)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=tones)
    n = np.arange(length)
    msg = np.zeros(length)
    for f, a, p in zip(freqs, amps, phases):
        msg += a * np.cos(2.0 * np.pi * f * n + p)
    return msg / np.max(np.abs(msg))


def _linear_digital(cls: ModulationClass, cfg: SynthesisConfig, rng: np.random.Generator) -> np.ndarray:
    points = _CONSTELLATIONS[cls]
    sps = cfg.samples_per_symbol
    if cfg.rectangular_pulse:
        n_sym = -(-FRAME_LEN // sps)
        symbols = points[rng.integers(0, len(points), size=n_sym)]
        return np.repeat(symbols, sps)[:FRAME_LEN]
    span = cfg.rrc_span_symbols
    n_sym = -(-FRAME_LEN // sps) + 2 * span
    symbols = points[rng.integers(0, len(points), size=n_sym)]
    upsampled = np.zeros(n_sym * sps, dtype=np.complex128)
    upsampled[::sps] = symbols
    shaped = np.convolve(upsampled, rrc_taps(sps, cfg.rrc_rolloff, span))
    start = span * sps  # past group delay and the leading ramp
    return shaped[start:start + FRAME_LEN]


def _gmsk(cfg: SynthesisConfig, rng: np.random.Generator) -> np.ndarray:
    sps = cfg.samples_per_symbol
    pulse = np.convolve(gaussian_taps(sps, cfg.gmsk_bt), np.ones(sps))
    pulse /= pulse.sum()  # each bit contributes exactly pi/2 of phase
    lead = len(pulse) // sps + 2
    n_sym = -(-FRAME_LEN // sps) + 2 * lead
    bits = rng.integers(0, 2, size=n_sym) * 2.0 - 1.0
    train = np.zeros(n_sym * sps)
    train[::sps] = bits
    freq = np.convolve(train, pulse)
    phase = (np.pi / 2.0) * np.cumsum(freq)
    return np.exp(1j * phase)[lead * sps:lead * sps + FRAME_LEN]


def _fm(cfg: SynthesisConfig, rng: np.random.Generator) -> np.ndarray:
    msg = _multitone_message(rng, FRAME_LEN, cfg.am_message_tones)
    phase = 2.0 * np.pi * cfg.fm_deviation * np.cumsum(msg)
    return np.exp(1j * phase)


def _am_dsb_sc(cfg: SynthesisConfig, rng: np.random.Generator) -> np.ndarray:
    return _multitone_message(rng, FRAME_LEN, cfg.am_message_tones).astype(np.complex128)


def _am_ssb_sc(cfg: SynthesisConfig, rng: np.random.Generator) -> np.ndarray:
    taps = hilbert_taps(129)
    delay = (len(taps) - 1) // 2
    pad = len(taps)  # trimmed from both ends to drop filter transients
    msg = _multitone_message(rng, FRAME_LEN + 2 * pad, cfg.am_message_tones)
    quad = np.convolve(msg, taps)[delay:delay + len(msg)]
    analytic = msg + 1j * quad
    return analytic[pad:pad + FRAME_LEN]


def synthesize(cls: ModulationClass, cfg: SynthesisConfig, seed: int) -> IqFrame:
    """Noiseless unit-power frame for one scheme; snr_db is the clean sentinel."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    if cls in _CONSTELLATIONS:
        samples = _linear_digital(cls, cfg, rng)
    elif cls == ModulationClass.GMSK:
        samples = _gmsk(cfg, rng)
    elif cls == ModulationClass.FM:
        samples = _fm(cfg, rng)
    elif cls == ModulationClass.AM_DSB_SC:
        samples = _am_dsb_sc(cfg, rng)
    elif cls == ModulationClass.AM_SSB_SC:
        samples = _am_ssb_sc(cfg, rng)
    else:
        raise ConfigurationError(f"unknown modulation class {cls!r}")
    samples = np.asarray(samples, dtype=np.complex128)
    samples /= np.sqrt(np.mean(np.abs(samples) ** 2))
    return IqFrame(samples=samples, label=cls, snr_db=CLEAN_SNR_DB, seed=int(seed))


def symbol_instants(cfg: SynthesisConfig) -> np.ndarray:
    """Sample indices of symbol centers under the rectangular-pulse override."""
    sps = cfg.samples_per_symbol
    return np.arange(FRAME_LEN // sps) * sps + sps // 2


def apply_awgn(frame: IqFrame, snr_db: float, seed: int) -> IqFrame:
    """Add circularly-symmetric complex Gaussian noise at the requested SNR.

    Noise variance is measured-signal-power / 10^(snr_db/10) per complex
    sample; a +inf target returns the input unchanged (zero noise).
    """
    if not np.all(np.isfinite(frame.samples.view(np.float64))):
        raise DataError("frame contains non-finite samples")
    if math.isnan(snr_db) or (math.isinf(snr_db) and snr_db < 0):
        raise DataError(f"snr_db must be finite or +inf, got {snr_db}")
    if math.isinf(snr_db):
        return replace(frame, snr_db=CLEAN_SNR_DB)
    power = frame.mean_power()
    sigma2 = power / (10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    noise = np.sqrt(sigma2 / 2.0) * (rng.standard_normal(FRAME_LEN) + 1j * rng.standard_normal(FRAME_LEN))
    return replace(frame, samples=frame.samples + noise, snr_db=float(snr_db))


# ---------------------------------------------------------------------------
# corpus generation


@dataclass(frozen=True)
class CorpusSpec:
    classes: tuple = tuple(ModulationClass)
    snr_grid: tuple = (0.0, 10.0, 20.0)
    frames_per_cell: int = 10
    cfg: SynthesisConfig = field(default_factory=SynthesisConfig)
    seed: int = 0

    def validate(self):
        if len(self.classes) == 0:
            raise ConfigurationError("corpus needs at least one modulation class")
        if len(self.snr_grid) == 0:
            raise ConfigurationError("corpus needs at least one SNR value")
        if self.frames_per_cell < 1:
            raise ConfigurationError(f"frames_per_cell must be >= 1, got {self.frames_per_cell}")
        self.cfg.validate()
        for snr in self.snr_grid:
            if math.isfinite(snr) and not 0.0 <= snr <= 30.0:
                warnings.warn(f"SNR {snr} dB is outside the calibrated 0..30 dB range", stacklevel=3)


def frame_seeds(master_seed: int, class_id: int, snr_index: int, frame_index: int) -> tuple:
    """Deterministic (synthesis, noise) seed pair, unique per corpus cell entry."""
    ss = np.random.SeedSequence([int(master_seed), int(class_id), int(snr_index), int(frame_index)])
    synth, noise = ss.generate_state(2, np.uint64)
    return int(synth), int(noise)


def generate_corpus(spec: CorpusSpec) -> list:
    """All |classes| x |snr_grid| x frames_per_cell frames, class-balanced."""
    spec.validate()
    frames = []
    for cls in spec.classes:
        for snr_index, snr in enumerate(spec.snr_grid):
            for k in range(spec.frames_per_cell):
                synth_seed, noise_seed = frame_seeds(spec.seed, int(cls), snr_index, k)
                frame = synthesize(cls, spec.cfg, synth_seed)
                if math.isfinite(snr):
                    frame = apply_awgn(frame, snr, noise_seed)
                frames.append(frame)
    return frames
