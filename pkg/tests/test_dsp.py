"""Tests for the signal-processing layer.

Expected values are computed from first principles in the test body (direct
DCT summation, per-frame Parseval sums, bin arithmetic) rather than recorded
from the implementation under test.
"""

import struct

import numpy as np
import pytest

from emoforge.dsp import (
    HOP,
    N_FFT,
    N_MELS,
    MelSpectrogram,
    Waveform,
    griffin_lim,
    hann_window,
    istft,
    mel_cepstra,
    mel_filterbank,
    mel_read,
    mel_spectrogram,
    mel_to_linear,
    mel_write,
    stft,
    wav_read,
    wav_write,
)
from emoforge.errors import FormatError, InvalidInputError, ShapeError
from emoforge.numeric import rng_stream


def _noise_wave(seed_name, n=16000, amp=0.4):
    rng = rng_stream(7, seed_name)
    return Waveform(samples=amp * rng.standard_normal(n) / 3.0, sample_rate=16000)


# -- WAV I/O ---------------------------------------------------------------

def test_wav_round_trip(tmp_path):
    rng = rng_stream(7, "wav")
    w = Waveform(samples=rng.uniform(-1.0, 1.0, 5000), sample_rate=16000)
    path = tmp_path / "a.wav"
    wav_write(path, w)
    back = wav_read(path)
    assert back.sample_rate == 16000
    assert back.samples.shape == (5000,)
    # 16-bit quantization with symmetric 1/32768 scaling
    assert np.max(np.abs(back.samples - w.samples)) <= 2.0 ** -15


def test_wav_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"JUNK" + b"\x00" * 40)
    with pytest.raises(FormatError) as e:
        wav_read(path)
    assert e.value.offset == 0


def test_wav_rejects_missing_wave_tag(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"RIFF" + struct.pack("<I", 36) + b"XXXX" + b"\x00" * 28)
    with pytest.raises(FormatError) as e:
        wav_read(path)
    assert e.value.offset == 8


def test_wav_rejects_stereo_and_nonpcm(tmp_path):
    def header(audio_format, channels):
        return struct.pack(
            "<4sI4s4sIHHIIHH4sI",
            b"RIFF", 40, b"WAVE",
            b"fmt ", 16, audio_format, channels, 16000, 64000, 4, 16,
            b"data", 4,
        ) + b"\x00" * 4

    stereo = tmp_path / "stereo.wav"
    stereo.write_bytes(header(1, 2))
    with pytest.raises(FormatError, match="mono"):
        wav_read(stereo)

    nonpcm = tmp_path / "float.wav"
    nonpcm.write_bytes(header(3, 1))
    with pytest.raises(FormatError, match="PCM"):
        wav_read(nonpcm)


def test_wav_rejects_truncated(tmp_path):
    path = tmp_path / "t.wav"
    wav_write(path, Waveform(samples=np.zeros(100), sample_rate=16000))
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 50])
    with pytest.raises(FormatError) as e:
        wav_read(path)
    assert e.value.offset is not None


# -- mel dump --------------------------------------------------------------

def test_mel_dump_round_trip(tmp_path):
    rng = rng_stream(7, "meldump")
    m = MelSpectrogram(frames=rng.standard_normal((17, 40)), sample_rate=16000, hop=128)
    path = tmp_path / "m.mel"
    mel_write(path, m)
    back = mel_read(path)
    assert back.frames.shape == (17, 40)
    assert np.array_equal(back.frames, m.frames.astype(np.float32).astype(np.float64))

    path.write_bytes(path.read_bytes()[:30])
    with pytest.raises(FormatError):
        mel_read(path)


# -- STFT / ISTFT ----------------------------------------------------------

def test_stft_sine_peak_bin():
    # 1 kHz at 16 kHz with n_fft=512 lands exactly on bin 1000/16000*512 = 32
    t = np.arange(16000) / 16000.0
    w = Waveform(samples=0.5 * np.sin(2 * np.pi * 1000.0 * t), sample_rate=16000)
    spec = np.abs(stft(w))
    interior = spec[10:-10]
    assert np.all(np.argmax(interior, axis=1) == 32)


def test_stft_frame_count():
    w = _noise_wave("frames", n=16000)
    assert stft(w).shape == (1 + 16000 // HOP, N_FFT // 2 + 1)


def test_stft_round_trip_exact_multiple():
    w = _noise_wave("rt", n=4096)
    out = istft(stft(w), length=4096)
    assert np.max(np.abs(out - w.samples)) < 1e-6


def test_stft_round_trip_sine_with_padding():
    t = np.arange(5000) / 16000.0
    x = 0.3 * np.sin(2 * np.pi * 440.0 * t)
    out = istft(stft(Waveform(samples=x, sample_rate=16000)), length=5000)
    # last partial hop is zero-padded, so compare the covered region
    covered = (5000 // HOP) * HOP
    assert np.max(np.abs(out[:covered] - x[:covered])) < 1e-6


def test_stft_too_short_raises():
    with pytest.raises(InvalidInputError):
        stft(Waveform(samples=np.zeros(100) + 0.1, sample_rate=16000))


def test_stft_rejects_bad_sizes():
    w = _noise_wave("bad", n=2000)
    with pytest.raises(InvalidInputError):
        stft(w, n_fft=500)
    with pytest.raises(InvalidInputError):
        stft(w, n_fft=512, hop=1024)


def test_istft_rejects_wrong_width():
    with pytest.raises(ShapeError):
        istft(np.zeros((10, 100), dtype=complex))


def test_stft_parseval_per_frame():
    w = _noise_wave("parseval", n=4096)
    spec = stft(w)
    win = hann_window(N_FFT)
    x = np.pad(w.samples, N_FFT // 2, mode="reflect")
    weights = np.full(N_FFT // 2 + 1, 2.0)
    weights[0] = weights[-1] = 1.0
    for t in range(spec.shape[0]):
        frame = x[t * HOP:t * HOP + N_FFT] * win
        lhs = np.sum(weights * np.abs(spec[t]) ** 2)
        rhs = N_FFT * np.sum(frame ** 2)
        assert abs(lhs - rhs) <= 1e-9 * max(rhs, 1.0)


# -- mel filterbank and spectrogram -----------------------------------------

def test_filterbank_covers_every_bin():
    fb = mel_filterbank()
    assert fb.shape == (N_MELS, N_FFT // 2 + 1)
    assert np.all(fb >= 0.0)
    # every bin from 0 Hz through Nyquist (= fmax) gets weight somewhere
    assert np.all(fb.sum(axis=0) > 0.0)


def test_filterbank_peaks_are_ordered():
    fb = mel_filterbank()
    peaks = np.argmax(fb, axis=1)
    assert np.all(np.diff(peaks) >= 1)


def test_mel_amplitude_doubling_adds_log4():
    w = _noise_wave("double")
    m1 = mel_spectrogram(w)
    m2 = mel_spectrogram(Waveform(samples=2.0 * w.samples, sample_rate=16000))
    diff = m2.frames - m1.frames
    assert np.max(np.abs(diff - np.log(4.0))) < 1e-6


def test_mel_spectrogram_shape_and_determinism():
    w = _noise_wave("shape", n=16000)
    m = mel_spectrogram(w)
    assert m.frames.shape == (126, N_MELS)
    again = mel_spectrogram(w)
    assert np.array_equal(m.frames, again.frames)


# -- mel cepstra -------------------------------------------------------------

def test_mel_cepstra_matches_direct_dct_sum():
    rng = rng_stream(7, "dct")
    frames = rng.standard_normal((5, 8))
    got = mel_cepstra(MelSpectrogram(frames=frames, sample_rate=16000, hop=128), n_coeffs=8)
    n = 8
    for t in range(5):
        for k in range(n):
            scale = np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
            ref = scale * sum(
                frames[t, j] * np.cos(np.pi * k * (2 * j + 1) / (2.0 * n)) for j in range(n)
            )
            assert abs(got[t, k] - ref) < 1e-10


def test_mel_cepstra_rejects_too_many_coeffs():
    m = MelSpectrogram(frames=np.zeros((3, 40)), sample_rate=16000, hop=128)
    with pytest.raises(ShapeError):
        mel_cepstra(m, n_coeffs=41)


def test_gain_change_moves_only_c0():
    w = _noise_wave("gain")
    c1 = mel_cepstra(mel_spectrogram(w), n_coeffs=14)
    c2 = mel_cepstra(mel_spectrogram(Waveform(samples=1.5 * w.samples, sample_rate=16000)), n_coeffs=14)
    diff = c2 - c1
    # a uniform log-power shift is carried entirely by the DCT DC term
    assert np.max(np.abs(diff[:, 1:])) < 1e-6
    expected_c0 = np.sqrt(N_MELS) * 2.0 * np.log(1.5)
    assert np.max(np.abs(diff[:, 0] - expected_c0)) < 1e-4


# -- Griffin-Lim -------------------------------------------------------------

def _gl_target():
    t = np.arange(8192) / 16000.0
    rng = rng_stream(7, "gl")
    x = 0.25 * np.sin(2 * np.pi * 330.0 * t) + 0.05 * rng.standard_normal(t.size)
    return mel_spectrogram(Waveform(samples=x, sample_rate=16000))


def test_griffin_lim_residual_non_increasing():
    m = _gl_target()
    mag = mel_to_linear(m)
    residuals = []
    for iters in (1, 2, 4, 8, 16):
        w = griffin_lim(m, iters=iters)
        rebuilt = np.abs(stft(w))
        residuals.append(np.linalg.norm(mag - rebuilt) / np.linalg.norm(mag))
    for a, b in zip(residuals, residuals[1:]):
        assert b <= a + 1e-9


def test_griffin_lim_deterministic_and_sized():
    m = _gl_target()
    w1 = griffin_lim(m, iters=4)
    w2 = griffin_lim(m, iters=4)
    assert np.array_equal(w1.samples, w2.samples)
    assert w1.samples.size == (m.frames.shape[0] - 1) * m.hop
    assert w1.sample_rate == 16000


def test_griffin_lim_rejects_zero_iters():
    with pytest.raises(InvalidInputError):
        griffin_lim(_gl_target(), iters=0)
