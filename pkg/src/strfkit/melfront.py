"""Waveform to normalized log-mel spectrogram conversion.

Pipeline: per-excerpt instance normalization of the raw waveform, then a
windowed power STFT (25 ms Hann window, 10 ms hop by default) projected
on a triangular mel filterbank and log-compressed with a floor. 64
channels over 0-8000 Hz at a 16 kHz sample rate give the 100 frames/s
representation the 9x111 kernel grid is sized for.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from . import defaults
from .errors import InvalidConfig, InvalidInput


@dataclass(frozen=True)
class Waveform:
    """Mono audio samples plus their sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise InvalidInput("waveform must be a non-empty 1-D sample array")
        if self.sample_rate <= 0:
            raise InvalidInput(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class MelConfig:
    n_mels: int = defaults.N_MELS
    f_min: float = defaults.F_MIN_HZ
    f_max: float = defaults.F_MAX_HZ
    window_length: float = defaults.WINDOW_LENGTH_S
    hop_length: float = defaults.HOP_LENGTH_S
    fft_size: int | None = None
    log_floor: float = defaults.LOG_FLOOR

    def __post_init__(self):
        if self.n_mels < 2:
            raise InvalidConfig(f"n_mels must be >= 2, got {self.n_mels}")
        if not 0 <= self.f_min < self.f_max:
            raise InvalidConfig(
                f"need 0 <= f_min < f_max, got ({self.f_min}, {self.f_max})"
            )
        if self.hop_length > self.window_length:
            raise InvalidConfig("hop_length must not exceed window_length")
        if self.hop_length <= 0:
            raise InvalidConfig("hop_length must be positive")
        if self.log_floor <= 0:
            raise InvalidConfig("log_floor must be positive")

    def window_samples(self, sample_rate: int) -> int:
        return int(round(self.window_length * sample_rate))

    def hop_samples(self, sample_rate: int) -> int:
        return int(round(self.hop_length * sample_rate))

    def resolved_fft_size(self, sample_rate: int) -> int:
        if self.fft_size is not None:
            return self.fft_size
        return 1 << max(1, math.ceil(math.log2(self.window_samples(sample_rate))))

    @property
    def frame_rate(self) -> float:
        return 1.0 / self.hop_length


@dataclass(frozen=True)
class MelSpectrogram:
    """Log-mel matrix [n_frames, n_mels] with its physical axes."""

    values: np.ndarray
    frame_rate: float
    mel_centers: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        centers = np.asarray(self.mel_centers, dtype=float)
        if values.ndim != 2:
            raise InvalidInput("mel spectrogram must be 2-D [frames, mels]")
        if centers.shape != (values.shape[1],):
            raise InvalidInput("mel_centers length must match channel count")
        if np.any(np.diff(centers) <= 0):
            raise InvalidInput("mel_centers must be strictly increasing")
        if not np.isfinite(values).all():
            raise InvalidInput("mel spectrogram contains non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mel_centers", centers)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def instance_normalize(w: Waveform, epsilon: float = defaults.NORM_EPSILON) -> Waveform:
    """Standardize one excerpt to zero mean, unit variance.

    out = (x - mean(x)) / sqrt(var(x) + epsilon); an all-constant
    excerpt comes back as all zeros rather than an error.
    """
    if epsilon <= 0:
        raise InvalidConfig(f"epsilon must be positive, got {epsilon}")
    x = w.samples
    out = (x - x.mean()) / np.sqrt(x.var() + epsilon)
    return Waveform(samples=out, sample_rate=w.sample_rate)


def mel_filterbank_matrix(cfg: MelConfig, sample_rate: int) -> np.ndarray:
    """Triangular mel filterbank, shape [n_mels, fft_size//2 + 1].

    Band edges sit at n_mels + 2 uniformly spaced mel points between
    f_min and f_max; row m is the triangle peaking at the (m+1)-th point.
    """
    if cfg.f_max > sample_rate / 2:
        raise InvalidConfig(
            f"f_max={cfg.f_max} exceeds Nyquist {sample_rate / 2}"
        )
    n_fft = cfg.resolved_fft_size(sample_rate)
    n_bins = n_fft // 2 + 1
    freqs = np.linspace(0.0, sample_rate / 2, n_bins)
    hz_pts = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2))
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        lo, center, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def mel_center_frequencies(cfg: MelConfig) -> np.ndarray:
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2))
    return edges[1:-1]


def channels_per_octave(cfg: MelConfig = MelConfig()) -> float:
    """Mel-channel density per octave at the centers' geometric mean.

    The mel scale is only quasi-logarithmic, so channels/octave varies
    with frequency; this picks the density at the geometric mean of the
    center frequencies as the single conversion constant. Callers record
    the value in their report files.
    """
    centers = mel_center_frequencies(cfg)
    g = float(np.exp(np.mean(np.log(centers))))
    mel_step = (hz_to_mel(cfg.f_max) - hz_to_mel(cfg.f_min)) / (cfg.n_mels + 1)
    mel_per_octave = 2595.0 * math.log(2.0) * g / (math.log(10.0) * (700.0 + g))
    return mel_per_octave / mel_step


def mel_spectrogram(w: Waveform, cfg: MelConfig = MelConfig()) -> MelSpectrogram:
    """Windowed power STFT -> mel projection -> floored log compression.

    Frames: n_frames = 1 + floor((len - window) / hop); the caller is
    expected to have instance-normalized the waveform already.
    """
    sr = w.sample_rate
    win = cfg.window_samples(sr)
    hop = cfg.hop_samples(sr)
    x = w.samples
    if x.size < win:
        raise InvalidInput(
            f"waveform of {x.size} samples is shorter than one "
            f"{win}-sample window"
        )
    n_fft = cfg.resolved_fft_size(sr)
    if n_fft < win:
        raise InvalidConfig(f"fft_size={n_fft} smaller than window={win}")
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop]
    spectra = np.fft.rfft(frames * np.hanning(win), n=n_fft, axis=1)
    power = spectra.real**2 + spectra.imag**2
    fb = mel_filterbank_matrix(cfg, sr)
    mel_energy = power @ fb.T
    values = np.log(np.maximum(mel_energy, cfg.log_floor))
    return MelSpectrogram(
        values=values,
        frame_rate=sr / hop,
        mel_centers=mel_center_frequencies(cfg),
    )


def load_wav(path, expected_sample_rate: int | None = None) -> Waveform:
    """Read a PCM 16-bit / 32-bit float WAV; stereo is averaged to mono.

    Resampling is out of scope: a sample rate other than
    expected_sample_rate is an error.
    """
    try:
        sr, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise InvalidInput(f"cannot read WAV file {path}: {exc}") from exc
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        samples = data / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(float) - 128.0) / 128.0
    else:
        samples = data.astype(float)
    if expected_sample_rate is not None and sr != expected_sample_rate:
        raise InvalidInput(
            f"{path}: sample rate {sr} != expected {expected_sample_rate} "
            f"(resampling is not supported)"
        )
    return Waveform(samples=samples, sample_rate=int(sr))


def save_wav(w: Waveform, path) -> None:
    wavfile.write(path, w.sample_rate, w.samples.astype(np.float32))


MEL_MAGIC = b"STRF"
MEL_VERSION = 1
_MEL_HEADER = struct.Struct("<4sHIHf")  # magic, version, n_frames, n_mels, frame_rate


def save_mel_binary(mel: MelSpectrogram, path) -> None:
    """Compact binary: 16-byte header, float32 values, float32 centers."""
    header = _MEL_HEADER.pack(
        MEL_MAGIC, MEL_VERSION, mel.n_frames, mel.n_mels, mel.frame_rate
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(mel.values.astype(np.float32).tobytes())
        fh.write(mel.mel_centers.astype(np.float32).tobytes())


def load_mel_binary(path) -> MelSpectrogram:
    with open(path, "rb") as fh:
        raw = fh.read(_MEL_HEADER.size)
        if len(raw) < _MEL_HEADER.size:
            raise InvalidInput(f"{path}: truncated header")
        magic, version, n_frames, n_mels, frame_rate = _MEL_HEADER.unpack(raw)
        if magic != MEL_MAGIC:
            raise InvalidInput(f"{path}: not an STRF mel file")
        if version != MEL_VERSION:
            raise InvalidInput(f"{path}: unsupported version {version}")
        values = np.frombuffer(fh.read(4 * n_frames * n_mels), dtype=np.float32)
        centers = np.frombuffer(fh.read(4 * n_mels), dtype=np.float32)
    if values.size != n_frames * n_mels or centers.size != n_mels:
        raise InvalidInput(f"{path}: truncated payload")
    return MelSpectrogram(
        values=values.astype(float).reshape(n_frames, n_mels),
        frame_rate=float(frame_rate),
        mel_centers=centers.astype(float),
    )


def save_mel_csv(mel: MelSpectrogram, path, manifest_name: str | None = None) -> None:
    """CSV with one frame per row; axes ride along as comment headers."""
    header_lines = [
        f"strfkit mel spectrogram v{MEL_VERSION}",
        f"frame_rate={float(mel.frame_rate)!r}",
        "mel_centers=" + ",".join(repr(float(c)) for c in mel.mel_centers),
    ]
    if manifest_name:
        header_lines.append(f"manifest={manifest_name}")
    np.savetxt(path, mel.values, delimiter=",", header="\n".join(header_lines))


def load_mel_csv(path) -> MelSpectrogram:
    frame_rate = None
    centers = None
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if body.startswith("frame_rate="):
                frame_rate = float(body.split("=", 1)[1])
            elif body.startswith("mel_centers="):
                centers = np.array(
                    [float(v) for v in body.split("=", 1)[1].split(",")]
                )
    if frame_rate is None or centers is None:
        raise InvalidInput(f"{path}: missing frame_rate / mel_centers headers")
    values = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return MelSpectrogram(values=values, frame_rate=frame_rate, mel_centers=centers)
