"""Desk-scale synthetic tasks for exercising the trainer.

Both generators synthesize waveforms, instance-normalize them, and run
the mel front-end, so the trainer sees exactly what it would see on real
audio. Class priors are balanced by construction and every random draw
comes from the generator's rng argument.
"""

from __future__ import annotations

import numpy as np

from .learner import ToyTask
from .melfront import (
    MelConfig,
    Waveform,
    channels_per_octave,
    instance_normalize,
    mel_spectrogram,
)


def _to_mel(x: np.ndarray, sample_rate: int, cfg: MelConfig) -> np.ndarray:
    w = instance_normalize(Waveform(samples=x, sample_rate=sample_rate))
    return mel_spectrogram(w, cfg).values


def _balanced_labels(n: int, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    reps = -(-n // n_classes)
    labels = np.tile(np.arange(n_classes), reps)[:n]
    return labels[rng.permutation(n)]


def chirp_direction_task(
    size: int = 256,
    duration: float = 0.75,
    sample_rate: int = 16000,
    snr_db: float = 20.0,
    cfg: MelConfig = MelConfig(),
) -> ToyTask:
    """Up-sweep vs down-sweep FM tones in white noise (class 1 = up).

    Separable by construction: sweep direction is the sign of the ridge
    slope in the spectrogram, which maps to the sign of the temporal
    modulation of the best-matched filter.
    """
    n_samples = int(duration * sample_rate)
    t = np.arange(n_samples) / sample_rate

    def sample(n: int, rng: np.random.Generator):
        labels = _balanced_labels(n, 2, rng)
        feats = []
        for lab in labels:
            f_lo = rng.uniform(400.0, 900.0)
            f_hi = rng.uniform(3500.0, 6000.0)
            f0, f1 = (f_lo, f_hi) if lab == 1 else (f_hi, f_lo)
            inst_freq = f0 + (f1 - f0) * t / duration
            phase = 2 * np.pi * np.cumsum(inst_freq) / sample_rate
            x = np.sin(phase + rng.uniform(0, 2 * np.pi))
            noise_std = x.std() * 10.0 ** (-snr_db / 20.0)
            x = x + rng.standard_normal(n_samples) * noise_std
            feats.append(_to_mel(x, sample_rate, cfg))
        return np.stack(feats), labels

    return ToyTask(
        name="chirp-direction",
        n_classes=2,
        sample=sample,
        frame_rate=cfg.frame_rate,
        channels_per_octave=channels_per_octave(cfg),
        size=size,
    )


def low_modulation_task(
    size: int = 192,
    duration: float = 0.75,
    sample_rate: int = 16000,
    rates_hz: tuple = (3.0, 8.0, 24.0),
    depth: float = 0.9,
    cfg: MelConfig = MelConfig(),
) -> ToyTask:
    """Speech-like corpus: broadband noise amplitude-modulated at slow rates.

    The only discriminative cue is the temporal envelope rate, all of it
    well below 32 Hz, so a trained bank has to concentrate on low
    temporal and spectral modulations to solve the task.
    """
    n_samples = int(duration * sample_rate)
    t = np.arange(n_samples) / sample_rate
    rates = tuple(float(r) for r in rates_hz)

    def sample(n: int, rng: np.random.Generator):
        labels = _balanced_labels(n, len(rates), rng)
        feats = []
        for lab in labels:
            rate = rates[lab] * rng.uniform(0.9, 1.1)
            env = 1.0 + depth * np.cos(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
            x = env * rng.standard_normal(n_samples)
            feats.append(_to_mel(x, sample_rate, cfg))
        return np.stack(feats), labels

    return ToyTask(
        name="low-modulation",
        n_classes=len(rates),
        sample=sample,
        frame_rate=cfg.frame_rate,
        channels_per_octave=channels_per_octave(cfg),
        size=size,
    )


TASKS = {
    "chirp-direction": chirp_direction_task,
    "low-modulation": low_modulation_task,
}


def make_task(name: str, **kwargs) -> ToyTask:
    try:
        factory = TASKS[name]
    except KeyError:
        raise KeyError(
            f"unknown task {name!r}; available: {sorted(TASKS)}"
        ) from None
    return factory(**kwargs)
