"""Apply a bank of complex Gabor kernels to a mel spectrogram.

The output tensor Z(t, f, k) is the true 2-D convolution (kernel flipped)
of the spectrogram with each kernel, zero-padded to keep the input frame
grid. Two execution paths exist: a direct-summation core (compiled when
available, see _convdispatch) and an FFT path; apply_bank picks one by
estimated work unless told otherwise. The direct path doubles as the
correctness oracle for the FFT path.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _fftconv
from ._convdispatch import USING_COMPILED, direct_conv_bank
from .errors import InvalidInput
from .gaborkit import FilterBank, KernelGrid, gabor_kernel

# Direct wins below this many multiply-accumulates (see benchmarks/bench_conv.py).
DIRECT_FFT_CROSSOVER = 1.0e5


class OutputMode(Enum):
    """Real view of the complex feature map fed to downstream models."""

    REAL = "real"
    IMAG = "imag"
    MAGNITUDE = "magnitude"
    CONCAT_RE_IM = "concat_re_im"

    @classmethod
    def from_string(cls, name: str) -> "OutputMode":
        try:
            return cls(name.lower())
        except ValueError:
            raise InvalidInput(
                f"unknown output mode {name!r}; choose from "
                f"{[m.value for m in cls]}"
            ) from None


@dataclass(frozen=True)
class FeatureMap:
    """Complex response tensor [n_frames, n_mels, n_filters]."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3:
            raise InvalidInput("feature map must be [frames, mels, filters]")
        if not np.isfinite(self.values).all():
            raise InvalidInput("feature map contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]

    @property
    def n_filters(self) -> int:
        return self.values.shape[2]


def _as_matrix(Y) -> np.ndarray:
    values = np.asarray(getattr(Y, "values", Y), dtype=float)
    if values.ndim != 2:
        raise InvalidInput("spectrogram must be a 2-D [frames, mels] matrix")
    return values


def stack_kernels(bank, grid: KernelGrid) -> np.ndarray:
    if isinstance(bank, FilterBank):
        return bank.kernels()
    kernels = [gabor_kernel(p, grid) for p in bank]
    if not kernels:
        raise InvalidInput("filter bank is empty")
    return np.stack(kernels)


def choose_method(n_frames, n_mels, n_time, n_freq, n_filters) -> str:
    work = float(n_frames) * n_mels * n_time * n_freq * n_filters
    return "direct" if work < DIRECT_FFT_CROSSOVER else "fft"


def apply_bank(Y, bank, grid: KernelGrid | None = None, method: str = "auto") -> FeatureMap:
    """Convolve a spectrogram with every kernel of a bank.

    Y: MelSpectrogram or [n_frames, n_mels] array. bank: FilterBank or
    sequence of GaborParams (grid required in the latter case).
    method: "auto" | "direct" | "fft".
    """
    values = _as_matrix(Y)
    if isinstance(bank, FilterBank):
        grid = bank.grid
    elif grid is None:
        raise InvalidInput("grid is required when bank is a parameter list")
    kernels = stack_kernels(bank, grid)
    T, M = values.shape
    if T < 1:
        raise InvalidInput("spectrogram has no frames")
    if M < grid.n_freq:
        raise InvalidInput(
            f"spectrogram has {M} channels but the kernel grid needs at "
            f"least {grid.n_freq}"
        )
    if method == "auto":
        method = choose_method(T, M, grid.n_time, grid.n_freq, len(kernels))
    if method == "direct":
        ht, hf = grid.half_time, grid.half_freq
        ypad = np.zeros((T + 2 * ht, M + 2 * hf))
        ypad[ht : ht + T, hf : hf + M] = values
        Z = direct_conv_bank(ypad, np.ascontiguousarray(kernels), T, M)
    elif method == "fft":
        Z = _fftconv.conv_same(values, kernels)
    else:
        raise InvalidInput(f"unknown convolution method {method!r}")
    return FeatureMap(values=np.ascontiguousarray(Z))


def project(Z, mode: OutputMode) -> np.ndarray:
    """Real view of a feature map; CONCAT_RE_IM doubles the channel axis."""
    values = Z.values if isinstance(Z, FeatureMap) else np.asarray(Z)
    if isinstance(mode, str):
        mode = OutputMode.from_string(mode)
    if mode is OutputMode.REAL:
        return values.real.copy()
    if mode is OutputMode.IMAG:
        return values.imag.copy()
    if mode is OutputMode.MAGNITUDE:
        return np.abs(values)
    if mode is OutputMode.CONCAT_RE_IM:
        return np.concatenate([values.real, values.imag], axis=-2)
    raise InvalidInput(f"unknown output mode {mode!r}")


FEATUREMAP_MAGIC = b"STRZ"
FEATUREMAP_VERSION = 1
_HEADER = struct.Struct("<4sBBIHHxx")  # magic, version, mode, frames, mels, filters
_MODE_CODES = {
    None: 0,
    OutputMode.REAL: 1,
    OutputMode.IMAG: 2,
    OutputMode.MAGNITUDE: 3,
    OutputMode.CONCAT_RE_IM: 4,
}
_CODE_MODES = {v: k for k, v in _MODE_CODES.items()}


def save_featuremap(fm: FeatureMap, path, mode: OutputMode | None = None) -> None:
    """Write the STRZ binary; mode=None stores the raw complex tensor."""
    if mode is None:
        data = fm.values.astype(np.complex64)
        shape = fm.values.shape
    else:
        data = project(fm, mode).astype(np.float32)
        shape = data.shape
    header = _HEADER.pack(
        FEATUREMAP_MAGIC,
        FEATUREMAP_VERSION,
        _MODE_CODES[mode],
        shape[0],
        shape[1],
        shape[2],
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data).tobytes())


def load_featuremap(path):
    """Read an STRZ file -> (array, mode); mode None means complex."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise InvalidInput(f"{path}: truncated header")
        magic, version, mode_code, n_frames, n_mels, n_filters = _HEADER.unpack(raw)
        if magic != FEATUREMAP_MAGIC:
            raise InvalidInput(f"{path}: not an STRZ file")
        if version != FEATUREMAP_VERSION:
            raise InvalidInput(f"{path}: unsupported version {version}")
        mode = _CODE_MODES.get(mode_code)
        if mode_code not in _CODE_MODES:
            raise InvalidInput(f"{path}: unknown mode code {mode_code}")
        dtype = np.complex64 if mode is None else np.float32
        data = np.frombuffer(fh.read(), dtype=dtype)
    return data.reshape(n_frames, n_mels, n_filters).copy(), mode


__all__ = [
    "OutputMode",
    "FeatureMap",
    "apply_bank",
    "project",
    "save_featuremap",
    "load_featuremap",
    "stack_kernels",
    "choose_method",
    "DIRECT_FFT_CROSSOVER",
    "USING_COMPILED",
]
