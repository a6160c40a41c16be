"""FFT-based paths for the bank convolution and its kernel adjoint.

Everything here works on zero-padded transforms sized so circular
wraparound never touches nonzero samples; the direct-summation core in
_convdispatch is the correctness oracle for these routines.
"""

from __future__ import annotations

import numpy as np
from scipy import fft as sfft

from .parallel import fft_workers


def fft_sizes(n_frames: int, n_mels: int, n_time: int, n_freq: int) -> tuple[int, int]:
    return (
        sfft.next_fast_len(n_frames + n_time - 1),
        sfft.next_fast_len(n_mels + n_freq - 1),
    )


def bank_spectra(kernels: np.ndarray, P: int, Q: int) -> np.ndarray:
    """2-D spectra of the kernels, time axis first, shape [N, P, Q]."""
    k_tf = kernels.transpose(0, 2, 1)  # [N, n_time, n_freq]
    return sfft.fft2(k_tf, s=(P, Q), axes=(-2, -1), workers=fft_workers())


def conv_same(Y: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """True "same" convolution of Y [T, M] with every kernel, -> [T, M, N]."""
    T, M = Y.shape
    N, n_freq, n_time = kernels.shape
    P, Q = fft_sizes(T, M, n_time, n_freq)
    Kf = bank_spectra(kernels, P, Q)
    Yf = sfft.fft2(Y, s=(P, Q), workers=fft_workers())
    return conv_same_from_spectra(Yf, Kf, T, M, n_time, n_freq)


def conv_same_from_spectra(Yf, Kf, T, M, n_time, n_freq) -> np.ndarray:
    """Finish a "same" convolution from precomputed spectra.

    Yf may be [P, Q] or batched [..., P, Q]; Kf is [N, P, Q]. Returns
    [..., T, M, N].
    """
    ht, hf = n_time // 2, n_freq // 2
    Zf = Yf[..., None, :, :] * Kf
    Zfull = sfft.ifft2(Zf, axes=(-2, -1), workers=fft_workers())
    Z = Zfull[..., ht : ht + T, hf : hf + M]
    return np.moveaxis(Z, -3, -1)


def kernel_grad_from_spectra(D, Yf_conj, n_time, n_freq, P, Q) -> np.ndarray:
    """Adjoint of conv_same w.r.t. the kernels.

    D is the upstream gradient on Z, shape [..., N, T, M] (complex);
    Yf_conj is conj(fft2(Y)) with matching leading axes [..., 1, P, Q].
    Returns G with kernel layout [..., N, n_freq, n_time] where
    G[b, a] = sum_{t,f} D[t, f] * Y[t - (a - ht), f - (b - hf)].
    """
    ht, hf = n_time // 2, n_freq // 2
    Df = sfft.fft2(D, s=(P, Q), axes=(-2, -1), workers=fft_workers())
    W = sfft.ifft2(Df * Yf_conj, axes=(-2, -1), workers=fft_workers())
    idx_t = (np.arange(n_time) - ht) % P
    idx_f = (np.arange(n_freq) - hf) % Q
    G_tf = W[..., idx_t[:, None], idx_f[None, :]]  # [..., N, n_time, n_freq]
    return np.swapaxes(G_tf, -1, -2)
