"""Pure-NumPy direct-summation core, used when the compiled one is absent.

Same contract as strfkit._convcore.direct_conv_bank. The kernel tap loop
runs in Python but every tap is a vectorized multiply-accumulate over the
whole output plane, so it stays usable at test sizes.
"""

import numpy as np


def direct_conv_bank(ypad, kernels, n_frames, n_mels):
    """Direct-summation bank convolution against a pre-padded spectrogram.

    ypad: float64 [n_frames + 2*ht, n_mels + 2*hf]; kernels: complex128
    [N, n_freq, n_time]. Returns complex128 [n_frames, n_mels, N].
    """
    n_filters, n_freq, n_time = kernels.shape
    ht = n_time // 2
    hf = n_freq // 2
    out = np.zeros((n_frames, n_mels, n_filters), dtype=np.complex128)
    for a in range(n_time):
        t0 = 2 * ht - a
        for b in range(n_freq):
            f0 = 2 * hf - b
            win = ypad[t0 : t0 + n_frames, f0 : f0 + n_mels]
            out += win[:, :, None] * kernels[None, None, :, b, a]
    return out
