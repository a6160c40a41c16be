# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled direct-summation core for the complex 2-D bank convolution.

Same contract as strfkit._convpure.direct_conv_bank; selected at import
by strfkit._convdispatch when the build produced this extension.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def direct_conv_bank(
    double[:, ::1] ypad,
    double complex[:, :, ::1] kernels,
    Py_ssize_t n_frames,
    Py_ssize_t n_mels,
):
    """Direct-summation bank convolution against a pre-padded spectrogram.

    ypad has shape [n_frames + 2*ht, n_mels + 2*hf] where (ht, hf) are the
    kernel half extents; kernels has shape [N, n_freq, n_time]. Returns the
    complex output [n_frames, n_mels, N] of the true ("same") convolution.
    """
    cdef Py_ssize_t n_filters = kernels.shape[0]
    cdef Py_ssize_t n_freq = kernels.shape[1]
    cdef Py_ssize_t n_time = kernels.shape[2]
    cdef Py_ssize_t ht = n_time // 2
    cdef Py_ssize_t hf = n_freq // 2

    out_arr = np.zeros((n_frames, n_mels, n_filters), dtype=np.complex128)
    cdef double complex[:, :, ::1] out = out_arr

    cdef Py_ssize_t k, t, f, a, b
    cdef double complex acc
    cdef double y

    for k in range(n_filters):
        for t in range(n_frames):
            for f in range(n_mels):
                acc = 0
                for a in range(n_time):
                    for b in range(n_freq):
                        y = ypad[t + 2 * ht - a, f + 2 * hf - b]
                        if y != 0.0:
                            acc = acc + kernels[k, b, a] * y
                out[t, f, k] = acc
    return out_arr
