"""Select the direct-convolution core at import time.

The compiled Cython extension is preferred; the pure-NumPy fallback is
used when the extension is missing or STRFKIT_PURE is set in the
environment (the benchmark uses that switch to compare the two).
"""

import os

if os.environ.get("STRFKIT_PURE"):
    from ._convpure import direct_conv_bank

    USING_COMPILED = False
else:
    try:
        from ._convcore import direct_conv_bank

        USING_COMPILED = True
    except ImportError:
        from ._convpure import direct_conv_bank

        USING_COMPILED = False

__all__ = ["direct_conv_bank", "USING_COMPILED"]
