"""Build script for the optional compiled kernels.

The package works without the extension (a numpy fallback is selected at
import time); set MASKANYNET_NO_EXT=1 to skip compiling it.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("MASKANYNET_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "maskanynet._kernels",
                    sources=["src/maskanynet/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    # -ffp-contract=off keeps float results bit-identical to
                    # the numpy fallback (no FMA re-rounding).
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level="3",
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
