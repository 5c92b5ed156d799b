"""Build hook for the optional compiled kernels.

The package works without the extension (pure-Python fallbacks are selected
at import time), so any failure here downgrades to a source-only install
instead of aborting.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("STREAMSCALE_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "streamscale._kernels._core",
                    ["src/streamscale/_kernels/_core.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # -ffp-contract=off keeps float arithmetic bit-identical
                    # to the pure-Python kernels (no FMA contraction).
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
