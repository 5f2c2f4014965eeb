"""Builds the optional compiled geometry/raycast kernels.

The package works without the extension (a NumPy fallback is selected at
import time); building it just makes the hot loops fast.
"""

import sys

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "auto4d._native",
                ["src/auto4d/_native.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
else:
    print("Cython not available; installing with pure-Python kernels only", file=sys.stderr)

setup(ext_modules=ext_modules)
