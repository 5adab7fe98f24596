"""Build script for the optional compiled kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a failed or skipped build is not fatal.
"""

import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("HJBOPT_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover - Cython missing
        cythonize = None
    if cythonize is not None:
        ext = Extension(
            "hjbopt._kernels",
            ["src/hjbopt/_kernels.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3", "-fopenmp"],
            extra_link_args=["-fopenmp"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], compiler_directives={"language_level": 3})

setup(ext_modules=ext_modules)
