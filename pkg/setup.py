"""Build script for the optional compiled kernels.

The package works without the extension (a numpy fallback is selected at
import time); set EPICURE_NO_EXT=1 to force a pure-Python build.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("EPICURE_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "epicure._kernels._core",
                    ["src/epicure/_kernels/_core.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
