"""Build the optional compiled kernels.

The Cython extension is best-effort: if Cython or a C compiler is missing the
package installs without it and ``svtlab.kernels`` falls back to the numpy
implementation.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("SVTLAB_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "svtlab._kernels",
                    ["src/svtlab/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no -ffast-math: comparisons must match the fallback bit for bit
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
