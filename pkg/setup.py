import os

import numpy as np
from setuptools import Extension, setup

# Build the Cython kernels when possible; the package falls back to
# pure Python at import time if the extension is missing.
ext_modules = []
if not os.environ.get("NNLFT_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "nnlft._kernels",
                    ["src/nnlft/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # keep IEEE semantics: the Python fallback must match bit for bit
                    extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
                    optional=True,
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "initializedcheck": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
