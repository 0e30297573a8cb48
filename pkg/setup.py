import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # no Cython: the pure-Python fallback is used at import
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("INTOMO_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "intomo._core",
                ["src/intomo/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
