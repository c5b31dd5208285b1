"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a pure NumPy
fallback is selected at import time); building it accelerates the hot
loops: box-enclosure queries and Tarjan's SCC. Build in place with

    python setup.py build_ext --inplace
"""

import numpy as np
from setuptools import setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        "src/conley_box/_kernels.pyx",
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )
    for ext in extensions:
        ext.include_dirs = [np.get_include()]
        ext.extra_compile_args = ["-O3"]
except ImportError:
    extensions = []

setup(ext_modules=extensions)
