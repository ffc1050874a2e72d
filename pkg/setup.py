"""Build script for the optional compiled convolution kernels.

The package is pure Python plus one Cython extension.  If the extension
cannot be built (no compiler, no Cython) the install still succeeds and
egmt falls back to the numpy kernels at import time.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "egmt.numerics._convkernels",
                sources=["src/egmt/numerics/_convkernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=extensions)
