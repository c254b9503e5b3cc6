"""Build script for the optional compiled kernel core.

The package works without the extension (a numpy fallback is selected at
import time); the extension only accelerates the pairwise-distance and
log-sum-exp inner loops.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "sepclr._ckernels",
                ["src/sepclr/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
