"""Build the optional Cython stepping kernel.

If Cython or a C compiler is missing the package installs without it and
falls back to the NumPy kernel at import time.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("LANGEVIN_GIBBS_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension(
                "langevin_gibbs.sde._kernels",
                ["src/langevin_gibbs/sde/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
