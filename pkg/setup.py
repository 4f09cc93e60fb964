"""Build script for the compiled LK kernel extension.

The extension is optional: when it fails to build (or Cython is absent) the
package falls back to the pure-numpy kernels in
``mdptrack.patch_tracking._kernels_py`` at import time.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "mdptrack.patch_tracking._kernels_cy",
                ["src/mdptrack/patch_tracking/_kernels_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
