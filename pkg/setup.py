"""Build script: compiles the optional Cython kernel extension.

The extension is marked optional -- if no compiler (or no Cython) is
available the install still succeeds and the package falls back to the
pure-Python kernels in ``xtree._kernels._pyref``.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    np = None
    cythonize = None


def extensions():
    if cythonize is None or np is None:
        return []
    ext = Extension(
        "xtree._kernels._speedups",
        sources=["src/xtree/_kernels/_speedups.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )


setup(ext_modules=extensions())
