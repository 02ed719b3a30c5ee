"""Builds the optional compiled kernels.  Without Cython or a compiler the
package still installs and falls back to the numpy implementation."""
from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("supercorr._kernels._stencil", ["src/supercorr/_kernels/_stencil.pyx"],
                   include_dirs=[numpy.get_include()], extra_compile_args=["-O3"])],
        language_level=3,
    )
except ImportError:  # pragma: no cover - build without Cython
    pass

setup(ext_modules=ext_modules)
