import numpy
from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "padeblur.kernels._ext",
                ["src/padeblur/kernels/_ext.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # pure-Python fallback in padeblur.kernels is used when the
    # extension is unavailable
    extensions = []

setup(ext_modules=extensions)
