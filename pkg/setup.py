"""Build script for the optional compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time); compilation failures therefore only emit a warning instead of
aborting the install.
"""

import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the Cython kernels if possible, warn and continue if not."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            warnings.warn(f"compiled kernels unavailable, using numpy fallback: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"failed to build {ext.name}, using numpy fallback: {exc}")


def make_extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools.extension import Extension
    except ImportError as exc:
        warnings.warn(f"cython/numpy not available at build time: {exc}")
        return []
    return cythonize(
        [
            Extension(
                "statediff._kernels._compiled",
                ["src/statediff/_kernels/_compiled.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )


setup(ext_modules=make_extensions(), cmdclass={"build_ext": OptionalBuildExt})
