"""Build script for the optional compiled kernel core.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so a missing C toolchain must not break
installation: build errors are downgraded to a warning.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


NATIVE_FLAGS = ["-O3", "-march=native", "-funroll-loops"]
PLAIN_FLAGS = ["-O3"]


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # no compiler / no Cython at build time
            warnings.warn(f"building the compiled kernels failed ({exc}); "
                          "falling back to the pure-numpy backend")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception:
            if ext.extra_compile_args != PLAIN_FLAGS:
                ext.extra_compile_args = PLAIN_FLAGS
                try:
                    super().build_extension(ext)
                    return
                except Exception:
                    pass
            warnings.warn(f"building {ext.name} failed; "
                          "falling back to the pure-numpy backend")


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    return cythonize(
        [Extension("xtimenet.kernels._convext",
                   ["src/xtimenet/kernels/_convext.pyx"],
                   extra_compile_args=NATIVE_FLAGS)],
        language_level=3,
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
