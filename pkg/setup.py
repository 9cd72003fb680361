"""Build the optional Cython kernel extension.

The package works without it (a pure-NumPy backend is selected at import
time), so a failed compile only costs speed, not functionality.
"""

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Degrade to the pure-Python backend if the extension cannot build."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, OpenMP absent, ...
            print(f"warning: building s2attn._cykernels failed ({exc}); "
                  "falling back to the NumPy backend")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc}); "
                  "falling back to the NumPy backend")


try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "s2attn._cykernels",
                sources=["src/s2attn/_cykernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-fopenmp"],
                extra_link_args=["-fopenmp"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
