"""Build script: compiles the Cython tape-interpreter extension.

The extension is optional at runtime; if it fails to build (or is absent),
dsfuse falls back to the numpy interpreter in dsfuse.autodiff._engine_py.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Skip the extension instead of failing the whole install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: building dsfuse._engine_c failed ({exc}); "
                  "falling back to the pure-Python engine")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc}); "
                  "falling back to the pure-Python engine")


extensions = [
    Extension(
        "dsfuse.autodiff._engine_c",
        ["src/dsfuse/autodiff/_engine_c.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
    cmdclass={"build_ext": optional_build_ext},
)
