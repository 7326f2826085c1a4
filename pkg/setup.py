import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None


class optional_build_ext(build_ext):
    """Build the compiled core if possible; fall back to pure Python otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            print(f"WARNING: compiled core skipped ({exc}); "
                  "the pure-Python kernels will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"WARNING: building {ext.name} failed ({exc}); "
                  "the pure-Python kernels will be used")


# -ffp-contract=off forbids FMA contraction so the compiled kernels are
# bit-identical to the pure-Python fallback. Never add -ffast-math here.
extensions = []
if cythonize is not None and not os.environ.get("POSEREL_SKIP_EXT"):
    extensions = cythonize(
        [
            Extension(
                "poserel._core",
                ["src/poserel/_core.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=extensions, cmdclass={"build_ext": optional_build_ext})
