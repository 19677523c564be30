"""Build script: compiles the optional Montgomery-arithmetic extension.

The package is fully functional without the extension (a pure-Python
fallback is selected at import time); the extension only accelerates the
hot modular-arithmetic kernels used by commitments and proofs.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class _OptionalBuildExt(build_ext):
    """Build the native kernel if possible, fall back to pure Python."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"privess: native kernel build skipped ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"privess: native kernel build skipped ({exc})")


ext_modules = []
if not os.environ.get("PRIVESS_SKIP_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/privess/_fastkernel.pyx"],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:  # pragma: no cover - cython not installed
        print("privess: Cython not available, building pure-Python only")

setup(
    ext_modules=ext_modules,
    cmdclass={"build_ext": _OptionalBuildExt},
)
