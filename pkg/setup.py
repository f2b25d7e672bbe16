import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.errors import CCompilerError, ExecError, PlatformError


class OptionalBuildExt(build_ext):
    """Build the compiled kernels if possible; the package also runs on its
    pure-Python fallback, so a failed extension build is not fatal."""

    def run(self):
        try:
            super().run()
        except (CCompilerError, ExecError, PlatformError, FileNotFoundError) as exc:
            print(f"warning: compiled kernels skipped ({exc}); "
                  "using pure-Python fallback", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except (CCompilerError, ExecError, PlatformError, FileNotFoundError) as exc:
            print(f"warning: building {ext.name} failed ({exc}); "
                  "using pure-Python fallback", file=sys.stderr)


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("warning: Cython unavailable; building without compiled "
              "kernels", file=sys.stderr)
        return []
    from setuptools import Extension

    ext = Extension(
        "qualdyn._kernels",
        sources=["src/qualdyn/_kernels.pyx"],
        # strict IEEE arithmetic: keep kernel results stable across builds
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], compiler_directives={"language_level": 3})


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
