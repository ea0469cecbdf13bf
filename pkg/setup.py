"""Build script: compiles the optional Cython grid-search kernel.

The package works without the extension (a pure-Python kernel is selected
at import time), so any failure here degrades to a source-only install.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "conceptcert._kernel._grid_cy",
                ["src/conceptcert/_kernel/_grid_cy.pyx"],
                # fp-contract off keeps results bit-identical to the
                # pure-Python kernel (no fused multiply-add).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
