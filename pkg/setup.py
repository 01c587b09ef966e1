"""Build script for the optional compiled n-gram kernel.

The package works without the extension: endcloud.kernels falls back to the
pure-Python implementation when the compiled module is missing.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/endcloud/kernels/_ngram_cy.pyx"],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
