"""Build the optional compiled rollout kernel.

The package works without it (numpy fallback); set ``PINTEGRA_NO_EXT=1`` to
skip compilation entirely.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("PINTEGRA_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "pintegra._rollout",
                    ["src/pintegra/_rollout.pyx"],
                    extra_compile_args=["-O3", "-fopenmp"],
                    extra_link_args=["-fopenmp"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
