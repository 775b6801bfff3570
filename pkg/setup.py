import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "celloed._kernel._core",
                ["src/celloed/_kernel/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython: the package still installs and falls back to the numpy
    # backend selected in celloed._kernel at import time.
    extensions = []

setup(ext_modules=extensions)
