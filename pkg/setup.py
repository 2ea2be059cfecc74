"""Build the optional compiled kernels; the package falls back to numpy without them."""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "tonewton._kernels._core",
        ["src/tonewton/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O2"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
