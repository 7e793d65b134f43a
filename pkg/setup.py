import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("COLDWAVE_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # pure-Python install
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "coldwave._kernels",
                    [os.path.join("src", "coldwave", "_kernels.pyx")],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
