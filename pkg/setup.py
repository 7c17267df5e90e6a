import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "nsteplab._core",
        ["src/nsteplab/_core.pyx"],
        include_dirs=[np.get_include(), "src/nsteplab"],
        depends=["src/nsteplab/_kernels.h"],
        extra_compile_args=["-O3", "-fno-math-errno"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
)
