import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "measurefk._pathcore",
        ["src/measurefk/_pathcore.pyx"],
        include_dirs=[np.get_include()],
        # No -march=native / -ffast-math: path arithmetic must stay IEEE so
        # that reruns and the pure-numpy fallback agree.
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
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
        },
    )
)
