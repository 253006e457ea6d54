from setuptools import Extension, setup

import numpy

try:
    from Cython.Build import cythonize
except ImportError:
    # Pure-python fallback kernels are selected at import time, so the
    # package works without the extension.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "creatlab._speedups",
                ["src/creatlab/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
