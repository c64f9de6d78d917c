import os

import numpy as np
from setuptools import Extension, setup

extensions = []
if os.environ.get("TCLINV_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # fall back to the numpy kernel at import time
        cythonize = None
    if cythonize is not None:
        extensions = cythonize(
            [
                Extension(
                    "tclinv.milp._ckernels",
                    ["src/tclinv/milp/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=extensions)
