import os

import numpy as np
from setuptools import Extension, setup

# FAIRAUDIT_NO_EXT=1 skips the compiled core; the package then runs on the numpy fallback.
ext_modules = []
if not os.environ.get("FAIRAUDIT_NO_EXT"):
    from Cython.Build import cythonize

    extensions = [
        Extension(
            "fairaudit.forest._tree_core",
            ["src/fairaudit/forest/_tree_core.pyx"],
            include_dirs=[np.get_include()],
            language="c++",
            # fp-contract off keeps results bit-identical to the numpy fallback
            extra_compile_args=["-O3", "-ffp-contract=off", "-std=c++11"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ]
    ext_modules = cythonize(
        extensions,
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )

setup(ext_modules=ext_modules)
