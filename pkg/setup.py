import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; riesne._fallback is used at import
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "riesne._core",
                ["src/riesne/_core.pyx"],
                include_dirs=[np.get_include()],
                language="c++",
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
