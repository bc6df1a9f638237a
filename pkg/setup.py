import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None and not os.environ.get("MECHANOCHEM_SKIP_EXT"):
    ext = Extension(
        "mechanochem.kernels._core",
        ["src/mechanochem/kernels/_core.pyx"],
        extra_compile_args=["-O3"],
    )
    # build failures fall back to the pure numpy kernels at import time
    ext.optional = True
    extensions = cythonize([ext], compiler_directives={"language_level": "3"})

setup(ext_modules=extensions)
