from setuptools import Extension, setup
from Cython.Build import cythonize
import numpy

# -ffp-contract=off: the kernel's bit-exact parity with the pure-numpy
# backend relies on separate multiply/add roundings (no FMA contraction).
extensions = [
    Extension(
        "ffbench.backends._kernels",
        sources=["src/ffbench/backends/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
