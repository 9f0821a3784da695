import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# -ffp-contract=off keeps the compiled kernels bit-identical to the pure
# Python fallback (no FMA contraction). Do not add -ffast-math.
ext = Extension(
    "pbrgen.kernels._core",
    sources=["src/pbrgen/kernels/_core.pyx"],
    include_dirs=[numpy.get_include()],
    extra_compile_args=["-O2", "-ffp-contract=off"],
    optional=True,
)

if cythonize is not None:
    ext_modules = cythonize([ext], compiler_directives={"language_level": 3})
else:
    ext_modules = []

setup(ext_modules=ext_modules)
