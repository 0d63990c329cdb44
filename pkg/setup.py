from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off keeps the compiler from fusing multiply-adds, so the
# extension's float results stay bit-identical to the NumPy fallback.
extensions = [
    Extension(
        "falce._native",
        ["src/falce/_native.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
