from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; kernel.py falls back
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("ehlink._ckernel", ["src/ehlink/_ckernel.pyx"])],
        language_level=3,
    )

setup(ext_modules=ext_modules)
