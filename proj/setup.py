from glob import glob

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

ext = Pybind11Extension(
    "driftforge._driftforge",
    sorted(glob("src/*.cpp")) + ["python/module.cpp"],
    include_dirs=["include", "vendor"],
    cxx_std=20,
)

setup(
    packages=["driftforge"],
    package_dir={"driftforge": "python/driftforge"},
    ext_modules=[ext],
    cmdclass={"build_ext": build_ext},
)
