"""Build the optional Cython kernels.

The package works without them; ``admm_gcn.kernels`` falls back to the
scipy/numpy implementation when the extension is missing.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("ADMM_GCN_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "admm_gcn._kernels",
                    sources=["src/admm_gcn/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # keep a*b+c as two roundings so results match the fallback
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
