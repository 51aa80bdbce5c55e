"""Entry point for python -m hazsieve.

BLAS thread pools are pinned before numpy loads so that outputs never
depend on the host's threading defaults; the --threads flag governs worker
processes only.
"""

import os
import sys

for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
):
    os.environ[_var] = "1"

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
