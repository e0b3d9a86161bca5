import os

# allow worker counts above the physical core count for the merge-invariance
# checks; must be set before numba is first imported
os.environ.setdefault("NUMBA_NUM_THREADS", "16")

import numba  # noqa: E402

numba.set_num_threads(2)
