"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured runtime
and its limit. The tolerances are those of the criteria: exact equality
everywhere, runtime limits in seconds as listed in ``scenarios.ACCEPTANCE``.
"""

import numpy as np
import pytest

from coarse_forge import kernels
from coarse_forge.scenarios import ACCEPTANCE

TITLES = {
    1: "Rips metric closed form on Z",
    2: "inverse duality and sandwich",
    3: "C-geodesic certificate on Z",
    4: "surplus-weight isometry",
    5: "shortcut negative certificate",
    6: "equaliser stability threshold",
    7: "tuple-space oracle equivalence",
    8: "Rips-Tuple quasi-isometry on Z^2",
    9: "realisation at toy scale",
    10: "retraction constant bookkeeping",
    11: "filtration monotonicity",
}


@pytest.fixture(scope="module", autouse=True)
def warm_kernels():
    # load the compiled kernels once so runtimes measure the computation, not the JIT cache
    adj = np.array([[False, True], [True, False]])
    indptr, indices = kernels.build_csr(adj)
    kernels.bfs_rows(indptr, indices, 2, [0])
    kernels.dijkstra_rows(np.ones((2, 2), dtype=np.int64), adj, [0])
    kernels.directed_hausdorff(np.zeros((1, 1), dtype=np.int64), np.ones((1, 1), dtype=bool))


@pytest.mark.parametrize("n", sorted(ACCEPTANCE))
def test_criterion(n, capsys):
    fn, limit = ACCEPTANCE[n]
    res = fn()
    in_time = res.seconds < limit
    ok = res.passed and in_time
    line = (f"{'PASS' if ok else 'FAIL'} criterion {n:2d} {TITLES[n]}: "
            f"checks={'ok' if res.passed else 'failed'} runtime={res.seconds:.2f}s limit={limit:.0f}s")
    with capsys.disabled():
        print("\n" + line)
    assert res.passed, res.detail
    assert in_time, f"runtime {res.seconds:.2f}s exceeds {limit}s"
