"""Cost allocation on the two reference weather days.

Four households already know what the day would cost each of them
alone (D) and what it costs pooled (J_soc). The bargain gives everyone
the same discount off their solo bill, so nobody has a reason to walk.
"""

import numpy as np

from gridbargain import allocate
from gridbargain.fixtures import REFERENCE_ADVERSE, REFERENCE_FAVORABLE


def show(case):
    res = allocate(case.d, case.j_soc)
    print(f"\n{case.name}: J_soc = {case.j_soc:.2f} c, "
          f"common discount eps0 = {res.epsilon:.4f} c")
    print(f"  {'user':>6} {'solo D':>10} {'share J':>10} {'saves':>8}")
    for i, (d, j) in enumerate(zip(case.d, res.j), start=1):
        print(f"  {'u' + str(i):>6} {d:>10.2f} {j:>10.2f} {d - j:>8.2f}")
    total = float(np.sum(res.j))
    print(f"  {'sum':>6} {case.d.sum():>10.2f} {total:>10.2f}"
          f" {case.d.sum() - total:>8.2f}")
    assert abs(total - case.j_soc) < 1e-9  # shares always cover the bill


if __name__ == "__main__":
    show(REFERENCE_FAVORABLE)
    show(REFERENCE_ADVERSE)
