"""Rate bounds for the non-minimum-phase plant across the sector width.

Run: python notebooks/01_nonmin_phase_sweep.py

The four multiplier classes are nested (circle <= causal, anti-causal <= full
Zames-Falb), so their curves should never cross in the wrong direction. The
quadratic-field oracle is an upper bound on any certified rate.
"""

import numpy as np

from zfrate.certifier import certify_rate
from zfrate.multiplier import MultiplierConfig
from zfrate.plants import nonmin_phase_example
from zfrate.psi import SectorBounds
from zfrate.sim import worst_case_quadratic_rate

plant = nonmin_phase_example()
classes = ("cc", "causal", "anticausal", "zf")
print("L     " + "".join(f"{c:>12}" for c in classes) + "      oracle")
for L in np.round(np.arange(1.0, 2.51, 0.1), 1):
    sector = SectorBounds(1.0, L)
    row = [certify_rate(plant, sector, MultiplierConfig(c, 1)).value_or(-1.0) for c in classes]
    oracle = worst_case_quadratic_rate(plant, sector)
    print(f"{L:<6}" + "".join(f"{v:12.5f}" for v in row) + f"{oracle:12.5f}")

# The circle criterion gives out first, near L = 2. The anti-causal lobe is
# what keeps the certificate alive beyond it. Past L = 2.5 the oracle itself
# is zero: some quadratic in the class makes the loop marginally stable.
