"""Gain-scheduled vehicle: effect of the multiplier order.

Run: python notebooks/02_lpv_vehicle.py

Every frozen vertex converges at exactly 0.4 for any curvature, yet the
switching between vertices is only certified by richer multipliers. Raising
the order adds basis functions to the kernel, and the certified rate grows
with it.
"""

from zfrate.certifier import certify_rate
from zfrate.multiplier import MultiplierConfig
from zfrate.plants import lpv_vehicle_example
from zfrate.psi import SectorBounds

plant = lpv_vehicle_example()
orders = range(1, 6)
print("L   " + "".join(f"   zf nu={n}" for n in orders) + "   causal nu=5")
for L in (1, 3, 5, 7, 9, 11, 13):
    sector = SectorBounds(1.0, L)
    row = [certify_rate(plant, sector, MultiplierConfig("zf", n)).value_or(-1.0) for n in orders]
    causal = certify_rate(plant, sector, MultiplierConfig("causal", 5)).value_or(-1.0)
    print(f"{L:<4}" + "".join(f"{v:11.4f}" for v in row) + f"{causal:13.4f}")

# -1 marks "not certifiable even at rate zero". With kernels constrained to
# be nonnegative the certificate is lost somewhere past L = 11 for every
# order tried here.
