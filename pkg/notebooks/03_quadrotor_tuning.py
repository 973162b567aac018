"""Tuning a reference tracker by its certified rate.

Run: python notebooks/03_quadrotor_tuning.py

The surrogate is a double integrator behind a PD-style tracker. Too little
damping and the loop rings, too much and it crawls; the certified rate is
largest in between. The two-mode variant must be certified for a mass that
switches between 0.2 and 2, so it can only do worse than either mode alone.
"""

from zfrate.certifier import certify_rate
from zfrate.multiplier import MultiplierConfig
from zfrate.plants import quadrotor_surrogate, two_mode_quadrotor
from zfrate.psi import SectorBounds
from zfrate.ss import ReferenceGains

sector = SectorBounds(1.0, 4.0)
kp = 0.05
print("kd/kp        zf        cc  two-mode")
best = (None, -1.0)
for ratio in (1, 2, 3, 5, 7, 9, 12, 15, 20, 30):
    gains = ReferenceGains(kp, kp * ratio)
    zf = certify_rate(quadrotor_surrogate(gains), sector, MultiplierConfig("zf")).value_or(-1.0)
    cc = certify_rate(quadrotor_surrogate(gains), sector, MultiplierConfig("cc")).value_or(-1.0)
    two = certify_rate(two_mode_quadrotor(gains=gains), sector, MultiplierConfig("zf")).value_or(-1.0)
    print(f"{ratio:5}  {zf:8.4f}  {cc:8.4f}  {two:8.4f}")
    if zf > best[1]:
        best = (ratio, zf)
print(f"best ratio {best[0]} with certified rate {best[1]:.4f}")

# At low damping the circle criterion certifies nothing while Zames-Falb
# multipliers still do; for heavily damped trackers the two coincide.
