"""Empirical check of the integral inequalities behind a certificate.

Run: python notebooks/05_iqc_validation.py

Each sample simulates a certified closed loop against a random objective in
the sector, then evaluates four residuals on the trajectory: the basic
exponentially weighted pairing, its filtered form, the form built from the
stored multiplier matrices, and the storage-function decrease. A sound
certificate keeps all four nonnegative up to quadrature error.
"""

from zfrate.validation import FAMILIES, validate_suite

summary = validate_suite(samples=40, seed=42)
print("family        checks  min relative  negatives")
for fam in FAMILIES:
    s = summary[fam]
    print(f"{fam:<13} {s.checks:6}  {s.min_relative:12.3e}  {s.negatives:9}")
