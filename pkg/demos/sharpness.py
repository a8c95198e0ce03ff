"""The bound is attained, and how it compounds over time windows.

A drift built from the kernel itself makes the squared gap follow the
envelope ODE with equality, so the modulus cannot be improved in general.
The amplification factor then shows how short windows compound.  Run with
``python3 demos/sharpness.py``.
"""

import math

import numpy as np

from gstab import (BihariTransform, Linear, PiecewiseConstant, Power, SaturatingFamily, StabilityModulus,
                   WeightProfile, amplification, asymptotics_probe, propagate_partition)
from gstab.stability import saturation_endpoint

weights = WeightProfile(PiecewiseConstant.constant(1.0, 0, 1), PiecewiseConstant.constant(0.0, 0, 1))

print("saturating drift: numeric endpoint vs envelope prediction")
for kernel, c_b, u0, predicted in [(Linear(1.0), 2.0, 1e-2, 1e-2 * math.e),
                                   (Power(alpha=2.0), 4.0, 1e-2, 1 / 98)]:
    fam = SaturatingFamily(kernel, c_b, weights, 0.0, 1.0)
    exact = saturation_endpoint(fam, u0)
    printed = saturation_endpoint(fam, u0, form="printed")
    print(f"  {kernel!r}: exact drift {exact:.10f}, predicted {predicted:.10f}, "
          f"square-root-of-weight drift {printed:.10f}")

# Lambda(delta) = sup Psi_{tau,delta}(u)/u.  With Gamma = 1 and a linear
# kernel it equals C1 e^{C1 delta}: never below 1 when C1 = 4.
gamma = PiecewiseConstant.constant(1.0, 0.0, 1.0)
deltas = np.array([0.1, 0.25, 0.5, 1.0])
for C1 in (4.0, 0.5):
    prof = amplification(StabilityModulus(BihariTransform(Linear(1.0)), C1=C1, gamma=gamma), deltas)
    print(f"\nC1 = {C1}: Lambda = {np.round(prof.lambdas, 4)}, contraction horizon {prof.contraction_horizon}")
part = propagate_partition(StabilityModulus(BihariTransform(Linear(1.0)), C1=4.0, gamma=gamma),
                           np.linspace(0, 1, 5), initial_gap=1.0)
print(f"four-window product {part.product_bound:.2f} vs 4^4 e^4 = {4**4 * math.e**4:.2f}")

# Near zero the power-kernel modulus is linear: Psi(u)/u -> C1.
table = asymptotics_probe(StabilityModulus(BihariTransform(Power(alpha=2.0)), C1=1.0, C0=1.0),
                          10.0 ** -np.arange(1, 9))
print(f"\n{table.regime}: Psi(u)/u = {table.ratio}")
