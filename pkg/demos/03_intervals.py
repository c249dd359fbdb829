"""Five interval methods on the same strip, plus a look at the ST fallbacks."""
import numpy as np

from edgeci.bootstrap import METHODS, BootstrapConfig, bootstrap_distribution, confidence_interval
from edgeci.detectors import KruskalWallisDetector, SplitSearchConfig
from edgeci.simulation import SyntheticImageSpec, generate_image, image_to_strip

det = KruskalWallisDetector(SplitSearchConfig.full())

for alpha_r in (-10, -4, -2):
    spec = SyntheticImageSpec(alpha_left=-2, alpha_right=alpha_r,
                              edge_j=None if alpha_r == -2 else 50)
    strip = image_to_strip(generate_image(spec, np.random.default_rng(7)))
    print(f"\nalpha_r={alpha_r}  edge={spec.edge_j}")
    d = bootstrap_distribution(strip, det, BootstrapConfig(B=199), np.random.default_rng(0))
    print("  j_hat", d.center, " bootstrap 5/50/95%:",
          [d.order_stat(q) for q in (0.05, 0.5, 0.95)])
    for m in METHODS:
        cfg = BootstrapConfig(B=199, B_prime=50, method=m, clamp=False)
        ci = confidence_interval(strip, det, cfg, np.random.default_rng(0))
        extra = {k: v for k, v in ci.diagnostics.items() if v} if ci.diagnostics else ""
        print(f"  {m:7s} [{ci.lower:4d}, {ci.upper:4d}]  length {ci.length:3d}  {extra}")

# so easy that every resample lands on the estimate: every studentized value is 0
x = np.r_[np.full(30, 1.0), np.full(30, 100.0)] * np.random.default_rng(3).uniform(1, 1.01, 60)
ci = confidence_interval(x, det, BootstrapConfig(B=99, method="st1"), np.random.default_rng(0))
print("\nstep function:", (ci.lower, ci.upper), ci.diagnostics)
