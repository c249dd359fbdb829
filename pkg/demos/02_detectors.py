"""Kruskal-Wallis against the profile-likelihood detector on one easy window."""
import time

import numpy as np

from edgeci.detectors import detect_gambini, detect_kw, kw_profile, profile_loglik
from edgeci.simulation import SyntheticImageSpec, generate_image, image_to_strip

rng = np.random.default_rng(1)
img = generate_image(SyntheticImageSpec(alpha_left=-2, alpha_right=-10), rng)
strip = image_to_strip(img)  # every pixel of the 20-row window enters the ranks
print("strip shape", strip.values.shape)

prof = kw_profile(strip.values[None])[0]
j_kw = detect_kw(strip).j_hat
print("KW estimate", j_kw, "statistic", round(prof[j_kw - 1], 2))

ll = np.array([profile_loglik(strip, j) for j in range(2, 99)])
j_ge = detect_gambini(strip).j_hat
print("GE estimate", j_ge, "finite splits", np.isfinite(ll).sum(), "of", ll.size)

# crude ascii profile of the rank statistic
for j in range(5, 100, 5):
    print(f"{j:3d} {'#' * int(prof[j - 1] / prof.max() * 50)}")

# the point of the rank detector: cost
t0 = time.perf_counter()
for _ in range(20):
    detect_kw(strip)
t1 = time.perf_counter()
for _ in range(20):
    detect_gambini(strip)
t2 = time.perf_counter()
print(f"KW {1e3 * (t1 - t0) / 20:.2f} ms, GE {1e3 * (t2 - t1) / 20:.1f} ms per strip")

# single lines and column means are much harder under unit-mean textures
for agg in ("window", "median", "mean", "center"):
    hits = sum(abs(detect_kw(image_to_strip(generate_image(SyntheticImageSpec(), np.random.default_rng(s)), agg)).j_hat - 50) <= 2
               for s in range(100))
    print(f"{agg:7s} within 2 pixels: {hits}/100")
