"""Tour of the G0I intensity law: density, moments, sampling, moment fits."""
import numpy as np
from scipy import integrate

from edgeci.g0i import G0IParams, density, fit_moments, noncentral_moment, sample

rng = np.random.default_rng(0)

# unit-mean regions of decreasing roughness
for alpha in (-2, -5, -15):
    p = G0IParams.unit_mean(alpha, looks=1)
    total = integrate.quad(lambda z: density(z, p), 0, np.inf, limit=200)[0]
    print(f"alpha={alpha:4}  gamma={p.gamma:6.3f}  texture={p.texture.value:24s} "
          f"integral={total:.8f}  E[Z]={noncentral_moment(1, p):.12f}")

# second moment only exists for -alpha > 2
print("E[Z^2] at alpha=-2:", noncentral_moment(2, G0IParams.unit_mean(-2)))
print("E[Z^2] at alpha=-5:", noncentral_moment(2, G0IParams.unit_mean(-5)))

# the tail is what separates textures, not the mean
rough = sample(G0IParams.unit_mean(-2), 100_000, rng)
smooth = sample(G0IParams.unit_mean(-15), 100_000, rng)
print(f"means   {rough.mean():.3f} vs {smooth.mean():.3f}")
print(f"99.9%   {np.quantile(rough, 0.999):.2f} vs {np.quantile(smooth, 0.999):.2f}")

# moment estimates: biased, noisy, sometimes no root at all
for n in (100, 1000, 10_000):
    fits = [fit_moments(sample(G0IParams.unit_mean(-5), n, rng), 1) for _ in range(200)]
    ok = [f.alpha_hat for f in fits if f.converged]
    print(f"n={n:6d}  converged {len(ok)}/200  median alpha_hat {np.median(ok):6.2f}")
