"""Soliton coefficient, entropy and Gaussian density for every built-in surface."""
from toricsoliton import BUILTIN_SURFACES, builtin_surface, entropy_nu, moment_alpha

print(f"{'surface':8s} {'alpha':>12s} {'nu':>12s} {'Theta':>10s} {'Theta e^2':>10s}")
for name in BUILTIN_SURFACES:
    p = builtin_surface(name)
    res = entropy_nu(p, moment_alpha(p))
    print(f"{name:8s} {res.xi.alpha:12.8f} {res.nu:12.8f} {res.theta:10.6f} {res.theta_e2:10.6f}")
