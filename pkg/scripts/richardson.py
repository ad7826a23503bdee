"""Soliton coefficient of dP2 across resolutions, with extrapolation to N -> oo."""
import sys

from toricsoliton import Schedule, builtin_surface, run
from toricsoliton.soliton_analysis import moment_alpha, richardson

resolutions = [int(v) for v in sys.argv[1:]] or [32, 64, 128, 256]
p = builtin_surface("dP2")
alphas = []
for N in resolutions:
    report = run(p, N, Schedule(tol=1e-10, scheme="implicit", max_steps=80))[1]
    alphas.append(report.alpha)
    print(f"N={N:4d}  alpha={report.alpha:.8f}  steps={report.steps}")
print(f"extrapolated    {richardson(resolutions, alphas):.8f}")
print(f"moment oracle   {moment_alpha(p).alpha:.8f}")
