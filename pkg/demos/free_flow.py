"""Linear noiseless ensemble against the exact free flow of its Wigner function.

Run with ``python3 demos/free_flow.py``. Prints the largest deviation between
the Monte-Carlo Wigner estimate at time ``T`` and the initial estimate carried
along by the free-flow phases, which should be at round-off level.
"""

import numpy as np

from zkwave.dynamics import IntegratorConfig, run_ensemble
from zkwave.ensemble import FieldSampler, build_covariance, make_profile
from zkwave.lattice import LatticeSpec
from zkwave.noise import build_noise
from zkwave.wigner import estimate_wigner, free_flow, shift_labels

T = 5.0
spec = LatticeSpec(d=2, D=10, lam=0.0, eps_override=0.36, c_r_override=0.0)
cov = build_covariance(make_profile("gaussian_bump", 2, width=0.1), spec)
snaps = run_ensemble(FieldSampler(cov), IntegratorConfig(t_final=T, snapshot_times=[0.0]), spec,
                     build_noise(spec), seed=0, n_traj=50)
labels = shift_labels(spec, 2)
w0 = estimate_wigner(snaps[0.0], spec, labels)
wT = estimate_wigner(snaps[T], spec, labels, T)
pred = free_flow(w0, T)
gap = np.max(np.abs(np.where(wT.valid, wT.mean - pred.mean, 0.0)))
print(f"max |W(T) - free_flow(W(0), T)| = {gap:.2e}  (scale {np.abs(w0.mean).max():.2e})")
