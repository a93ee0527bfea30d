"""Calibration run for the slow MCMC exponent criterion (L=128)."""
import json
import time

import numpy as np

from dimerlab.mcmc import (ChainConfig, DimerChain, MapAccumulator,
                           correlation_maps, axis_cumulant_series, jackknife)
from dimerlab.analysis import fit_power_exponent

L = 128
SWEEPS = 500_000
BURNIN = 50_000
THIN = 10
BLOCKS = 50
rs = np.arange(2, L // 4 + 1, 2)

out = {}
for lam, seed in ((0.3, 2024), (0.15, 2025)):
    t0 = time.time()
    cc = ChainConfig(L=L, lam=lam, m=0.0, seed=seed,
                     sweeps=SWEEPS, burnin=BURNIN, thin=THIN)
    chain = DimerChain(cc)
    chain.sweep(cc.burnin)
    n_meas = (cc.sweeps - cc.burnin) // cc.thin
    acc = MapAccumulator(BLOCKS, n_meas)
    for _ in range(n_meas):
        chain.sweep(cc.thin)
        acc.push(correlation_maps(chain))
    chain.validate()
    maps = acc.block_means

    def kappa_stat(arrs):
        series = axis_cumulant_series(arrs[0], rs)
        fit = fit_power_exponent(rs, series,
                                 window=(int(rs[0]), int(rs[-1])))
        return fit.derived["kappa"]

    val, err = jackknife([maps], kappa_stat, n_blocks=BLOCKS)
    out[str(lam)] = {"kappa": float(val), "stderr": float(err),
                     "sigmas": float(abs(val - 1.0) / err),
                     "minutes": (time.time() - t0) / 60.0,
                     "n_meas": int(n_meas), "seed": seed}
    print(lam, json.dumps(out[str(lam)]), flush=True)

with open("calib10.json", "w") as f:
    json.dump(out, f, indent=2)
print("done")
