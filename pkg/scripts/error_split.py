"""Split the exact-ray homogeneous error into its parts inside and outside D_2eps.

Shows which region dominates the relative L2 error along the omega ladder.
Usage: python3 scripts/error_split.py [k ...]   (omega = 20 pi k, default 1 2 4)
"""

import sys

import numpy as np

from hhx import fem, pipeline
from hhx.media import Medium


def main() -> None:
    ks = [int(a) for a in sys.argv[1:]] or [1, 2, 4]
    med = Medium.homogeneous()
    print("omega/pi  eps    total      inside_D2eps  outside_D2eps")
    for k in ks:
        om = 20 * np.pi * k
        res = pipeline.run_hybrid(pipeline.HybridConfig(om, ray_mode="exact"), med, (0.0, 0.0))
        ref = pipeline.homogeneous_reference(om, (0.0, 0.0))
        eta = res.config.eta_factor * res.disc.h
        n_all, d_all = fem.l2_norms(res.total, ref, res.mesh, res.disc.physical, (0, 0), eta)
        n_out, _ = fem.l2_norms(res.total, ref, res.mesh, res.disc.physical, (0, 0), 2 * res.eps)
        inside = np.sqrt(max(n_all**2 - n_out**2, 0.0))
        print(f"{20 * k:8d}  {res.eps:.3f}  {n_all / d_all:.3e}  {inside / d_all:.3e}     {n_out / d_all:.3e}")


if __name__ == "__main__":
    main()
