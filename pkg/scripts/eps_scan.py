"""Relative error of the exact-ray homogeneous run for several cut-off radii.

Usage: python3 scripts/eps_scan.py
"""

import numpy as np

from hhx import pipeline
from hhx.media import Medium


def main() -> None:
    med = Medium.homogeneous()
    epss = [0.08, 0.12, 0.16]
    print("omega/pi " + " ".join(f"eps={e:<9}" for e in epss))
    for k in (1, 2):
        om = 20 * np.pi * k
        ref = pipeline.homogeneous_reference(om, (0.0, 0.0))
        errs = [pipeline.run_hybrid(pipeline.HybridConfig(om, ray_mode="exact", eps=e), med, (0.0, 0.0))
                .relative_error(ref) for e in epss]
        print(f"{20 * k:8d} " + " ".join(f"{e:.3e}    " for e in errs))


if __name__ == "__main__":
    main()
