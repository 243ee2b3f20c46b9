"""Derive the frozen constants of the synthetic hiring generator.

Targets (per 2000-row table): privileged share 0.5, overall hire rate 0.3425,
hire rate of the privileged group 0.27, and a best-classifier gender accuracy
near 0.813 on the raw data.  Hiring is ``work_experience > threshold``.

Run ``python scripts/calibrate_lipton.py`` and paste the printed dictionary
into ``LIPTON_PARAMS`` in ``src/fairmap/data.py``.
"""

import numpy as np
from scipy.stats import norm

HIRE_RATE = 0.3425
HIRE_RATE_PRIVILEGED = 0.27
BASELINE_ACCURACY = 0.813

WORK_SD = 3.0
THRESHOLD = 12.0
HAIR_SD = 6.0
HAIR_MEAN_PRIVILEGED = 30.0


def calibrate():
    hire_rate_other = 2 * HIRE_RATE - HIRE_RATE_PRIVILEGED
    z_priv = norm.ppf(1 - HIRE_RATE_PRIVILEGED)
    z_other = norm.ppf(1 - hire_rate_other)
    # equal-variance Gaussians: Bayes accuracy is Phi(d / 2) for total separation d
    total_sep = 2 * norm.ppf(BASELINE_ACCURACY)
    hair_sep = np.sqrt(total_sep ** 2 - (z_priv - z_other) ** 2)
    return {
        "work_mean": (THRESHOLD - z_priv * WORK_SD, THRESHOLD - z_other * WORK_SD),
        "work_sd": WORK_SD,
        "threshold": THRESHOLD,
        "hair_mean": (HAIR_MEAN_PRIVILEGED, HAIR_MEAN_PRIVILEGED - hair_sep * HAIR_SD),
        "hair_sd": HAIR_SD,
    }


if __name__ == "__main__":
    params = calibrate()
    print("LIPTON_PARAMS = {")
    for key, value in params.items():
        if isinstance(value, tuple):
            value = "(" + ", ".join(f"{v:.6f}" for v in value) + ")"
        print(f"    {key!r}: {value},")
    print("}")
