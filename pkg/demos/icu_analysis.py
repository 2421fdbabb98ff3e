"""EP0 bands for ICU death, for patients with and without pneumonia on admission.

Expects the merged ICU admission data as CSV with columns ``time``, ``event``
(0 censored, 1 death, 2 discharge), ``cens`` (blank for deaths), ``age``
(standardized), ``pneu`` (0/1) and ``sex`` (1 = female). The data are not
shipped; pass the path as the first argument.
"""

import sys

from fgwild import CSVSchema, bands, fit_mple, load_csv

data = load_csv(sys.argv[1], CSVSchema(covariate_cols=["age", "pneu", "sex"]),
                mode="partially-censoring-complete")
fit = fit_mple(data)
print(data.summary())
for name, b, se in zip(["age", "pneu", "sex"], fit.beta_hat, fit.standard_errors):
    print(f"{name:5} {b:7.3f} ({se:.3f})")

for label, z in (("female, average age, no pneumonia", (0.0, 0.0, 1.0)),
                 ("female, average age, pneumonia", (0.0, 1.0, 1.0))):
    band = bands(fit, data, z, ["ep0"], interval=(6.0, 48.0), n_boot=2000, seed=0)["ep0"]
    print(f"{label}: F1(44) = {float(band.point_estimate(44.0)):.3f}, "
          f"band [{float(band.lower(44.0)):.3f}, {float(band.upper(44.0)):.3f}]")
