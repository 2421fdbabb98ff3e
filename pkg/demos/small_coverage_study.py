"""A miniature coverage study: 200 simulated studies, 500 bootstrap draws each.

Coverage of the equal-precision band EP0 should land near 95%; the Monte Carlo
standard error at this size is about 1.5 points. Takes about ten seconds on one core.
"""

from fgwild import ScenarioConfig, run_coverage

config = ScenarioConfig(
    n=150,
    beta0=(-0.5,),
    alpha01=0.5,
    alpha02=0.5,
    censoring_rate="high",
    target_z=((0.0,), (1.0,)),
    n_studies=200,
    n_boot=500,
)
report = run_coverage(config)
t1, t2 = report.interval
print(f"censor_max={config.censor_max:.3f} realized censoring={report.realized_censoring:.3f}")
print(f"interval [{t1:.3f}, {t2:.3f}], studies analysed: {report.n_ok}, failures: {report.failures or 'none'}\n")
print(f"{'z':>4} {'variant':8} {'coverage':>9} {'mc se':>6} {'width':>7}")
for cell in report.cells:
    print(f"{cell.z[0]:4g} {cell.variant:8} {cell.coverage:9.1f} {cell.mc_se:6.1f} {cell.mean_width:7.3f}")
