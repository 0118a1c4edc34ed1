"""Analytic side of the toolkit: recurrence visibilities, fitted decay and Schmidt numbers."""
from bfclab.core_model import CombParams
from bfclab.franson import fit_recurrence_decay, recurrence_table
from bfclab.schmidt import (dimension_lower_bound, ideal_jsi, plan_dimensionality,
                            schmidt_from_jsi, schmidt_from_weights)

comb = CombParams.nominal()
print(f"FSR {comb.fsr_hz / 1e9:.2f} GHz, round trip {comb.round_trip_time * 1e12:.3f} ps")

table = recurrence_table(comb, 16)
fit = fit_recurrence_decay(100 * table.v_subtracted, comb.fsr_hz)
print(f"fitted single-line FWHM {fit.linewidth_fwhm_hz / 1e9:.3f} GHz")
for n, v in enumerate(table.v_subtracted):
    print(f"  bin {n:2d}  V = {100 * v:6.2f} %")

k = schmidt_from_jsi(ideal_jsi(comb)).schmidt_number
print(f"ideal five-line JSI: K = {k:.3f}")
k_t = schmidt_from_weights(100 * table.v_subtracted).schmidt_number
print(f"time-bin K from these visibilities = {k_t:.2f}, "
      f"dimension >= {dimension_lower_bound(k_t, k)}")
p = plan_dimensionality(2e12, 100e9, 1e9)
print(f"planner: {p.n_f} frequency bins x {p.n_t} time bins = {p.product:g}")
