"""Simulated detector events analysed like tagger data: histogram, peak spacing, g2."""
from bfclab.core_model import CombParams, DetectorParams
from bfclab.eventsim import SourceParams, generate_pairs, hbt_split
from bfclab.tagger import coincidence_histogram, heralded_g2_zero, peak_spacing

comb = CombParams.nominal(fsr_hz=14.97e9)
det = DetectorParams(jitter_rms_s=6.49e-12, efficiency=0.8, dark_rate_hz=200.0)
stream = generate_pairs(comb, SourceParams(1e5, 2.0, seed=1), det, det)
print(f"{len(stream)} events over {stream.duration_s} s")

T = comb.round_trip_time
h = coincidence_histogram(stream)
spacing = peak_spacing(h, 0.5 * T, 8.5 * T, smooth_s=T / 16, min_separation_s=0.6 * T)
print(f"peak spacing {spacing * 1e12:.2f} ps (round trip {T * 1e12:.2f} ps)")

for mu in (0.01, 0.04):
    src = SourceParams.from_mu(mu, duration_s=2e5 * 2e-9 / mu, seed=5)
    s = hbt_split(generate_pairs(comb, src, det, det), 0.5, seed=2)
    g, err = heralded_g2_zero(s, 2e-9)
    print(f"mu = {mu}: heralded g2(0) = {g:.4f} +- {err:.4f}")
