"""
Steady-state predictions
========================

The closed-form fixed points give each node's excess error from its filter
length, step size, noise level and the combination weights. Here they are set
against a small Monte-Carlo run at two SNR values.
"""

from linksel import config
from linksel.experiments import predict_from_rule, sweep_snr

cfg = config.preset("wsn-snr-sweep")
cfg = config.apply_overrides(cfg, ["run.runs=20", "algorithms=[es-lms, si-rls]"])

# predictions need no simulation when the weights follow from a rule
sc = config.build_scenario(cfg, "si-lms")
rule = predict_from_rule(sc, coupling="coupled", trace_factor="trace")
print(f"SI-LMS rule-based prediction at 30 dB: {rule.network_db:.2f} dB")

for c in sweep_snr(cfg, [10, 30]):
    print(f"{c.algorithm:>7} SNR {c.snr_db:4.0f} dB: simulated {c.simulated_db:8.3f} "
          f"predicted {c.prediction.network_db:8.3f} gap {c.gap_db:+.3f} dB")
