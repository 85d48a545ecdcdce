"""
A small turbo BER campaign
==========================

Coded BPSK over Proakis-C with a terminated (7,5) recursive systematic code
and 2048 information bits.  The campaign reports BER after every turbo
iteration.  The same run is available from the command line:

    turboeq ber --config configs/desk_bpsk.yaml

The full waterfall lives in ``configs/repro_fig7_bpsk.yaml`` and takes a
night on one core.
"""

from turboeq.harness import BER_COLUMNS, CampaignConfig, run_ber_campaign, write_csv

cfg = CampaignConfig.from_dict(dict(
    receivers=["le-ic", "dfe-ic-app", "dfe-ic-ep"],
    ebn0_db=[5.5],
    turbo_iters=4,
    min_frames=10,
    max_frames=10,
    min_frame_errors=0,
    seed=11,
))
rows = run_ber_campaign(cfg)
print(write_csv(rows, BER_COLUMNS, "ber"))

# Per receiver, the final-iteration BER.
for r in rows:
    if r["iter"] == cfg.turbo_iters:
        print(f"{r['receiver']:12s} BER after {cfg.turbo_iters} iterations: {r['ber']:.2e}")
