"""
The sine-pattern baseline
=========================

The simplest output watermark adds a known sine to one horizon segment and
looks for it with a matched filter. It is easy to detect but the change is
large and visible, which is what the cold-token scheme avoids.
"""

import numpy as np

from tswatermark import build_fixture, bundled_manifest, mse
from tswatermark.attacks import FswConfig, fsw_correlation, fsw_embed

fixture = build_fixture(bundled_manifest())
outputs = [w.horizon for w in fixture.outputs(fixture.test[:200])]

cfg = FswConfig(amplitude=0.5, period=8, segment_len=32)
marked = [fsw_embed(h, cfg) for h in outputs]

clean_corr = np.array([fsw_correlation(h, cfg) for h in outputs])
marked_corr = np.array([fsw_correlation(h, cfg) for h in marked])
print(f"matched-filter correlation: clean {clean_corr.mean():.3f}, marked {marked_corr.mean():.3f}")
print("detected at 0.5:", (marked_corr > 0.5).mean(), " false alarms:", (clean_corr > 0.5).mean())

# Utility cost: squared deviation introduced per sample.
print(f"MSE added by the pattern: {mse(marked, outputs):.5f}")
