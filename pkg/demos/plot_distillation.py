"""
Does the watermark survive distillation?
========================================

An adversary collects (history, watermarked forecast) pairs and fits their own
linear forecaster. If the student copies the perturbation, its forecasts keep
tripping the detector even though it never saw the encoder.
"""

from tswatermark import build_fixture, bundled_manifest
from tswatermark.experiment import run_traceability

manifest = bundled_manifest()
fixture = build_fixture(manifest)

report = run_traceability(manifest, fixture)
print("positive rates at gamma = 2")
print(f"  clean outputs       {report.clean_positive_rate:.3f}")
print(f"  watermarked outputs {report.watermarked_positive_rate:.3f}")
print(f"  distilled student   {report.distilled_positive_rate:.3f}")
print(f"  student on clean    {report.reference_student_positive_rate:.3f}")

# With no noise budget there is nothing to inherit.
null = run_traceability(manifest, fixture, eta=0.0)
print(f"eta = 0: distilled {null.distilled_positive_rate:.3f} vs clean {null.clean_positive_rate:.3f}")
