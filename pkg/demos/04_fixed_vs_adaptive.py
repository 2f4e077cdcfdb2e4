"""
Fixed grid against adaptive collocation
=======================================

Both runs use the same networks, seed and optimizer budget.  The default
budget here is small so the script finishes in a minute or two; set
DEMO_FULL=1 for the full schedule (about ten minutes per run).
"""
import os
import tempfile

from porous_pinn.experiment import compare_runs, format_comparison, parse_manifest, run_experiment

SMALL = """
[adam]
iterations = 500
[schedule]
qn_max_iter = 300
hidden_layers = 10, 10, 10
"""

text = "" if os.environ.get("DEMO_FULL") else SMALL
out = tempfile.mkdtemp(prefix="porous_pinn_demo_")

reports = {}
for mode in ("fixed", "adaptive"):
    manifest = parse_manifest(text, mode=mode, seed=0, out=os.path.join(out, mode))
    reports[mode] = run_experiment(manifest)
    print("%-8s front Linf %.4f  gap %.2e  (%.0f s)" % (
        mode, reports[mode].front_linf, reports[mode].generalization_gap, reports[mode].seconds))

print()
print(format_comparison(compare_runs(reports["fixed"], reports["adaptive"]), ("fixed", "adaptive")))
print("\nCSV files are in", out)
