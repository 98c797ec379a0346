"""
Checking the hand-written gradients
===================================

Every layer, loss and the full objective compares its analytic gradient
with central differences. A deliberately corrupted gradient shows that
the check does catch mistakes.
"""

from zslfeedback.gradsuite import TOLERANCE, run_gradchecks

for r in run_gradchecks(seed=0):
    print(f"{r.name:28s} {r.max_rel_error:.2e} {'ok' if r.passed else 'FAIL'}")

bad = run_gradchecks(corrupt="triplet_loss", names=["triplet_loss"])[0]
print(f"corrupted triplet gradient: {bad.max_rel_error:.2e} "
      f"(tolerance {TOLERANCE:g}) -> {'caught' if not bad.passed else 'missed'}")
