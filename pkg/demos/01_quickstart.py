"""
Zero-shot classification on a small synthetic benchmark
=======================================================

Train the encoder / decoder / regressor model on seen classes, generate
features for classes it never saw, and classify real unseen features
with a linear SVM fit on the generated ones.
"""

import numpy as np

from zslfeedback import (ClassifierConfig, SynthConfig, TrainConfig, build_model,
                         gzsl_predict, synth_generate, train, zsl_predict)
from zslfeedback.evalsuite import gzsl_report, zsl_report

ds = synth_generate(SynthConfig())
print("features", ds.features.shape, "attributes", ds.attributes.shape)
print("seen classes", ds.split.seen, "unseen classes", ds.split.unseen)

model = build_model(ds.d_x, ds.D, seed=0)
# a short schedule with a larger step keeps the demo under half a minute
model, log = train(model, ds, TrainConfig(epochs=15, lr=3e-4))

# epoch 0 is the untrained model
print("epoch   encoder  reconstruction  regressor")
print(f"{0:5d} {log.initial['encoder']:9.4f} {log.initial['reconstruction']:15.4f} "
      f"{log.initial['regressor']:10.4f}")
for r in log.records[2::3]:
    print(f"{r['epoch']:5d} {r['encoder']:9.4f} {r['reconstruction']:15.4f} {r['regressor']:10.4f}")

# ZSL: only unseen classes are candidates
ccfg = ClassifierConfig()
pred = zsl_predict(model, ds, ccfg)
rep = zsl_report(pred.labels, pred.truth, ds.split.unseen)
print(f"ZSL per-class top-1 {rep.top1:.3f} (chance {1 / ds.split.unseen.size:.3f})")

# GZSL: seen and unseen classes compete in one label space
seen, unseen = gzsl_predict(model, ds, ccfg)
g = gzsl_report(seen.labels, seen.truth, unseen.labels, unseen.truth,
                ds.split.seen, ds.split.unseen)
print("GZSL seen {acc_seen:.3f} unseen {acc_unseen:.3f} H {H:.3f}".format(**g.gzsl))
print("confusion diagonal", np.diag(g.confusion))
