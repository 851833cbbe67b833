"""Train the FCN and the spherical network on a small phantom.

A scaled-down version of the full experiments: both models learn FA from
the same 6-direction signals and are compared per ground-truth FA bin.
Takes about a minute.
"""
import numpy as np

from sphadc import datagen, experiments, metrics, nn, schemes

scheme = schemes.load_scheme("schemes/skare6.txt")

cfg = datagen.PhantomConfig(n_voxels=3000, seed=42)
train = datagen.build_dataset(cfg, [scheme])
test = datagen.build_dataset(datagen.PhantomConfig(n_voxels=2000, seed=1042),
                             [scheme])
print(f"train {train.n} voxels, test {test.n} voxels, SNR {cfg.snr:g}")

tcfg = nn.TrainConfig(epochs=15, batch_size=32, seed=7)

fcn = nn.init_model(nn.ModelSpec(kind="fcn"), seed=tcfg.seed)
fcn, trace = nn.train(fcn, train.signals["skare6"], train.fa_gt, tcfg)
print(f"fcn: mse {trace[0]:.4f} -> {trace[-1]:.4f}")

feats_train = experiments.scnn_features(train, "skare6", 8)
feats_test = experiments.scnn_features(test, "skare6", 8)
scnn = nn.init_model(nn.ModelSpec(kind="scnn"), seed=tcfg.seed)
scnn, trace = nn.train(scnn, feats_train, train.fa_gt, tcfg)
print(f"scnn: mse {trace[0]:.4f} -> {trace[-1]:.4f}")

print("\nper-bin RMSE (gt FA bins of width 0.2):")
for name, pred in (
        ("fcn", nn.predict_batch(fcn, test.signals["skare6"])),
        ("scnn", nn.predict_batch(scnn, feats_test))):
    binned = metrics.rmse_binned(pred, test.fa_gt)
    print(f"  {name:5s}", np.round(binned.rmse, 4))
