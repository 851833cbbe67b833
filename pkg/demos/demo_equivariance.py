"""Measure rotation invariance of the spherical network.

The spherical layers commute with rotations up to the pointwise ReLU
(evaluated on an oversampled grid), and the power-spectrum readout is
exactly invariant, so even an untrained SCNN barely moves when its
input is rotated.  An FCN has no such structure.
"""
import numpy as np

from sphadc import datagen, metrics, nn, sphere, tensor

rng = np.random.default_rng(5)
grid = sphere.SphGrid(8)
pcfg = datagen.PhantomConfig(n_voxels=1, seed=5)

inputs = []
for _ in range(25):
    dt = datagen.sample_ground_truth_dt(rng, pcfg)
    inputs.append(nn.scnn_input_coeffs(sphere.sample_adc(dt, grid)))
inputs = np.array(inputs)

for label, spec in (
        ("identity activation (exactly linear-equivariant)",
         nn.ModelSpec(kind="scnn", activation="identity")),
        ("relu activation, 2x oversampled grid",
         nn.ModelSpec(kind="scnn"))):
    model = nn.init_model(spec, seed=3)
    mx, mean = metrics.equivariance_error(model, inputs, 50, seed=9)
    print(f"{label}:\n  max |f(Rx) - f(x)| = {mx:.2e}, mean = {mean:.2e}")

# Contrast: feed the FCN the same six signals in a rotated acquisition
# frame and watch the output move.
fcn = nn.init_model(nn.ModelSpec(kind="fcn"), seed=3)
dt = tensor.DiffusionTensor.from_matrix(np.diag([1.7e-3, 0.2e-3, 0.2e-3]))
dirs = rng.standard_normal((6, 3))
dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
devs = []
base = nn.forward(fcn, np.exp(-1000.0 * (tensor.quadratic_form_rows(dirs)
                                         @ dt.as_vector())))
for _ in range(50):
    rot = sphere.random_rotation(rng).matrix
    m = rot @ dt.as_matrix() @ rot.T
    v = tensor.DiffusionTensor.from_matrix(m).as_vector()
    out = nn.forward(fcn, np.exp(-1000.0 * (tensor.quadratic_form_rows(dirs) @ v)))
    devs.append(abs(out - base))
print(f"fcn on rotated tensors:\n  max |f(Rx) - f(x)| = {max(devs):.2e}")
