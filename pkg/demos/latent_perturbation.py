"""How the latent multiplier controls departure from the seed track.

    python3 demos/latent_perturbation.py

An autoencoder is trained briefly on generated tracks. One seed track is then
decoded with latent multipliers drawn around several means, and the mean
distance of the decoded track from the plain reconstruction is printed. A
multiplier of exactly one gives the reconstruction itself.
"""

import numpy as np

from stormsynth import autoenc, hurdat2, trackprep
from stormsynth.autoenc import PerturbationConfig, TrainConfig
from stormsynth.synthetic_archive import make_archive

storms = hurdat2.parse_archive(make_archive(300, seed=2))
tracks, scaler, _ = trackprep.prepare_corpus(storms)
net, history = autoenc.train(tracks, TrainConfig(epochs=60, rng_seed=0))
print(f"training loss {history[0]:.4f} -> {history[-1]:.4f}")

seed = tracks[0].points.ravel()
plain = autoenc.perturb_and_decode(net, seed, PerturbationConfig(1.0, 0.0),
                                   np.random.default_rng(0)).points
for mean in (1.0, 0.95, 0.9, 0.8, 0.6):
    cfg = PerturbationConfig(mean, 0.1 if mean < 1 else 0.0)
    rng = np.random.default_rng(1)
    gaps = []
    for _ in range(50):
        out = autoenc.perturb_and_decode(net, seed, cfg, rng).points
        deg = trackprep.invert_scaler(out, scaler) - trackprep.invert_scaler(plain, scaler)
        gaps.append(np.hypot(deg[:, 0], deg[:, 1]).mean())
    print(f"multiplier mean {mean:4.2f}: mean offset {np.mean(gaps):5.2f} deg")
