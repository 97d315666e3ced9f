"""GAN morphing walkthrough: a short adversarial training run on synthetic eyes.

Trains the landmark-conditioned encoder/generator/critic with the gradient
penalty and the dynamic loss-weight adjuster for a few hundred steps at 32 px
(small enough for a laptop CPU), then produces a latent-interpolation morph of
two training images.

Run:  python3 demos/demo_gan_training.py
"""

import os
import tempfile

import numpy as np

from ocumorph.data import OcularImage, RAW, save_image
from ocumorph.networks import NetConfig
from ocumorph.training import TrainConfig, make_morph, read_log, train
from synth import synthetic_eye_set

OUT = os.path.join(os.path.dirname(__file__), "out_gan")
STEPS = 300


def main():
    os.makedirs(OUT, exist_ok=True)
    imgs, pts = synthetic_eye_set(8, 32, seed=0)
    config = TrainConfig(batch_size=8, epochs=STEPS, seed=0, checkpoint_every=100,
                         lr_e=1e-3, lr_g=1e-3, lr_gamma=1.0, ms_ssim_scales=1,
                         net=NetConfig(ndf=16, ngf=16, image_size=32))
    with tempfile.TemporaryDirectory() as work:
        model = train(config, imgs, pts, work, max_steps=STEPS)
        log = read_log(os.path.join(work, "train_log.csv"))

    print("step   recon    critic   w_adv  w_recon")
    for row in log[:: max(1, STEPS // 10)]:
        print(f"{row['step']:4.0f}   {row['loss_reconstruction']:.4f}  "
              f"{row['critic_loss']:8.4f}  {row['w_adv']:.3f}  "
              f"{row['w_reconstruction']:.3f}")
    drop = 1 - np.mean([r["loss_reconstruction"] for r in log[-10:]]) \
        / np.mean([r["loss_reconstruction"] for r in log[:10]])
    print(f"\nreconstruction loss fell {100 * drop:.0f}% over {STEPS} steps")

    # blend subjects 0 and 1 in latent space
    for alpha in (0.0, 0.5, 1.0):
        m = make_morph(model, imgs[0], imgs[1], pts[0], pts[1], alpha=alpha)
        save_image(os.path.join(OUT, f"gan_morph_{alpha:.1f}.png"),
                   OcularImage((m + 1) * 127.5, RAW))
    print(f"latent morphs written to {OUT}/")


if __name__ == "__main__":
    main()
