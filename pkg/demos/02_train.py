"""Train a conditional VAE on synthetic inliers and watch the loss.

Training runs in two phases: a warm-up where the decoder's output variance
is pinned at 1 (so the mean head has to explain the data), then the full
learned-variance objective. The early stopper only engages after warm-up.
"""

import numpy as np

import cvaead

structure = cvaead.make_structure(n=20, m=4, o=3, seed=11)
pool = cvaead.generate(structure, count=8000, seed=11)
train_set, valid_set, test_set = cvaead.split_dataset(pool, seed=11)
print(f"split: {len(train_set)} train / {len(valid_set)} valid / {len(test_set)} test")

model = cvaead.build_model(x_dim=structure.n, k_dim=structure.m,
                           latent_dim=4, hidden=(32, 32), seed=11)
config = cvaead.TrainConfig(learning_rate=3e-3, batch_size=64, max_epochs=160,
                            patience=10, variance_warmup=80, seed=11)
result = cvaead.train(model, train_set, valid_set, config)

print(f"ran {result.epochs_run} epochs, best validation loss at epoch {result.best_epoch}")
bars = " .:-=+*#%@"
lo, hi = min(result.valid_loss), max(result.valid_loss)
trace = "".join(bars[min(int((v - lo) / (hi - lo + 1e-12) * 9), 9)]
                for v in result.valid_loss[:: max(1, len(result.valid_loss) // 60)])
print(f"valid loss  high->low  [{trace}]")
print(f"  first {result.valid_loss[0]:8.3f}   best {min(result.valid_loss):8.3f}")

# the trained model reconstructs held-out inliers far better than the prior
post = cvaead.encode(model, test_set.x, test_set.k)
dec = cvaead.decode(model, post.mu, test_set.k)
resid = np.sqrt(np.mean((test_set.x - dec.mu) ** 2))
print(f"held-out reconstruction rms {resid:.3f} vs feature std {test_set.x.std():.3f}")

cvaead.save_model(model, "/tmp/demo_model.ckpt")
print("checkpoint written to /tmp/demo_model.ckpt")
