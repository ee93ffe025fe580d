"""Fully convolutional denoising autoencoder and latent extraction.

Training corrupts inputs with Gaussian noise and reconstructs the clean
image under MSE, optimized with Adam and early stopping on a held-out
validation split. Latents always come from clean images: the pseudo
labels downstream should describe the data, not the corruption.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import ImageDataset, add_gaussian_noise
from .layers import Conv2D, ConvTranspose2D, Sequential, export_parameters, load_parameters
from .optim import AdamState, TrainingDivergedError, adam_step
from .seeds import derive_seed
from .tensor import NonFiniteError, Tensor, gradients, mse, no_grad


@dataclass(frozen=True)
class AutoencoderSpec:
    """Encoder conv stack; the decoder mirrors it with transposed convs."""

    encoder_layers: tuple = ((32, 3, 2), (64, 3, 2), (128, 3, 2))  # (filters, kernel, stride)
    image_size: int = 32
    channels: int = 3

    def latent_shape(self):
        size = self.image_size
        for i, (filters, kernel, stride) in enumerate(self.encoder_layers):
            if size % stride != 0:
                raise ValueError(
                    f"encoder layer {i} (filters={filters}): spatial size {size} "
                    f"not divisible by stride {stride}")
            size //= stride
        return (size, size, self.encoder_layers[-1][0])

    @property
    def latent_dim(self):
        h, w, c = self.latent_shape()
        return h * w * c


class Autoencoder:
    def __init__(self, spec: AutoencoderSpec, encoder: Sequential, decoder: Sequential):
        self.spec = spec
        self.encoder = encoder
        self.decoder = decoder

    def params(self):
        return self.encoder.params() + self.decoder.params()

    def encode(self, x):
        return self.encoder(x)

    def __call__(self, x):
        return self.decoder(self.encoder(x))


def build_autoencoder(spec: AutoencoderSpec, seed) -> Autoencoder:
    """Deterministically initialized encoder/decoder pair for the spec."""
    spec.latent_shape()  # validates stride geometry, names the bad layer
    rng = np.random.default_rng(derive_seed(seed, "autoencoder-init"))
    enc_layers, in_ch = [], spec.channels
    for filters, kernel, stride in spec.encoder_layers:
        enc_layers.append(Conv2D(rng, in_ch, filters, kernel=kernel, stride=stride,
                                 padding="same", activation="relu"))
        in_ch = filters
    dec_layers = []
    mirrored = list(spec.encoder_layers)
    for i in range(len(mirrored) - 1, 0, -1):
        f_out = mirrored[i - 1][0]
        _, kernel, stride = mirrored[i]
        dec_layers.append(ConvTranspose2D(rng, in_ch, f_out, kernel=kernel, stride=stride,
                                          padding="same", activation="relu"))
        in_ch = f_out
    _, kernel, stride = mirrored[0]
    dec_layers.append(ConvTranspose2D(rng, in_ch, spec.channels, kernel=kernel, stride=stride,
                                      padding="same", activation="linear"))
    return Autoencoder(spec, Sequential(enc_layers), Sequential(dec_layers))


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)   # one entry per epoch, 1-based
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0


def early_stopping_scan(val_losses, patience):
    """(best_epoch, stopped_epoch), 1-based, for a validation-loss sequence.

    Stops once the loss has failed to improve on the running best for
    `patience` consecutive epochs.
    """
    best = float("inf")
    best_epoch, since = 0, 0
    for epoch, value in enumerate(val_losses, start=1):
        if value < best:
            best, best_epoch, since = value, epoch, 0
        else:
            since += 1
            if since >= patience:
                return best_epoch, epoch
    return best_epoch, len(val_losses)


def reconstruction_loss(model, clean, corrupted, batch_size=256):
    """Mean squared error of model(corrupted) against clean, no gradients."""
    total, count = 0.0, 0
    with no_grad():
        for start in range(0, len(clean), batch_size):
            x = clean[start:start + batch_size]
            xn = corrupted[start:start + batch_size]
            loss = mse(model(Tensor(xn)), Tensor(x))
            total += loss.item() * len(x)
            count += len(x)
    return total / count


def train_dae(model: Autoencoder, dataset: ImageDataset, sigma=0.01, max_epochs=100,
              patience=5, val_fraction=0.1, batch_size=64, seed=0, adam_lr=1e-3):
    """Train with corrupted inputs against clean targets; restore best weights.

    The validation corruption is drawn once so the validation curve
    reflects only model movement. Labels are never read here.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in (0,1), got {val_fraction}")
    n = len(dataset)
    perm = np.random.default_rng(derive_seed(seed, "dae-split")).permutation(n)
    val_count = max(1, int(round(val_fraction * n)))
    if val_count >= n:
        raise ValueError(f"val_fraction {val_fraction} leaves no training images")
    val_idx, train_idx = perm[:val_count], perm[val_count:]
    val_clean = dataset.images[val_idx]
    val_corrupted = add_gaussian_noise(val_clean, sigma, derive_seed(seed, "dae-val-noise"))

    params = model.params()
    state = AdamState.init(params, lr=adam_lr)
    history = TrainHistory()
    best_val, best_params, since = float("inf"), None, 0

    for epoch in range(1, max_epochs + 1):
        order = train_idx.copy()
        np.random.default_rng(derive_seed(seed, "dae-shuffle", epoch)).shuffle(order)
        epoch_loss, seen = 0.0, 0
        for bi, start in enumerate(range(0, len(order), batch_size)):
            batch = order[start:start + batch_size]
            x = dataset.images[batch]
            xn = add_gaussian_noise(x, sigma, derive_seed(seed, "dae-noise", epoch, bi))
            try:
                loss = mse(model(Tensor(xn)), Tensor(x))
                grads = gradients(loss, params)
                adam_step(params, grads, state)
            except NonFiniteError as err:
                raise TrainingDivergedError(
                    f"training diverged at epoch {epoch}, batch {bi}: {err}", history) from err
            epoch_loss += loss.item() * len(batch)
            seen += len(batch)
        history.train_loss.append(epoch_loss / seen)
        history.val_loss.append(reconstruction_loss(model, val_clean, val_corrupted))

        if history.val_loss[-1] < best_val:
            best_val = history.val_loss[-1]
            best_params = export_parameters(model)
            history.best_epoch = epoch
            since = 0
        else:
            since += 1
        history.stopped_epoch = epoch
        if since >= patience:
            break

    if best_params is not None:
        load_parameters(model, best_params)
    return model, history


def extract_latents(model: Autoencoder, dataset: ImageDataset, batch_size=256):
    """Encoder outputs for every clean image, flattened row-major (n, d)."""
    rows = []
    with no_grad():
        for start in range(0, len(dataset), batch_size):
            x = Tensor(dataset.images[start:start + batch_size])
            z = model.encode(x)
            rows.append(z.data.reshape(len(z.data), -1))
    return np.concatenate(rows, axis=0).astype(np.float32)
