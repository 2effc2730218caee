"""GANs whose discriminator also classifies local Moran's I embeddings.

The discriminator is a shared trunk followed by one single-layer head per
task. Head 0 separates real tiles from generated ones; each auxiliary head
separates the Moran embedding of real tiles from that of generated tiles at
one resolution level. Auxiliary losses only reach the discriminator: the
embeddings of generated tiles are computed from detached values.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .autodiff import Tensor
from .io import load_checkpoint, save_checkpoint
from .metrics import MmdConfig, median_heuristic_bandwidth, mmd2
from .moran import MoranConfig, local_moran_batch, multires_moran_batch
from .multitask import TaskWeighting, combine_gan_uncertainty, combine_hard
from .optim import Adam

log = logging.getLogger(__name__)

ARCHS = ("vanilla", "dcgan", "edgan")
AUX_MODES = ("none", "mat", "mres_mat")
EVAL_STREAM = 1 << 20


class TrainingDiverged(RuntimeError):
    pass


# data --------------------------------------------------------------------

@dataclass(frozen=True)
class TileScaler:
    """Affine map from data units to [-1, 1], fitted on the training tiles."""

    lo: float
    hi: float

    @classmethod
    def fit(cls, tiles):
        tiles = np.asarray(tiles, dtype=np.float64)
        return cls(float(tiles.min()), float(tiles.max()))

    @property
    def span(self):
        return self.hi - self.lo if self.hi > self.lo else 2.0

    def encode(self, x):
        return 2.0 * (np.asarray(x, dtype=np.float64) - self.lo) / self.span - 1.0

    def decode(self, y):
        return (np.asarray(y, dtype=np.float64) + 1.0) * 0.5 * self.span + self.lo


@dataclass
class GanData:
    """Train/validation/test tiles in data units, each (N, S, S)."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.train, self.val, self.test = (np.asarray(t, dtype=np.float64)
                                           for t in (self.train, self.val, self.test))
        shapes = {t.shape[1:] for t in (self.train, self.val, self.test)}
        if len(shapes) != 1 or self.train.ndim != 3:
            raise ValueError(f"partitions must share one (S, S) tile shape, got {shapes}")
        if min(len(self.train), len(self.val), len(self.test)) < 2:
            raise ValueError("every partition needs at least 2 tiles")

    @property
    def size(self):
        return self.train.shape[1]


# configuration -----------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    seed: int = 0
    aux_mode: str = "none"
    levels: int = 3
    weighting: str = "uw"
    arch: str = "vanilla"
    latent_dim: int = 100
    width: int = 8
    lr: float = 0.001
    betas: tuple = (0.5, 0.999)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError(f"epochs and batch_size must be >= 1, got {self.epochs}, {self.batch_size}")
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.aux_mode not in AUX_MODES:
            raise ValueError(f"aux_mode must be one of {AUX_MODES}, got {self.aux_mode!r}")
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")
        TaskWeighting.parse(self.weighting, 1)

    @property
    def n_aux(self):
        return {"none": 0, "mat": 1, "mres_mat": self.levels}[self.aux_mode]

    def latent_shape(self, size):
        # the encoder-decoder generator starts from a noise image
        return (1, size, size) if self.arch == "edgan" else (self.latent_dim,)

    def moran_embedding(self, x):
        """Embeddings of an (N, S, S) batch as (N, n_aux, S, S)."""
        if self.aux_mode == "mat":
            return local_moran_batch(x)[:, None]
        return multires_moran_batch(x, MoranConfig(levels=self.levels))


# architectures -----------------------------------------------------------

class Generator(nn.Module):
    def __init__(self, net):
        self.net = net

    def forward(self, z):
        return self.net(z)


class Discriminator(nn.Module):
    """Shared trunk plus one head per task; every head ends in a sigmoid probability."""

    def __init__(self, trunk, heads):
        self.trunk = trunk
        self.heads = list(heads)

    @property
    def n_aux(self):
        return len(self.heads) - 1

    def forward(self, x, head=0):
        return self.heads[head](self.trunk(x))


def _check_size(arch, size, multiple):
    if size % multiple or size < multiple:
        raise ValueError(f"{arch} needs a tile size divisible by {multiple}, got {size}")


def _vanilla(size, rng, cfg, n_heads):
    w = cfg.width
    dims = [cfg.latent_dim, 16 * w, 32 * w, 32 * w, 64 * w]
    layers = []
    for a, b in zip(dims, dims[1:]):
        layers += [nn.Linear(a, b, rng), nn.BatchNorm1d(b), nn.LeakyReLU(0.2)]
    layers += [nn.Linear(dims[-1], size * size, rng), nn.Tanh(), nn.Reshape(1, size, size)]
    trunk = nn.Sequential(nn.Reshape(size * size), nn.Linear(size * size, 32 * w, rng), nn.LeakyReLU(0.2),
                          nn.Linear(32 * w, 16 * w, rng), nn.LeakyReLU(0.2))
    heads = [nn.Sequential(nn.Linear(16 * w, 1, rng), nn.Sigmoid()) for _ in range(n_heads)]
    return nn.Sequential(*layers), trunk, heads


def _dcgan(size, rng, cfg, n_heads):
    _check_size("dcgan", size, 8)
    w, s8, s4 = cfg.width, size // 8, size // 4
    gen = nn.Sequential(
        nn.Linear(cfg.latent_dim, 4 * w * s8 * s8, rng), nn.Reshape(4 * w, s8, s8),
        nn.BatchNorm2d(4 * w), nn.ReLU(),
        nn.ConvTranspose2d(4 * w, 2 * w, 4, rng, stride=2, padding=1), nn.BatchNorm2d(2 * w), nn.ReLU(),
        nn.ConvTranspose2d(2 * w, w, 4, rng, stride=2, padding=1), nn.BatchNorm2d(w), nn.ReLU(),
        nn.ConvTranspose2d(w, 1, 4, rng, stride=2, padding=1), nn.Tanh(),
    )
    trunk = nn.Sequential(
        nn.Conv2d(1, w, 4, rng, stride=2, padding=1), nn.LeakyReLU(0.2),
        nn.Conv2d(w, 2 * w, 4, rng, stride=2, padding=1), nn.BatchNorm2d(2 * w), nn.LeakyReLU(0.2),
    )
    heads = [nn.Sequential(nn.Conv2d(2 * w, 1, 3, rng, padding=1), nn.Reshape(s4 * s4),
                           nn.Linear(s4 * s4, 1, rng), nn.Sigmoid()) for _ in range(n_heads)]
    return gen, trunk, heads


def _edgan(size, rng, cfg, n_heads):
    _check_size("edgan", size, 8)
    w, s4 = cfg.width, size // 4
    gen = nn.Sequential(
        nn.Conv2d(1, w, 4, rng, stride=2, padding=1), nn.LeakyReLU(0.2),
        nn.Conv2d(w, 2 * w, 4, rng, stride=2, padding=1), nn.BatchNorm2d(2 * w), nn.LeakyReLU(0.2),
        nn.Conv2d(2 * w, 4 * w, 4, rng, stride=2, padding=1), nn.BatchNorm2d(4 * w), nn.LeakyReLU(0.2),
        nn.ConvTranspose2d(4 * w, 2 * w, 4, rng, stride=2, padding=1), nn.ReLU(),
        nn.ConvTranspose2d(2 * w, w, 4, rng, stride=2, padding=1), nn.ReLU(),
        nn.ConvTranspose2d(w, 1, 4, rng, stride=2, padding=1), nn.Tanh(),
    )
    trunk = nn.Sequential(
        nn.Conv2d(1, w, 3, rng, padding=1), nn.LeakyReLU(0.2),
        nn.Conv2d(w, w, 4, rng, stride=2, padding=1), nn.BatchNorm2d(w), nn.LeakyReLU(0.2),
        nn.Conv2d(w, 2 * w, 3, rng, padding=1), nn.BatchNorm2d(2 * w), nn.LeakyReLU(0.2),
        nn.Conv2d(2 * w, 2 * w, 4, rng, stride=2, padding=1), nn.BatchNorm2d(2 * w), nn.LeakyReLU(0.2),
        nn.Conv2d(2 * w, 2 * w, 3, rng, padding=1), nn.BatchNorm2d(2 * w), nn.LeakyReLU(0.2),
    )
    heads = [nn.Sequential(nn.Conv2d(2 * w, 1, s4, rng), nn.Reshape(1), nn.Sigmoid())
             for _ in range(n_heads)]
    return gen, trunk, heads


_BUILDERS = {"vanilla": _vanilla, "dcgan": _dcgan, "edgan": _edgan}


def build_gan(cfg, size, rng):
    """Return ``(generator, discriminator)`` for square tiles of side ``size``."""
    gen, trunk, heads = _BUILDERS[cfg.arch](int(size), rng, cfg, 1 + cfg.n_aux)
    return Generator(gen), Discriminator(trunk, heads)


# losses ------------------------------------------------------------------

def _nonempty(*batches):
    for b in batches:
        if b.shape[0] == 0:
            raise ValueError("empty batch")


def d_loss_main(d, real, fake):
    """BCE of the main head: real tiles labelled 1, generated tiles labelled 0."""
    _nonempty(real, fake)
    if real.shape[1:] != fake.shape[1:]:
        raise ValueError(f"real tiles {real.shape[1:]} and fakes {fake.shape[1:]} differ in shape")
    return nn.bce_loss(d(real), 1.0) + nn.bce_loss(d(fake), 0.0)


def g_loss(d, fake):
    """Non-saturating generator loss: generated tiles labelled 1."""
    _nonempty(fake)
    return nn.bce_loss(d(fake), 1.0)


def d_loss_aux(d, moran_real, moran_fake):
    """One BCE loss per auxiliary head; channel k of the (N, C, S, S) stacks feeds head k + 1."""
    moran_real = np.asarray(moran_real, dtype=np.float64)
    moran_fake = np.asarray(moran_fake, dtype=np.float64)
    _nonempty(moran_real, moran_fake)
    for name, m in (("real", moran_real), ("fake", moran_fake)):
        if m.ndim != 4 or m.shape[1] != d.n_aux:
            raise ValueError(f"{name} embedding has shape {m.shape}; "
                             f"the discriminator has {d.n_aux} auxiliary heads")
    return [nn.bce_loss(d(Tensor(moran_real[:, k:k + 1]), k + 1), 1.0)
            + nn.bce_loss(d(Tensor(moran_fake[:, k:k + 1]), k + 1), 0.0)
            for k in range(d.n_aux)]


# training ----------------------------------------------------------------

@dataclass
class CycleResult:
    cycle: int
    seed: int
    validation_mmd: float
    best_epoch: int
    best_state: dict = field(repr=False)
    optimizer_state: dict = field(default=None, repr=False)
    optimizer_step: int = 0
    scaler: TileScaler = None
    val_mmd: list = field(default_factory=list)
    records: list = field(default_factory=list, repr=False)


def _ensure_finite(loss, name, epoch, batch):
    if not np.all(np.isfinite(loss.value)):
        raise TrainingDiverged(f"non-finite {name} at epoch {epoch}, batch {batch}")


def _sample_latent(rng, n, shape):
    return Tensor(rng.standard_normal((n,) + tuple(shape)))


def generate(gen, cfg, size, n, seed, scaler):
    """Draw ``n`` tiles in data units from an eval-mode generator with a seeded latent."""
    was = gen.training
    gen.eval()
    z = _sample_latent(np.random.default_rng(seed), n, cfg.latent_shape(size))
    out = scaler.decode(gen(z).value[:, 0])
    gen.train(was)
    return out


def _moran_scales(embedding):
    scale = embedding.std(axis=(0, 2, 3))
    return np.where(scale > 0, scale, 1.0)[None, :, None, None]


def train_cycle(data, cfg, cycle=0, bandwidth=None, on_epoch=None):
    """Train one GAN; keep the generator with the lowest validation MMD.

    ``bandwidth`` fixes the MMD kernel width; by default it is the median
    pairwise distance among the validation tiles. ``on_epoch`` receives one
    metrics dict per epoch.
    """
    size = data.size
    seed = int(cfg.seed)
    init_rng = np.random.default_rng([seed, cycle, 0])
    order_rng = np.random.default_rng([seed, cycle, 1])
    latent_rng = np.random.default_rng([seed, cycle, 2])
    gen, disc = build_gan(cfg, size, init_rng)
    weighting = TaskWeighting.parse(cfg.weighting, 1 + cfg.n_aux) if cfg.n_aux else None
    extra = weighting.parameters if weighting else []
    opt_g = Adam(gen.parameters(), cfg.lr, cfg.betas)
    opt_d = Adam(disc.parameters() + extra, cfg.lr, cfg.betas)

    scaler = TileScaler.fit(data.train)
    train = scaler.encode(data.train)[:, None]
    if cfg.n_aux:
        # Moran's I is invariant to positive affine maps, so embeddings of scaled tiles match data units
        moran_train = cfg.moran_embedding(data.train)
        moran_scale = _moran_scales(moran_train)
        moran_train = moran_train / moran_scale
    if bandwidth is None:
        bandwidth = median_heuristic_bandwidth(data.val)
    mmd_cfg = MmdConfig(bandwidth=float(bandwidth))
    eval_seed = [seed, EVAL_STREAM]

    n = len(train)
    shape = cfg.latent_shape(size)
    best = (np.inf, 0, None, None, 0)
    val_trace, records = [], []
    for epoch in range(1, cfg.epochs + 1):
        gen.train()
        disc.train()
        perm = order_rng.permutation(n)
        sums = {"d": 0.0, "g": 0.0, "aux": np.zeros(cfg.n_aux)}
        batches = 0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start:start + cfg.batch_size]
            if len(idx) < 2:
                continue
            real = Tensor(train[idx])
            fake = gen(_sample_latent(latent_rng, len(idx), shape))
            fake_det = Tensor(fake.value)

            d_main = d_loss_main(disc, real, fake_det)
            _ensure_finite(d_main, "discriminator loss", epoch, bi)
            aux = []
            if cfg.n_aux:
                moran_fake = cfg.moran_embedding(fake.value[:, 0]) / moran_scale
                aux = d_loss_aux(disc, moran_train[idx], moran_fake)
                for k, a in enumerate(aux):
                    _ensure_finite(a, f"auxiliary loss {k + 1}", epoch, bi)
                if weighting.mode == "hard":
                    d_total = combine_hard(d_main, aux, weighting.lam)
                else:
                    d_total = combine_gan_uncertainty(d_main, aux, weighting.log_vars)
            else:
                d_total = d_main
            opt_d.zero_grad()
            d_total.backward()
            opt_d.step()

            gl = g_loss(disc, fake)
            _ensure_finite(gl, "generator loss", epoch, bi)
            opt_g.zero_grad()
            gl.backward()
            opt_g.step()

            sums["d"] += d_main.item()
            sums["g"] += gl.item()
            sums["aux"] += [a.item() for a in aux]
            batches += 1

        samples = generate(gen, cfg, size, len(data.val), eval_seed, scaler)
        val = mmd2(samples, data.val, mmd_cfg)
        if not np.isfinite(val):
            raise TrainingDiverged(f"non-finite validation MMD at epoch {epoch}")
        val_trace.append(val)
        if val < best[0]:
            best = (val, epoch, gen.state_dict(), opt_g.state_dict(), opt_g.step_count)
        rec = {
            "cycle": int(cycle), "epoch": epoch,
            "d_loss": sums["d"] / max(batches, 1), "g_loss": sums["g"] / max(batches, 1),
            "aux_losses": [float(a) / max(batches, 1) for a in sums["aux"]],
            "sigmas": weighting.sigmas() if weighting and weighting.mode == "uncertainty" else [],
            "val_mmd": val,
        }
        records.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        log.debug("cycle %d epoch %d val mmd %.6f", cycle, epoch, val)
    return CycleResult(cycle=int(cycle), seed=seed, validation_mmd=best[0], best_epoch=best[1],
                       best_state=best[2], optimizer_state=best[3], optimizer_step=best[4], scaler=scaler, val_mmd=val_trace, records=records)


def _cycle_job(args):
    return train_cycle(*args)


def train_cycles(data, cfg, cycles=10, bandwidth=None, workers=1, on_epoch=None):
    """Train ``cycles`` independent GANs (cycle indices 0..cycles-1).

    Cycles are seeded independently, so results do not depend on ``workers``.
    """
    if cycles < 1:
        raise ValueError(f"cycles must be >= 1, got {cycles}")
    if bandwidth is None:
        bandwidth = median_heuristic_bandwidth(data.val)
    if workers > 1 and cycles > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cycle_job, [(data, cfg, c, bandwidth) for c in range(cycles)]))
        if on_epoch is not None:
            for res in results:
                for rec in res.records:
                    on_epoch(rec)
        return results
    return [train_cycle(data, cfg, c, bandwidth, on_epoch) for c in range(cycles)]


def load_generator(state, cfg, size):
    gen, _ = build_gan(cfg, size, np.random.default_rng(0))
    gen.load_state_dict(state)
    return gen.eval()


def select_generator(cycles, test_tiles, cfg, bandwidth=None):
    """Pick the cycle with the lowest validation MMD (ties go to the lowest index).

    Returns ``(chosen CycleResult, test MMD)``; the test MMD compares as many
    generated tiles as there are test tiles.
    """
    if not cycles:
        raise ValueError("no cycles to select from")
    chosen = cycles[int(np.argmin([c.validation_mmd for c in cycles]))]
    test_tiles = np.asarray(test_tiles, dtype=np.float64)
    if bandwidth is None:
        bandwidth = median_heuristic_bandwidth(test_tiles)
    size = test_tiles.shape[-1]
    gen = load_generator(chosen.best_state, cfg, size)
    samples = generate(gen, cfg, size, len(test_tiles), [int(cfg.seed), EVAL_STREAM + 1], chosen.scaler)
    return chosen, mmd2(samples, test_tiles, MmdConfig(bandwidth=float(bandwidth)))


# checkpoints -------------------------------------------------------------

def save_generator(path, result, cfg, size):
    """Write the best generator of a cycle plus what is needed to rebuild and sample it."""
    tensors = dict(result.best_state)
    tensors.update(result.optimizer_state or {})
    tensors["meta.generator"] = np.array([ARCHS.index(cfg.arch), size, cfg.latent_dim, cfg.width],
                                         dtype=np.float64)
    tensors["meta.scaler"] = np.array([result.scaler.lo, result.scaler.hi])
    tensors["meta.validation_mmd"] = np.array([result.validation_mmd])
    tensors["meta.best_epoch"] = np.array([result.best_epoch], dtype=np.float64)
    save_checkpoint(path, tensors, step=result.optimizer_step)


def load_generator_checkpoint(path):
    """Return ``(generator, cfg, size, scaler, best_epoch)`` from :func:`save_generator` output."""
    tensors, _ = load_checkpoint(path)
    try:
        arch, size, latent, width = (int(v) for v in tensors.pop("meta.generator"))
        lo, hi = tensors.pop("meta.scaler")
        step = int(tensors.pop("meta.best_epoch")[0])
    except KeyError as exc:
        raise ValueError(f"{path}: not a generator checkpoint (missing {exc})") from None
    cfg = TrainConfig(arch=ARCHS[arch], latent_dim=latent, width=width)
    return load_generator(tensors, cfg, size), cfg, size, TileScaler(float(lo), float(hi)), step
