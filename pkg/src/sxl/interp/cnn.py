"""CNN regressor for 2x spatial interpolation with an optional local Moran's I head.

The low-resolution input is upsampled by nearest neighbour and passed through
three 3x3 convolutions. With the auxiliary task, the first convolution is the
shared trunk and the last two are duplicated per task: one head predicts the
high-resolution grid (MSE), the other its local Moran's I (l1). Moran targets
are divided by their training-set standard deviation so both losses start on
a comparable scale.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..autodiff import Tensor
from ..grid import downsample_strided
from ..metrics import rmse
from ..moran import local_moran_batch
from ..multitask import TaskWeighting
from ..optim import Adam

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


def _head(width, rng):
    return nn.Sequential(
        nn.Conv2d(width, width, 3, rng, padding=1),
        nn.BatchNorm2d(width),
        nn.ReLU(),
        nn.Conv2d(width, 1, 3, rng, padding=1),
    )


class InterpCNN(nn.Module):
    def __init__(self, rng, width=8, aux=False):
        self.trunk = nn.Sequential(
            nn.UpsampleNN(2),
            nn.Conv2d(1, width, 3, rng, padding=1),
            nn.BatchNorm2d(width),
            nn.ReLU(),
        )
        self.main = _head(width, rng)
        self.aux = _head(width, rng) if aux else None

    def forward(self, x):
        feats = self.trunk(x)
        return self.main(feats), (self.aux(feats) if self.aux is not None else None)

    def predict(self, low, batch_size=50):
        """Eval-mode prediction for an (N, h, w) array of low-resolution grids."""
        was = self.training
        self.eval()
        out = []
        for i in range(0, len(low), batch_size):
            main, _ = self(Tensor(low[i:i + batch_size, None]))
            out.append(main.value[:, 0])
        self.train(was)
        return np.concatenate(out)


@dataclass
class InterpData:
    """Paired low/high-resolution arrays for each partition plus Moran targets for training."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    moran_train: np.ndarray = None
    moran_scale: float = 1.0

    @classmethod
    def from_tiles(cls, train, val, test):
        """Build input/target pairs by strided downsampling of high-resolution tiles."""
        train, val, test = (np.asarray(t, dtype=np.float64) for t in (train, val, test))
        moran = local_moran_batch(train)
        scale = float(moran.std()) or 1.0
        return cls(downsample_strided(train), train, downsample_strided(val), val,
                   downsample_strided(test), test, moran / scale, scale)


@dataclass
class InterpRunResult:
    seed: int
    aux: str
    weighting: str
    rmse_no_selection: float
    rmse_selected: float
    best_epoch: int
    val_rmse: list = field(default_factory=list)
    sigmas: list = field(default_factory=list)
    final_state: dict = field(default=None, repr=False)
    best_state: dict = field(default=None, repr=False)


def train_interp_run(data, aux="none", weighting="uw", seed=0, epochs=8, batch_size=8,
                     width=8, lr=0.001, betas=(0.5, 0.999)):
    """Train one regressor; report test RMSE of the last epoch and of the best-validation epoch."""
    if aux not in ("none", "mat"):
        raise ValueError(f"aux must be 'none' or 'mat', got {aux!r}")
    rng = np.random.default_rng([int(seed), 1])
    model = InterpCNN(rng, width, aux == "mat")
    tw = TaskWeighting.parse(weighting, n_tasks=2) if aux == "mat" else None
    params = model.parameters() + (tw.parameters if tw else [])
    opt = Adam(params, lr=lr, betas=betas)
    order_rng = np.random.default_rng([int(seed), 2])
    n = len(data.x_train)
    best = (np.inf, -1, None)
    val_trace, sigma_trace = [], []
    for epoch in range(1, epochs + 1):
        model.train()
        perm = order_rng.permutation(n)
        for bi, start in enumerate(range(0, n, batch_size)):
            idx = perm[start:start + batch_size]
            if len(idx) < 2:
                continue
            x = Tensor(data.x_train[idx, None])
            main, aux_out = model(x)
            loss_main = nn.mse_loss(main, Tensor(data.y_train[idx, None]))
            if aux_out is None:
                loss = loss_main
            else:
                loss_aux = nn.l1_loss(aux_out, Tensor(data.moran_train[idx, None]))
                loss = tw.combine(loss_main, [loss_aux])
            if not np.isfinite(loss.value).all():
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {bi}")
            opt.zero_grad()
            loss.backward()
            opt.step()
        val = rmse(data.y_val, model.predict(data.x_val))
        val_trace.append(val)
        if tw is not None and tw.mode == "uncertainty":
            sigma_trace.append(tw.sigmas())
        if val < best[0]:
            best = (val, epoch, model.state_dict())
        log.debug("seed %d aux %s epoch %d val rmse %.5f", seed, aux, epoch, val)
    final_state = model.state_dict()
    rmse_final = rmse(data.y_test, model.predict(data.x_test))
    model.load_state_dict(best[2])
    rmse_best = rmse(data.y_test, model.predict(data.x_test))
    return InterpRunResult(
        seed=int(seed), aux=aux, weighting=weighting if aux == "mat" else "none",
        rmse_no_selection=rmse_final, rmse_selected=rmse_best, best_epoch=best[1],
        val_rmse=val_trace, sigmas=sigma_trace, final_state=final_state, best_state=best[2],
    )


def cnn_interpolate_train(data, aux="none", weighting="uw", runs=10, **kwargs):
    """Train ``runs`` models with seeds 0..runs-1."""
    return [train_interp_run(data, aux, weighting, seed=s, **kwargs) for s in range(runs)]


def load_model(state, aux=False, width=None):
    if width is None:
        width = state["trunk.layers.1.weight"].shape[0]
    model = InterpCNN(np.random.default_rng(0), width, aux)
    model.load_state_dict(state)
    return model.eval()
