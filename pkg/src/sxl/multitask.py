"""Loss combination: fixed auxiliary weight or learned homoskedastic uncertainty.

Uncertainty weights are parametrised by log-variances ``s_i = log(sigma_i**2)``,
so a task contributes ``exp(-s_i) / 2 * L_i + s_i / 2``.
"""
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

PRESET_LAMBDAS = (0.1, 0.01)


def combine_hard(main_loss, aux_losses, lam):
    """``main + lam * sum(aux)``."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    total = main_loss
    if aux_losses:
        aux = aux_losses[0]
        for extra in aux_losses[1:]:
            aux = aux + extra
        total = total + aux * lam
    return total


def combine_uncertainty(losses, log_vars):
    """Sum of ``exp(-s_i)/2 * L_i + s_i/2`` over tasks."""
    if len(losses) != len(log_vars) or not losses:
        raise ValueError(f"{len(losses)} losses for {len(log_vars)} log-variances")
    total = 0.0
    for loss, s in zip(losses, log_vars):
        if not isinstance(s, Tensor):
            s = Tensor(s)
        total = total + (-s).exp() * loss * 0.5 + s * 0.5
    return total


def combine_gan_uncertainty(d_main_loss, d_aux_losses, log_vars):
    """Discriminator objective: the main loss takes the first weight, auxiliaries the rest."""
    if len(log_vars) != 1 + len(d_aux_losses):
        raise ValueError(
            f"need {1 + len(d_aux_losses)} log-variances (main + auxiliaries), got {len(log_vars)}")
    return combine_uncertainty([d_main_loss, *d_aux_losses], log_vars)


@dataclass
class TaskWeighting:
    """Either ``mode="hard"`` with ``lam`` or ``mode="uncertainty"`` with one log-variance per task."""

    mode: str
    lam: float = None
    log_vars: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode == "hard":
            if self.lam is None or not self.lam > 0:
                raise ValueError(f"hard weighting needs lambda > 0, got {self.lam}")
        elif self.mode == "uncertainty":
            for s in self.log_vars:
                if not np.all(np.isfinite(s.value)):
                    raise ValueError("log-variances must be finite")
        else:
            raise ValueError(f"unknown weighting mode {self.mode!r}")

    @classmethod
    def hard(cls, lam):
        return cls("hard", lam=float(lam))

    @classmethod
    def uncertainty(cls, n_tasks, init=0.0):
        return cls("uncertainty", log_vars=[
            Tensor(np.array(float(init)), requires_grad=True, name=f"log_var.{i}")
            for i in range(n_tasks)
        ])

    @classmethod
    def parse(cls, text, n_tasks=1):
        """Parse ``"uw"`` or ``"lambda:<value>"``."""
        text = text.strip().lower()
        if text == "uw":
            return cls.uncertainty(n_tasks)
        if text.startswith("lambda:"):
            try:
                lam = float(text.split(":", 1)[1])
            except ValueError:
                raise ValueError(f"bad lambda in weighting {text!r}") from None
            return cls.hard(lam)
        raise ValueError(f"weighting must be 'uw' or 'lambda:<value>', got {text!r}")

    @property
    def parameters(self):
        return list(self.log_vars)

    def sigmas(self):
        return [float(np.exp(0.5 * s.value)) for s in self.log_vars]

    def combine(self, main_loss, aux_losses):
        if self.mode == "hard":
            return combine_hard(main_loss, aux_losses, self.lam)
        return combine_uncertainty([main_loss, *aux_losses], self.log_vars)
