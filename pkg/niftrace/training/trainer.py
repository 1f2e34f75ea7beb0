"""
Training loop of a neural image field on one HDR image.
"""

import json
import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import pandas as pd

from niftrace.constants import DEFAULT_HUBER_DELTA, DEFAULT_LEARNING_RATE, DEFAULT_LOSS_SCALE
from niftrace.exceptions import ConfigurationError, DivergenceError
from niftrace.images import HdrImage
from niftrace.metrics.psnr import psnr
from niftrace.nif.network import DEFAULT_CHUNK, NifWeights, nif_forward
from niftrace.training.adam import AdamState, adam_step
from niftrace.training.backprop import loss_and_gradients
from niftrace.training.sampling import eval_grid, resample, sample_batch
from niftrace.utils import progress

logger = logging.getLogger(__name__)

MASTER_PRECISIONS = ("f32", "f16_stochastic")
TRACE_COLUMNS = ["step", "psnr_rgb", "psnr_luma", "psnr_chroma"]


@dataclass
class TrainConfig:
    """
    Args:
        learning_rate: Adam step size.
        huber_delta: Huber threshold in compressed space.
        batch_size: samples per step.
        steps: number of optimiser steps.
        eval_interval: steps between PSNR evaluations.
        eval_width, eval_height: evaluation grid (None = image size).
        loss_scale: gradient scale used in f16_stochastic mode.
        master_precision: "f32" or "f16_stochastic".
        seed: seed of initialisation, batches and rounding.
        inference_chunk: rows per chunk when reconstructing the eval grid.
    """
    learning_rate: float = DEFAULT_LEARNING_RATE
    huber_delta: float = DEFAULT_HUBER_DELTA
    batch_size: int = 4096
    steps: int = 20000
    eval_interval: int = 1000
    eval_width: Optional[int] = None
    eval_height: Optional[int] = None
    loss_scale: float = DEFAULT_LOSS_SCALE
    master_precision: str = "f32"
    seed: int = 0
    inference_chunk: int = DEFAULT_CHUNK

    def __post_init__(self):
        if not self.learning_rate > 0 or not self.huber_delta > 0 or not self.loss_scale > 0:
            raise ConfigurationError("learning_rate, huber_delta and loss_scale must be positive")
        if self.batch_size < 1 or self.eval_interval < 1 or self.steps < 0 or self.inference_chunk < 1:
            raise ConfigurationError("batch_size, eval_interval and inference_chunk must be positive, "
                                     "steps non-negative")
        if self.steps and self.eval_interval > self.steps:
            raise ConfigurationError(f"eval_interval ({self.eval_interval}) exceeds steps ({self.steps})")
        for dim in (self.eval_width, self.eval_height):
            if dim is not None and dim < 1:
                raise ConfigurationError("evaluation grid dimensions must be positive")
        if self.master_precision not in MASTER_PRECISIONS:
            raise ConfigurationError(f"master_precision must be one of {MASTER_PRECISIONS}")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")

    @property
    def stochastic(self):
        return self.master_precision == "f16_stochastic"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


class Trainer:
    """
    Fits a field to an image with Huber loss and Adam.

    Parameters
    ----------
    image : HdrImage
        Equirectangular training image.
    nif_config : NifConfig
        Architecture.
    train_config : TrainConfig
        Optimisation settings.
    weights : NifWeights, optional
        Starting point; He-uniform initialisation when omitted.
    """

    def __init__(self, image, nif_config, train_config, weights=None):
        self.image = image
        self.nif_config = nif_config
        self.config = train_config
        seed = train_config.seed
        self.batch_rng = np.random.default_rng([seed, 1])
        self.rounding_rng = np.random.default_rng([seed, 2]) if train_config.stochastic else None

        if weights is None:
            weights = NifWeights.he_uniform(nif_config, np.random.default_rng([seed, 0]))
        elif weights.config != nif_config:
            raise ConfigurationError("starting weights do not match the architecture")
        if self.rounding_rng is not None:
            weights = weights.quantise_f16(self.rounding_rng)
        self.weights = weights
        self.state = AdamState.zeros_like(weights.parameters())

        self.eval_width = train_config.eval_width or image.width
        self.eval_height = train_config.eval_height or image.height
        self.eval_uv = eval_grid(self.eval_width, self.eval_height)
        self.eval_reference = HdrImage(resample(image, self.eval_width, self.eval_height))

        self.step_count = 0
        self.rejected_steps = 0
        self.loss_hist = []
        self.psnr_hist = []
        self.initial_report = None

    def reconstruct(self, width=None, height=None):
        """
        Field evaluated on a pixel-centre grid (the eval grid by default).
        """
        if width is None and height is None:
            width, height, uv = self.eval_width, self.eval_height, self.eval_uv
        else:
            uv = eval_grid(width, height)
        rgb = nif_forward(self.weights, self.nif_config, uv, self.config.inference_chunk)
        return HdrImage(rgb.reshape(height, width, 3))

    def evaluate(self):
        return psnr(self.eval_reference, self.reconstruct())

    def step(self):
        """
        One sample -> forward -> loss -> backward -> Adam iteration.

        Returns:
            the batch loss.
        """
        cfg = self.config
        uv, targets = sample_batch(self.image, cfg.batch_size, self.batch_rng)
        scale = cfg.loss_scale if cfg.stochastic else 1.0
        loss, grads = loss_and_gradients(self.weights, self.nif_config, uv, targets, cfg.huber_delta,
                                         loss_scale=scale)
        if not np.isfinite(loss):
            raise DivergenceError(f"training diverged at step {self.step_count}: loss {loss}",
                                  step=self.step_count)
        params, state, accepted = adam_step(self.weights.parameters(), grads.parameters(), self.state,
                                            lr=cfg.learning_rate, grad_scale=scale,
                                            stochastic_rng=self.rounding_rng)
        if accepted:
            self.weights = NifWeights.from_parameters(self.nif_config, params)
            self.state = state
        else:
            self.rejected_steps += 1
            logger.warning("step %d: non-finite gradient, update rejected (%d so far)",
                           self.step_count, self.rejected_steps)
        self.step_count += 1
        self.loss_hist.append(loss)
        return loss

    def record(self):
        report = self.evaluate()
        row = {"step": self.step_count, **report.as_dict()}
        self.psnr_hist.append(row)
        logger.info("step %d: loss %.3e, %s", self.step_count, self.loss_hist[-1], report)
        return report

    def trace(self):
        return pd.DataFrame(self.psnr_hist, columns=TRACE_COLUMNS)

    def run(self, steps=None, disable_progress=None):
        """
        Runs the loop, evaluating every eval_interval steps.

        Returns:
            (weights, PSNR trace DataFrame with columns step, psnr_rgb,
            psnr_luma, psnr_chroma)
        """
        steps = self.config.steps if steps is None else steps
        if self.initial_report is None:
            self.initial_report = self.evaluate()
            logger.info("initial %s", self.initial_report)
        if disable_progress is None:
            disable_progress = steps < 100
        for _ in progress(range(steps), total=steps, desc="training", disable=disable_progress):
            self.step()
            if self.step_count % self.config.eval_interval == 0:
                self.record()
        return self.weights, self.trace()


def train(image, nif_config, train_config, weights=None):
    """
    Trains a field on an image.

    Returns:
        (NifWeights, PSNR trace DataFrame)
    """
    return Trainer(image, nif_config, train_config, weights=weights).run()
