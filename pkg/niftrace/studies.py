"""
Desk-scale studies: synthetic HDR panoramas, the model-size and
colour-space sweeps, and render comparisons between environment backends.
"""

import itertools
import logging
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np
import pandas as pd

from niftrace.constants import (DEFAULT_FOURIER_DIM, MIDDAY_SKY_SCALE, MIDDAY_SUN_DIAMETER_DEG,
                                MIDDAY_SUN_ELEVATION_DEG, MIDDAY_SUN_RADIANCE, SUN_DIAMETER_DEG, SUN_RADIANCE)
from niftrace.exceptions import ConfigurationError
from niftrace.images import HdrImage
from niftrace.metrics.psnr import psnr
from niftrace.nif.network import NifConfig
from niftrace.render.environment import ImageEnvironment, NifEnvironment, equirect_to_dir
from niftrace.render.integrator import render
from niftrace.training.trainer import Trainer
from niftrace.utils import progress

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["hdri", "hidden", "layers", "fourier_dim", "colour_matrix", "parameters", "weight_bytes",
                 "psnr_rgb", "psnr_luma", "psnr_chroma"]
PSNR_FIELDS = ["psnr_rgb", "psnr_luma", "psnr_chroma"]

SKY_ZENITH = np.array([0.12, 0.25, 0.65])
SKY_HORIZON = np.array([0.85, 0.9, 1.0])
GROUND = np.array([0.18, 0.15, 0.12])
SUN_COLOUR = np.array([1.0, 0.9, 0.75])
MIDDAY_SUN_COLOUR = np.array([1.0, 0.72, 0.38])
FACADE = np.array([0.02, 0.02, 0.025])
WINDOW_WARM = np.array([4.0, 2.6, 1.1])
WINDOW_COOL = np.array([1.2, 2.2, 4.0])


def sun_direction(elevation_deg, azimuth_deg):
    el = np.radians(elevation_deg)
    az = np.radians(azimuth_deg)
    return np.array([np.cos(el) * np.sin(az), np.sin(el), -np.cos(el) * np.cos(az)])


def _sky(d, overcast=False):
    """
    Radiance of the clear (or overcast) sky model along (N, 3) directions.
    """
    y = d[..., 1:2]
    up = np.clip(y, 0.0, 1.0)
    if overcast:
        # brighter towards the zenith, grey
        sky = (0.4 + 0.6 * up) * np.array([0.8, 0.82, 0.85])
    else:
        sky = SKY_HORIZON + (SKY_ZENITH - SKY_HORIZON) * np.sqrt(up)
    ground = GROUND * (1.0 + 0.5 * np.clip(y, -1.0, 0.0))
    return np.where(y >= 0.0, sky, ground)


def _pixel_dirs(width, height, jx, jy):
    u = (np.arange(width) + jx) / width
    v = (np.arange(height) + jy) / height
    uu, vv = np.meshgrid(u, v)
    return equirect_to_dir(uu, vv)


def synthetic_sky_hdri(width=256, height=128, overcast=False):
    """
    Sky gradient over a dark ground plane, no sun.
    """
    return HdrImage(_sky(_pixel_dirs(width, height, 0.5, 0.5), overcast=overcast).astype(np.float32))


def synthetic_sunlit_hdri(width=256, height=128, elevation_deg=35.0, azimuth_deg=30.0,
                          sun_radiance=SUN_RADIANCE, sun_diameter_deg=SUN_DIAMETER_DEG, supersample=32,
                          sun_colour=SUN_COLOUR, sky_scale=1.0):
    """
    Clear sky with a sun disc. Pixels near the disc are supersampled so their
    value is the coverage-weighted mix of sun and sky.

    Args:
        sun_colour: RGB tint multiplying sun_radiance.
        sky_scale: multiplier on the sky and ground radiance.

    Returns:
        HdrImage (height, width).
    """
    sun = sun_direction(elevation_deg, azimuth_deg)
    cos_radius = np.cos(np.radians(sun_diameter_deg / 2.0))
    dirs = _pixel_dirs(width, height, 0.5, 0.5)
    sky = sky_scale * _sky(dirs)
    pixels = sky.copy()

    # pixels whose centre lies within a few pixel widths of the sun
    pixel_angle = 2.0 * np.pi / width
    reach = np.cos(min(np.pi, 3.0 * pixel_angle + np.radians(sun_diameter_deg)))
    near = np.argwhere(dirs @ sun >= reach)
    offsets = (np.arange(supersample) + 0.5) / supersample
    for j, i in near:
        u = (i + offsets[None, :]) / width
        v = (j + offsets[:, None]) / height
        sub = equirect_to_dir(np.broadcast_to(u, (supersample, supersample)),
                              np.broadcast_to(v, (supersample, supersample))).reshape(-1, 3)
        inside = sub @ sun >= cos_radius
        coverage = inside.mean()
        if coverage > 0:
            sub_sky = sky_scale * _sky(sub[~inside]).sum(axis=0) if np.any(~inside) else 0.0
            pixels[j, i] = coverage * sun_radiance * sun_colour + sub_sky / inside.size
    image = HdrImage(pixels.astype(np.float32))
    logger.info("synthetic sun-lit panorama %dx%d, peak %.1f", width, height, float(image.pixels.max()))
    return image


def synthetic_midday_hdri(width=256, height=128):
    """
    High warm sun several pixels across over a dim sky: almost all the energy
    sits in under a tenth of a percent of the pixels.
    """
    return synthetic_sunlit_hdri(width, height, elevation_deg=MIDDAY_SUN_ELEVATION_DEG,
                                 sun_radiance=MIDDAY_SUN_RADIANCE, sun_diameter_deg=MIDDAY_SUN_DIAMETER_DEG,
                                 sun_colour=MIDDAY_SUN_COLOUR, sky_scale=MIDDAY_SKY_SCALE)


def synthetic_skyline_hdri(width=256, height=128, buildings=24, seed=0):
    """
    Dusk sky over a ring of buildings with lit windows. Windows are two pixels
    square on a four pixel grid, so the panorama has detail at every resolution.
    """
    rng = np.random.default_rng(seed)
    pixels = 0.3 * _sky(_pixel_dirs(width, height, 0.5, 0.5))
    rows, cols = np.arange(height)[:, None], np.arange(width)[None, :]
    v = (rows + 0.5) / height
    block = np.minimum((cols * buildings) // width, buildings - 1)
    heights = rng.uniform(0.04, 0.25, buildings)
    building = (v > 0.5 - heights[block]) & (v < 0.5)

    cells = (height // 4 + 1, width // 4 + 1)
    lit = (rng.random(cells) < 0.4)[rows // 4, cols // 4]
    warm = (rng.random(cells) < 0.7)[rows // 4, cols // 4]
    pane = (rows % 4 >= 1) & (rows % 4 <= 2) & (cols % 4 >= 1) & (cols % 4 <= 2)
    windows = np.where(warm[..., None], WINDOW_WARM, WINDOW_COOL)

    pixels = np.where(building[..., None], FACADE, pixels)
    pixels = np.where((building & pane & lit)[..., None], windows, pixels)
    return HdrImage(pixels.astype(np.float32))


SYNTHETIC_HDRIS = {
    "sunlit": synthetic_sunlit_hdri,
    "midday": synthetic_midday_hdri,
    "skyline": synthetic_skyline_hdri,
    "sky": synthetic_sky_hdri,
    "overcast": lambda width=256, height=128: synthetic_sky_hdri(width, height, overcast=True),
}


def synthetic_hdri(name, width=256, height=128):
    if name not in SYNTHETIC_HDRIS:
        raise ConfigurationError(f"unknown synthetic panorama {name!r}; choose from {sorted(SYNTHETIC_HDRIS)}")
    return SYNTHETIC_HDRIS[name](width=width, height=height)


@dataclass
class SweepGrid:
    """
    Cartesian grid of architectures trained on every panorama.
    """
    hidden: List[int] = field(default_factory=lambda: [64, 128, 256])
    layers: List[int] = field(default_factory=lambda: [2, 4])
    colour_matrix: List[str] = field(default_factory=lambda: ["yuv_to_rgb"])
    fourier_dim: int = DEFAULT_FOURIER_DIM

    def configs(self):
        return [NifConfig(hidden=h, layers=l, fourier_dim=self.fourier_dim, colour_matrix=c)
                for h, l, c in itertools.product(self.hidden, self.layers, self.colour_matrix)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


def colour_space_grid(hidden=64, layers=2, fourier_dim=DEFAULT_FOURIER_DIM):
    return SweepGrid(hidden=[hidden], layers=[layers], fourier_dim=fourier_dim,
                     colour_matrix=["identity", "ycocg_to_rgb", "yuv_to_rgb"])


def model_size_grid(fourier_dim=DEFAULT_FOURIER_DIM):
    return [NifConfig(hidden=64, layers=2, fourier_dim=fourier_dim),
            NifConfig(hidden=128, layers=4, fourier_dim=fourier_dim),
            NifConfig(hidden=256, layers=4, fourier_dim=fourier_dim)]


def run_sweep(hdris, configs, train_config, keep_weights=False):
    """
    Trains every architecture on every panorama.

    Args:
        hdris: dict name -> HdrImage.
        configs: SweepGrid or list of NifConfig.
        train_config: TrainConfig shared by all cells.
        keep_weights: also return the trained weights keyed by (hdri, label).

    Returns:
        DataFrame with SWEEP_COLUMNS (and the weights dict when asked).
    """
    if isinstance(configs, SweepGrid):
        configs = configs.configs()
    rows = []
    trained = {}
    cells = list(itertools.product(hdris.items(), configs))
    for (name, image), config in progress(cells, total=len(cells), desc="sweep"):
        trainer = Trainer(image, config, train_config)
        weights, _ = trainer.run(disable_progress=True)
        report = trainer.evaluate()
        rows.append({"hdri": name, "hidden": config.hidden, "layers": config.layers,
                     "fourier_dim": config.fourier_dim, "colour_matrix": config.colour_matrix,
                     "parameters": config.parameter_count(), "weight_bytes": config.weight_bytes(),
                     **report.as_dict()})
        logger.info("sweep %s %s: %s", name, config.label(), report)
        if keep_weights:
            trained[(name, config.label())] = weights
    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    if keep_weights:
        return table, trained
    return table


def compare_environment_renders(scene, render_config, reference_image, candidates):
    """
    Renders the scene lit by the reference panorama and by each trained
    field, with identical seeds, and scores every field render against the
    reference render.

    Args:
        candidates: dict name -> NifWeights.

    Returns:
        (DataFrame with columns name, psnr_rgb, psnr_luma, psnr_chroma;
        dict of the rendered images including "reference")
    """
    images = {"reference": render(scene, render_config, ImageEnvironment(reference_image))}
    rows = []
    for name, weights in candidates.items():
        images[name] = render(scene, render_config, NifEnvironment(weights, render_config.env_batch_chunk))
        rows.append({"name": name, **psnr(images["reference"], images[name]).as_dict()})
    return pd.DataFrame(rows, columns=["name"] + PSNR_FIELDS), images


def colour_space_study(image, scene, render_config, train_config, hidden=64, layers=2,
                       fourier_dim=DEFAULT_FOURIER_DIM, name="hdri"):
    """
    Trains one architecture per colour matrix on a panorama, then renders the
    scene lit by each field and by the panorama itself.

    Returns:
        (DataFrame indexed by colour_matrix with the sweep columns and the
        render scores as render_psnr_rgb, render_psnr_luma, render_psnr_chroma;
        dict of the rendered images keyed by colour matrix and "reference")
    """
    grid = colour_space_grid(hidden, layers, fourier_dim)
    table, trained = run_sweep({name: image}, grid, train_config, keep_weights=True)
    candidates = {c.colour_matrix: trained[(name, c.label())] for c in grid.configs()}
    scores, images = compare_environment_renders(scene, render_config, image, candidates)
    scores = scores.rename(columns={"name": "colour_matrix", **{c: "render_" + c for c in PSNR_FIELDS}})
    study = table.merge(scores, on="colour_matrix").set_index("colour_matrix")
    for space, row in study.iterrows():
        logger.info("colour space %s: field PSNR-RGB %.2f dB, render PSNR-RGB %.2f dB", space,
                    row["psnr_rgb"], row["render_psnr_rgb"])
    return study, images
