"""
Monte-Carlo path tracer without light sampling.

Paths gather radiance only when they hit an emitter by chance or escape to
the environment. Tracing runs in waves, one sample index per wave: every
pixel's path is traced to escape or termination in parallel, then the
escaped directions are looked up in the environment in batches, outside the
ray kernels. The lookup is a pure function of direction, so deferring and
batching it does not change the result.
"""

import json
import logging
import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from enum import IntEnum

import numba
import numpy as np
from numba import njit, prange

from niftrace.bvh.intersect import intersect_sphere, sphere_geometry, triangle_geometry
from niftrace.bvh.traversal import traverse_kernel
from niftrace.constants import DEFAULT_MAX_DEPTH, DEFAULT_ROULETTE_START_DEPTH, T_FAR
from niftrace.core.rng import RngKey, philox_uniform, rng_uniform
from niftrace.core.vecmath import HALF, ONE, TWO, TWO_PI, ZERO, orthonormal_basis, reflect3
from niftrace.exceptions import ConfigurationError
from niftrace.images import HdrImage
from niftrace.render.camera import JITTER_X_DRAW, JITTER_Y_DRAW, camera_frame, camera_ray_kernel
from niftrace.render.environment import as_environment, dir_to_uv
from niftrace.scene.materials import MaterialKind
from niftrace.utils import progress

logger = logging.getLogger(__name__)


class PathStatus(IntEnum):
    ALIVE = 0
    ESCAPED = 1
    TERMINATED = 2


ALIVE = 0
ESCAPED = 1
TERMINATED = 2

HIT_NONE = 0
HIT_TRIANGLE = 1
HIT_SPHERE = 2

DIFFUSE = int(MaterialKind.DIFFUSE)
MIRROR = int(MaterialKind.MIRROR)
DIELECTRIC = int(MaterialKind.DIELECTRIC)
EMISSIVE = int(MaterialKind.EMISSIVE)

# draw indices within one bounce
DIRECTION_DRAW_1 = 0
DIRECTION_DRAW_2 = 1
FRESNEL_DRAW = 2
ROULETTE_DRAW = 3

# layout of the float32 path record used by the kernels
S_ORIGIN = 0
S_DIR = 3
S_TMIN = 6
S_TMAX = 7
S_THROUGHPUT = 8
S_RADIANCE = 11
STATE_SIZE = 14


@njit(cache=True, error_model="numpy")
def intersect_scene(ox, oy, oz, dx, dy, dz, t_min, t_max, lo, hi, offset, count, tris, centres, radii,
                    stack, stack_t):
    """
    Nearest triangle (through the BVH) or sphere (linear scan) hit; a
    triangle keeps the hit on an exact tie.

    Returns:
        (kind, index, t, px, py, pz, nx, ny, nz); kind is HIT_NONE on a miss.
    """
    found, t, prim, b0, b1, b2, _, _ = traverse_kernel(ox, oy, oz, dx, dy, dz, t_min, t_max, lo, hi,
                                                       offset, count, tris, stack, stack_t)
    kind = HIT_NONE
    index = -1
    best = t_max
    if found:
        kind = HIT_TRIANGLE
        index = prim
        best = t
    for s in range(radii.shape[0]):
        hit, ts = intersect_sphere(ox, oy, oz, dx, dy, dz, centres, radii, s, t_min, best)
        if hit and (kind == HIT_NONE or ts < best):
            kind = HIT_SPHERE
            index = s
            best = ts
    if kind == HIT_TRIANGLE:
        px, py, pz, nx, ny, nz = triangle_geometry(tris, index, b0, b1, b2)
    elif kind == HIT_SPHERE:
        px, py, pz, nx, ny, nz = sphere_geometry(ox, oy, oz, dx, dy, dz, best, centres, radii, index)
    else:
        px = py = pz = nx = ny = nz = ZERO
    return kind, index, best, px, py, pz, nx, ny, nz


@njit(cache=True, error_model="numpy")
def roulette_kernel(depth, start_depth, tr, tg, tb, u):
    """
    Throughput-proportional termination from start_depth on.

    Returns:
        (survived, tr, tg, tb); survivors are divided by the survival
        probability min(1, max component).
    """
    if depth < start_depth:
        return True, tr, tg, tb
    p = max(tr, max(tg, tb))
    if p > ONE:
        p = ONE
    if u < p:
        return True, tr / p, tg / p, tb / p
    return False, tr, tg, tb


@njit(cache=True, error_model="numpy")
def scatter(kind, ior, dx, dy, dz, nx, ny, nz, u1, u2, u3):
    """
    New unit direction after a diffuse, mirror or dielectric interaction.
    The throughput factor is the albedo for all three kinds.
    """
    cos_d = dx * nx + dy * ny + dz * nz
    if kind == DIFFUSE:
        if cos_d > ZERO:
            nx, ny, nz = -nx, -ny, -nz
        tx, ty, tz, bx, by, bz = orthonormal_basis(nx, ny, nz)
        r = math.sqrt(u1)
        phi = TWO_PI * u2
        lx = r * math.cos(phi)
        ly = r * math.sin(phi)
        rest = ONE - u1
        if rest < ZERO:
            rest = ZERO
        lz = math.sqrt(rest)
        wx = lx * tx + ly * bx + lz * nx
        wy = lx * ty + ly * by + lz * ny
        wz = lx * tz + ly * bz + lz * nz
    elif kind == MIRROR:
        wx, wy, wz = reflect3(dx, dy, dz, nx, ny, nz)
    else:
        if cos_d < ZERO:
            sx, sy, sz = nx, ny, nz
            eta = ONE / ior
            cos_i = -cos_d
            entering = True
        else:
            sx, sy, sz = -nx, -ny, -nz
            eta = ior
            cos_i = cos_d
            entering = False
        sin2_t = eta * eta * (ONE - cos_i * cos_i)
        if sin2_t >= ONE:
            wx, wy, wz = reflect3(dx, dy, dz, nx, ny, nz)
        else:
            cos_t = math.sqrt(ONE - sin2_t)
            r0 = (ONE - ior) / (ONE + ior)
            r0 = r0 * r0
            c = cos_i if entering else cos_t
            m = ONE - c
            fresnel = r0 + (ONE - r0) * m * m * m * m * m
            if u3 < fresnel:
                wx, wy, wz = reflect3(dx, dy, dz, nx, ny, nz)
            else:
                k = eta * cos_i - cos_t
                wx = eta * dx + k * sx
                wy = eta * dy + k * sy
                wz = eta * dz + k * sz
    inv = ONE / math.sqrt(wx * wx + wy * wy + wz * wz)
    return wx * inv, wy * inv, wz * inv


@njit(cache=True, error_model="numpy")
def bounce_kernel(st, depth, pixel, sample, seed, max_depth, roulette_start, eps, lo, hi, offset, count,
                  tris, tri_material, centres, radii, sphere_material, mat_kind, mat_albedo, mat_emission,
                  mat_ior, stack, stack_t):
    """
    Advances the path record st by one bounce in place.

    Returns:
        (depth, status)
    """
    kind, index, t, px, py, pz, nx, ny, nz = intersect_scene(
        st[0], st[1], st[2], st[3], st[4], st[5], st[S_TMIN], st[S_TMAX], lo, hi, offset, count, tris,
        centres, radii, stack, stack_t)
    bounce = np.uint64(depth + 1)
    depth += 1
    if kind == HIT_NONE:
        return depth, ESCAPED
    if kind == HIT_TRIANGLE:
        mat = tri_material[index]
    else:
        mat = sphere_material[index]
    mk = mat_kind[mat]
    dx = st[3]
    dy = st[4]
    dz = st[5]
    if mk == EMISSIVE:
        # one-sided: only the side the geometric normal faces emits
        if dx * nx + dy * ny + dz * nz < ZERO:
            st[11] += st[8] * mat_emission[mat, 0]
            st[12] += st[9] * mat_emission[mat, 1]
            st[13] += st[10] * mat_emission[mat, 2]
        return depth, TERMINATED
    if depth >= max_depth:
        return depth, TERMINATED

    u1 = philox_uniform(pixel, sample, bounce, seed, np.uint64(DIRECTION_DRAW_1))
    u2 = philox_uniform(pixel, sample, bounce, seed, np.uint64(DIRECTION_DRAW_2))
    u3 = ZERO
    if mk == DIELECTRIC:
        u3 = philox_uniform(pixel, sample, bounce, seed, np.uint64(FRESNEL_DRAW))
    wx, wy, wz = scatter(mk, mat_ior[mat], dx, dy, dz, nx, ny, nz, u1, u2, u3)
    st[0] = px
    st[1] = py
    st[2] = pz
    st[3] = wx
    st[4] = wy
    st[5] = wz
    st[S_TMIN] = eps
    st[S_TMAX] = T_FAR
    tr = st[8] * mat_albedo[mat, 0]
    tg = st[9] * mat_albedo[mat, 1]
    tb = st[10] * mat_albedo[mat, 2]
    u = philox_uniform(pixel, sample, bounce, seed, np.uint64(ROULETTE_DRAW))
    survived, tr, tg, tb = roulette_kernel(depth, roulette_start, tr, tg, tb, u)
    st[8] = tr
    st[9] = tg
    st[10] = tb
    if survived:
        return depth, ALIVE
    return depth, TERMINATED


@njit(parallel=True, cache=True, error_model="numpy")
def _render_wave(frame, width, height, sample, seed, max_depth, roulette_start, eps, lo, hi, offset, count,
                 tree_depth, tris, tri_material, centres, radii, sphere_material, mat_kind, mat_albedo,
                 mat_emission, mat_ior, out_uv, out_throughput, out_radiance, out_escaped, out_depth):
    for p in prange(width * height):
        x = p % width
        y = p // width
        pixel = np.uint64(p)
        stack = np.empty(tree_depth + 1, dtype=np.int64)
        stack_t = np.empty(tree_depth + 1, dtype=np.float32)
        st = np.empty(STATE_SIZE, dtype=np.float32)
        jx = philox_uniform(pixel, sample, np.uint64(0), seed, np.uint64(JITTER_X_DRAW))
        jy = philox_uniform(pixel, sample, np.uint64(0), seed, np.uint64(JITTER_Y_DRAW))
        ox, oy, oz, dx, dy, dz = camera_ray_kernel(frame, width, height, x, y, jx, jy)
        st[0] = ox
        st[1] = oy
        st[2] = oz
        st[3] = dx
        st[4] = dy
        st[5] = dz
        st[S_TMIN] = ZERO
        st[S_TMAX] = T_FAR
        for c in range(3):
            st[S_THROUGHPUT + c] = ONE
            st[S_RADIANCE + c] = ZERO
        depth = 0
        status = ALIVE
        while status == ALIVE:
            depth, status = bounce_kernel(st, depth, pixel, sample, seed, max_depth, roulette_start, eps,
                                          lo, hi, offset, count, tris, tri_material, centres, radii,
                                          sphere_material, mat_kind, mat_albedo, mat_emission, mat_ior,
                                          stack, stack_t)
        for c in range(3):
            out_throughput[p, c] = st[S_THROUGHPUT + c]
            out_radiance[p, c] = st[S_RADIANCE + c]
        out_depth[p] = depth
        if status == ESCAPED:
            u, v = dir_to_uv(st[3], st[4], st[5])
            out_uv[p, 0] = u
            out_uv[p, 1] = v
            out_escaped[p] = True
        else:
            out_uv[p, 0] = HALF
            out_uv[p, 1] = HALF
            out_escaped[p] = False


@dataclass
class RenderConfig:
    """
    Args:
        width, height: raster size.
        spp: samples per pixel.
        max_depth: path length cap.
        roulette_start_depth: first depth at which roulette may terminate.
        env_batch_chunk: rows per environment query.
        seed: render seed.
        workers: parallel threads (0 keeps the numba default).
        environment: spec string ("constant:<v>", "image:<path>", "nif:<path>").
    """
    width: int = 64
    height: int = 64
    spp: int = 16
    max_depth: int = DEFAULT_MAX_DEPTH
    roulette_start_depth: int = DEFAULT_ROULETTE_START_DEPTH
    env_batch_chunk: int = 65536
    seed: int = 0
    workers: int = 0
    environment: str = "constant:1.0"

    def __post_init__(self):
        for name in ("width", "height", "spp", "max_depth", "roulette_start_depth", "env_batch_chunk"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.roulette_start_depth > self.max_depth:
            raise ConfigurationError("roulette_start_depth cannot exceed max_depth")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigurationError("seed must fit in 64 bits")
        if self.workers < 0:
            raise ConfigurationError("workers must be non-negative")

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


@dataclass
class PathState:
    """
    One path: ray, throughput, gathered radiance, depth, status and the key
    (pixel, sample, seed) of its random stream; the bounce counter of the
    key follows the depth.
    """
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = float(T_FAR)
    throughput: np.ndarray = field(default_factory=lambda: np.ones(3, dtype=np.float32))
    radiance: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.float32))
    depth: int = 0
    status: PathStatus = PathStatus.ALIVE
    key: RngKey = field(default_factory=RngKey)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float32).reshape(3)
        self.direction = np.asarray(self.direction, dtype=np.float32).reshape(3)
        self.throughput = np.asarray(self.throughput, dtype=np.float32).reshape(3)
        self.radiance = np.asarray(self.radiance, dtype=np.float32).reshape(3)
        self.status = PathStatus(int(self.status))

    def to_record(self):
        st = np.empty(STATE_SIZE, dtype=np.float32)
        st[S_ORIGIN:S_ORIGIN + 3] = self.origin
        st[S_DIR:S_DIR + 3] = self.direction
        st[S_TMIN] = self.t_min
        st[S_TMAX] = self.t_max
        st[S_THROUGHPUT:S_THROUGHPUT + 3] = self.throughput
        st[S_RADIANCE:S_RADIANCE + 3] = self.radiance
        return st

    def from_record(self, st, depth, status):
        return replace(self, origin=st[0:3].copy(), direction=st[3:6].copy(), t_min=float(st[S_TMIN]),
                       t_max=float(st[S_TMAX]), throughput=st[8:11].copy(), radiance=st[11:14].copy(),
                       depth=int(depth), status=PathStatus(int(status)),
                       key=self.key.at_bounce(int(depth)))


def roulette(state, config=None, u=None):
    """
    Russian roulette on an alive path.

    Args:
        state: PathState.
        config: RenderConfig supplying roulette_start_depth (default 3).
        u: explicit uniform draw; by default the roulette draw of the
            path's key at its current depth.

    Returns:
        new PathState.
    """
    start = config.roulette_start_depth if config is not None else DEFAULT_ROULETTE_START_DEPTH
    if u is None:
        u = rng_uniform(state.key.at_bounce(state.depth), ROULETTE_DRAW)
    survived, tr, tg, tb = roulette_kernel(state.depth, start, state.throughput[0], state.throughput[1],
                                           state.throughput[2], np.float32(u))
    return replace(state, throughput=np.array([tr, tg, tb], dtype=np.float32),
                   status=PathStatus.ALIVE if survived else PathStatus.TERMINATED)


def trace_bounce(state, scene, config=None, arrays=None):
    """
    One bounce of an alive path: intersect, gather emission, scatter, roulette.

    Args:
        state: PathState.
        scene: Scene.
        config: RenderConfig (defaults for depth limits).
        arrays: precomputed scene.kernel_arrays().

    Returns:
        new PathState.
    """
    config = config or RenderConfig()
    a = arrays or scene.kernel_arrays()
    st = state.to_record()
    stack = np.empty(a.depth + 1, dtype=np.int64)
    stack_t = np.empty(a.depth + 1, dtype=np.float32)
    pixel, sample, _, seed = state.key.words()
    depth, status = bounce_kernel(st, state.depth, pixel, sample, seed, config.max_depth,
                                  config.roulette_start_depth, a.t_min, a.lo, a.hi, a.offset, a.count,
                                  a.triangles, a.tri_material, a.centres, a.radii, a.sphere_material,
                                  a.mat_kind, a.mat_albedo, a.mat_emission, a.mat_ior, stack, stack_t)
    return state.from_record(st, depth, status)


@dataclass
class RenderStats:
    paths: int = 0
    escaped_paths: int = 0
    env_queries: int = 0
    waves: int = 0
    max_path_depth: int = 0


@contextmanager
def worker_threads(workers):
    """
    Temporarily sets the numba thread count (0 leaves it alone).
    """
    if not workers:
        yield numba.get_num_threads()
        return
    previous = numba.get_num_threads()
    n = min(int(workers), numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    try:
        yield n
    finally:
        numba.set_num_threads(previous)


class Renderer:
    """
    Wavefront driver of the path tracer.

    Parameters
    ----------
    scene : Scene
    config : RenderConfig
    environment : EnvironmentLight, HdrImage or spec string, optional
        Overrides config.environment.
    """

    def __init__(self, scene, config, environment=None):
        self.scene = scene
        self.config = config
        self.environment = as_environment(environment if environment is not None else config.environment)
        self.arrays = scene.kernel_arrays()
        self.frame = camera_frame(scene.camera, config.width, config.height)
        self.stats = RenderStats()

    def trace_wave(self, sample):
        """
        Traces one sample of every pixel.

        Returns:
            (uv, throughput, radiance, escaped, depth) per pixel.
        """
        cfg = self.config
        a = self.arrays
        n = cfg.width * cfg.height
        uv = np.empty((n, 2), dtype=np.float32)
        throughput = np.empty((n, 3), dtype=np.float32)
        radiance = np.empty((n, 3), dtype=np.float32)
        escaped = np.empty(n, dtype=np.bool_)
        depth = np.empty(n, dtype=np.int64)
        _render_wave(self.frame, cfg.width, cfg.height, np.uint64(sample), np.uint64(cfg.seed), cfg.max_depth,
                     cfg.roulette_start_depth, a.t_min, a.lo, a.hi, a.offset, a.count, a.depth, a.triangles,
                     a.tri_material, a.centres, a.radii, a.sphere_material, a.mat_kind, a.mat_albedo,
                     a.mat_emission, a.mat_ior, uv, throughput, radiance, escaped, depth)
        return uv, throughput, radiance, escaped, depth

    def shade_escaped(self, uv, escaped):
        """
        Environment radiance of the escaped paths, queried in chunks of
        env_batch_chunk; zero for the others.
        """
        env = np.zeros((uv.shape[0], 3), dtype=np.float32)
        idx = np.flatnonzero(escaped)
        chunk = self.config.env_batch_chunk
        for start in range(0, idx.shape[0], chunk):
            rows = idx[start:start + chunk]
            env[rows] = self.environment.radiance(uv[rows])
            self.stats.env_queries += 1
        return env

    def render(self, disable_progress=None):
        """
        Returns:
            HdrImage with the per-pixel mean over spp samples.
        """
        cfg = self.config
        n = cfg.width * cfg.height
        accumulator = np.zeros((n, 3), dtype=np.float64)
        if disable_progress is None:
            disable_progress = cfg.spp < 8
        with worker_threads(cfg.workers) as threads:
            logger.info("rendering %dx%d at %d spp on %d threads, environment %s", cfg.width, cfg.height,
                        cfg.spp, threads, self.environment.describe())
            for sample in progress(range(cfg.spp), total=cfg.spp, desc="rendering", disable=disable_progress):
                uv, throughput, radiance, escaped, depth = self.trace_wave(sample)
                env = self.shade_escaped(uv, escaped)
                accumulator += radiance + throughput * env
                self.stats.waves += 1
                self.stats.paths += n
                self.stats.escaped_paths += int(escaped.sum())
                self.stats.max_path_depth = max(self.stats.max_path_depth, int(depth.max()))
        pixels = (accumulator / cfg.spp).astype(np.float32)
        logger.info("rendered %d paths, %d escaped, %d environment queries", self.stats.paths,
                    self.stats.escaped_paths, self.stats.env_queries)
        return HdrImage(pixels.reshape(cfg.height, cfg.width, 3))


def render(scene, config, environment=None):
    """
    Renders a scene.

    Returns:
        HdrImage.
    """
    return Renderer(scene, config, environment=environment).render()
