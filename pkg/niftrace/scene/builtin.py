"""
Built-in test scenes on the original Cornell box measurements (scene units
are millimetres, no scaling applied).
"""

import numpy as np

from niftrace.exceptions import ConfigurationError
from niftrace.scene.materials import Material
from niftrace.scene.scene import Camera, assemble_scene

WHITE, RED, GREEN, LIGHT, MIRROR, GLASS = range(6)

# light quad sits 0.1 below the ceiling so the two never coincide
LIGHT_Y = 548.7

SHELL_QUADS = {
    "floor": ([[552.8, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 559.2], [549.6, 0.0, 559.2]], WHITE),
    "light": ([[343.0, LIGHT_Y, 227.0], [343.0, LIGHT_Y, 332.0], [213.0, LIGHT_Y, 332.0],
               [213.0, LIGHT_Y, 227.0]], LIGHT),
    "ceiling": ([[556.0, 548.8, 0.0], [556.0, 548.8, 559.2], [0.0, 548.8, 559.2],
                 [0.0, 548.8, 0.0]], WHITE),
    "back_wall": ([[549.6, 0.0, 559.2], [0.0, 0.0, 559.2], [0.0, 548.8, 559.2],
                   [556.0, 548.8, 559.2]], WHITE),
    "green_wall": ([[0.0, 0.0, 559.2], [0.0, 0.0, 0.0], [0.0, 548.8, 0.0], [0.0, 548.8, 559.2]], GREEN),
    "red_wall": ([[552.8, 0.0, 0.0], [549.6, 0.0, 559.2], [556.0, 548.8, 559.2],
                  [556.0, 548.8, 0.0]], RED),
}

SHORT_BLOCK = [
    [[130.0, 165.0, 65.0], [82.0, 165.0, 225.0], [240.0, 165.0, 272.0], [290.0, 165.0, 114.0]],
    [[290.0, 0.0, 114.0], [290.0, 165.0, 114.0], [240.0, 165.0, 272.0], [240.0, 0.0, 272.0]],
    [[130.0, 0.0, 65.0], [130.0, 165.0, 65.0], [290.0, 165.0, 114.0], [290.0, 0.0, 114.0]],
    [[82.0, 0.0, 225.0], [82.0, 165.0, 225.0], [130.0, 165.0, 65.0], [130.0, 0.0, 65.0]],
    [[240.0, 0.0, 272.0], [240.0, 165.0, 272.0], [82.0, 165.0, 225.0], [82.0, 0.0, 225.0]],
]

TALL_BLOCK = [
    [[423.0, 330.0, 247.0], [265.0, 330.0, 296.0], [314.0, 330.0, 456.0], [472.0, 330.0, 406.0]],
    [[423.0, 0.0, 247.0], [423.0, 330.0, 247.0], [472.0, 330.0, 406.0], [472.0, 0.0, 406.0]],
    [[472.0, 0.0, 406.0], [472.0, 330.0, 406.0], [314.0, 330.0, 456.0], [314.0, 0.0, 456.0]],
    [[314.0, 0.0, 456.0], [314.0, 330.0, 456.0], [265.0, 330.0, 296.0], [265.0, 0.0, 296.0]],
    [[265.0, 0.0, 296.0], [265.0, 330.0, 296.0], [423.0, 330.0, 247.0], [423.0, 0.0, 247.0]],
]

# (centre, radius, material)
BOX_SPHERES = [
    ((400.0, 100.0, 350.0), 100.0, MIRROR),
    ((170.0, 100.0, 180.0), 100.0, GLASS),
]

BOX_TRIANGLES = 2 * (len(SHELL_QUADS) + len(SHORT_BLOCK) + len(TALL_BLOCK))

# unit-scale scene lit by the environment only: floor, backdrop and side wall
SPHERES_QUADS = [
    ([[-4.0, 0.0, -4.0], [-4.0, 0.0, 4.0], [4.0, 0.0, 4.0], [4.0, 0.0, -4.0]], WHITE),
    ([[-4.0, 0.0, 4.0], [-4.0, 4.0, 4.0], [4.0, 4.0, 4.0], [4.0, 0.0, 4.0]], WHITE),
    ([[-4.0, 0.0, -4.0], [-4.0, 4.0, -4.0], [-4.0, 4.0, 4.0], [-4.0, 0.0, 4.0]], RED),
]

SPHERES = [
    ((-1.2, 0.6, 1.0), 0.6, WHITE),
    ((0.0, 0.8, 1.6), 0.8, MIRROR),
    ((1.3, 0.5, 0.6), 0.5, GLASS),
]


def cornell_materials():
    return [
        Material.diffuse((0.73, 0.73, 0.73)),
        Material.diffuse((0.63, 0.065, 0.05)),
        Material.diffuse((0.14, 0.45, 0.091)),
        Material.emissive((17.0, 12.0, 4.0)),
        Material.mirror((0.95, 0.95, 0.95)),
        Material.dielectric(ior=1.5),
    ]


def cornell_camera():
    return Camera(position=(278.0, 273.0, -800.0), look_at=(278.0, 273.0, 0.0), up=(0.0, 1.0, 0.0),
                  vfov=40.0)


def spheres_camera():
    return Camera(position=(0.0, 1.2, -4.0), look_at=(0.0, 0.7, 1.0), up=(0.0, 1.0, 0.0), vfov=40.0)


def quads_to_mesh(quads):
    """
    Fan-triangulates (quad, material) pairs into shared buffers.

    Returns:
        (vertices (4Q, 3), indices (2Q, 3), tri_material (2Q,))
    """
    vertices, indices, materials = [], [], []
    for quad, material in quads:
        base = len(vertices)
        vertices.extend(quad)
        indices.append([base, base + 1, base + 2])
        indices.append([base, base + 2, base + 3])
        materials.extend([material, material])
    return (np.array(vertices, dtype=np.float32), np.array(indices, dtype=np.uint32),
            np.array(materials, dtype=np.uint32))


def box_quads(with_blocks=True):
    quads = list(SHELL_QUADS.values())
    if with_blocks:
        quads += [(q, WHITE) for q in SHORT_BLOCK] + [(q, WHITE) for q in TALL_BLOCK]
    return quads


def builtin_scene(name, max_leaf_size=1):
    """
    Args:
        name: "box" (Cornell box with both blocks), "box_spheres" (the
            shell with a mirror and a glass sphere) or "spheres" (three
            spheres on a unit-scale floor, no emitters).

    Returns:
        Scene.
    """
    if name == "box":
        vertices, indices, tri_material = quads_to_mesh(box_quads(with_blocks=True))
        return assemble_scene(vertices, indices, tri_material, cornell_materials(), cornell_camera(),
                              max_leaf_size=max_leaf_size, name=name)
    if name == "box_spheres":
        vertices, indices, tri_material = quads_to_mesh(box_quads(with_blocks=False))
        centres = np.array([s[0] for s in BOX_SPHERES], dtype=np.float32)
        radii = np.array([s[1] for s in BOX_SPHERES], dtype=np.float32)
        sphere_material = np.array([s[2] for s in BOX_SPHERES], dtype=np.uint32)
        return assemble_scene(vertices, indices, tri_material, cornell_materials(), cornell_camera(),
                              centres=centres, radii=radii, sphere_material=sphere_material,
                              max_leaf_size=max_leaf_size, name=name)
    if name == "spheres":
        vertices, indices, tri_material = quads_to_mesh(SPHERES_QUADS)
        return assemble_scene(vertices, indices, tri_material, cornell_materials(), spheres_camera(),
                              centres=np.array([s[0] for s in SPHERES], dtype=np.float32),
                              radii=np.array([s[1] for s in SPHERES], dtype=np.float32),
                              sphere_material=np.array([s[2] for s in SPHERES], dtype=np.uint32),
                              max_leaf_size=max_leaf_size, name=name)
    raise ConfigurationError(f"unknown builtin scene {name!r}; choose from {BUILTIN_SCENES}")


BUILTIN_SCENES = ("box", "box_spheres", "spheres")


def empty_scene(camera=None):
    """
    Scene without geometry, for environment-only renders.
    """
    return assemble_scene(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), [Material.diffuse((0.5, 0.5, 0.5))],
                          camera or Camera(), name="empty")
