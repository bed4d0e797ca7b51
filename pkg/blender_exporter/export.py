"""Export a Blender animation's depth and intensity passes as FMAP frames.

Runs inside Blender's bundled Python:

    blender -b scene.blend -P export.py -- --out DIR --frames 1..100

Per frame the camera's planar-Z depth pass is converted to Euclidean ray
distance, the chosen intensity pass (emission or diffuse color) becomes the
amplitude raster, and radial velocity is the inter-frame range difference
times the frame rate (forward difference on the first frame).  The
perspective render is resampled onto the equiangular pixel grid of the FMAP
consumer by nearest neighbor, so ranges are never interpolated across depth
discontinuities.

Output is byte-conformant to the FMAP container (see FORMATS.md in the
consumer repository): 42-byte little-endian header, then range, amplitude,
and radial-velocity rasters as float32, elevation-outer, with +inf marking
miss pixels.  A manifest lists the frame files in order; comment lines
record the export choices.

Only numpy and the standard library are required, both of which ship with
Blender; ``bpy`` is imported lazily so the math is importable (and tested)
outside Blender.
"""

import argparse
import os
import struct
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1
# magic, version, n_az, n_el, frame_index, time, fov_az, fov_el
FMAP_HEADER = struct.Struct("<4sHIIIddd")
MANIFEST_NAME = "manifest.txt"

#: Depth-pass values at or above this are background (no geometry hit).
MISS_DEPTH = 1e8


class ExportError(Exception):
    """Base class for export failures."""


class ConfigurationError(ExportError):
    """Scene or settings problem: missing camera, pass, or frame range."""


class DimensionDriftError(ExportError):
    """Render resolution changed between frames; the export is aborted."""


@dataclass
class ExportSettings:
    """What to export and where.

    ``frame_start``/``frame_end`` are inclusive scene frame numbers; output
    frame indices are renumbered from 0.  ``n_az``/``n_el`` default to the
    render resolution and ``fov_az``/``fov_el`` (radians) to the camera's
    own opening angles.
    """

    output_dir: Path
    frame_start: int
    frame_end: int
    camera: str | None = None
    intensity_source: str = "emission"  # or "diffuse"
    n_az: int | None = None
    n_el: int | None = None
    fov_az: float | None = None
    fov_el: float | None = None

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if self.frame_end < self.frame_start:
            raise ConfigurationError(
                f"frame range {self.frame_start}..{self.frame_end} is empty")
        if self.intensity_source not in ("emission", "diffuse"):
            raise ConfigurationError(
                f"intensity_source must be emission or diffuse, "
                f"got {self.intensity_source!r}")


# ---------------------------------------------------------------------------
# Geometry: perspective pass -> equiangular rasters
# ---------------------------------------------------------------------------

def equiangular_angles(n: int, fov: float) -> np.ndarray:
    """Pixel-center angles fov*((i+0.5)/n - 0.5), the consumer's grid."""
    return fov * ((np.arange(n) + 0.5) / n - 0.5)


def perspective_indices(n_az, n_el, fov_az, fov_el, width, height,
                        cam_fov_x, cam_fov_y):
    """Nearest source pixel of the perspective render for every output pixel.

    Output pixel directions (spherical offsets theta_az, theta_el) project
    onto the image plane at tan(theta_az) horizontally and
    tan(theta_el)/cos(theta_az) vertically; the plane is sampled uniformly
    in those tangent coordinates by the renderer.  Rows run bottom-up in
    both systems (elevation ascending).
    """
    az = equiangular_angles(n_az, fov_az)
    el = equiangular_angles(n_el, fov_el)
    px = np.tan(az)[None, :] * np.ones((n_el, 1))
    py = np.tan(el)[:, None] / np.cos(az)[None, :]
    cols = (px / np.tan(cam_fov_x / 2.0) + 1.0) / 2.0 * width - 0.5
    rows = (py / np.tan(cam_fov_y / 2.0) + 1.0) / 2.0 * height - 0.5
    cols = np.clip(np.rint(cols).astype(np.int64), 0, width - 1)
    rows = np.clip(np.rint(rows).astype(np.int64), 0, height - 1)
    return rows, cols


def planar_depth_to_range(depth, fov_az, fov_el):
    """Convert resampled planar-Z depth to Euclidean ray distance.

    Planar Z measures distance along the camera axis, so each ray's true
    distance is z divided by the cosine of its off-axis angle:
    R = z / (cos(theta_el) * cos(theta_az)).  The center pixel is unchanged;
    corner pixels grow by exactly that cosine factor.
    """
    n_el, n_az = depth.shape
    az = equiangular_angles(n_az, fov_az)
    el = equiangular_angles(n_el, fov_el)
    cos_axis = np.cos(el)[:, None] * np.cos(az)[None, :]
    return depth / cos_axis


def velocities_from_ranges(ranges, frame_rate):
    """Per-pixel radial velocity by inter-frame range differencing.

    ``ranges`` is the list of per-frame range rasters.  Frame f uses the
    backward difference (R_f - R_{f-1}) * frame_rate; the first frame uses
    the forward difference.  Pixels that miss in either frame of a pair get
    velocity 0 (no differencing across hit/miss transitions).
    """
    count = len(ranges)
    velocities = []
    for f in range(count):
        if count == 1:
            velocities.append(np.zeros_like(ranges[0]))
            continue
        a, b = (ranges[0], ranges[1]) if f == 0 else (ranges[f - 1], ranges[f])
        valid = np.isfinite(a) & np.isfinite(b)
        v = np.zeros_like(a)
        np.subtract(b, a, out=v, where=valid)
        velocities.append(v * frame_rate)
    return velocities


# ---------------------------------------------------------------------------
# FMAP writing (byte layout per the consumer's FORMATS.md)
# ---------------------------------------------------------------------------

def write_fmap(path, frame_index, time, fov_az, fov_el, range_map,
               amplitude_map, velocity_map) -> int:
    n_el, n_az = range_map.shape
    for raster in (amplitude_map, velocity_map):
        if raster.shape != (n_el, n_az):
            raise ExportError("raster dimensions disagree within one frame")
    header = FMAP_HEADER.pack(FMAP_MAGIC, FMAP_VERSION, n_az, n_el,
                              frame_index, time, fov_az, fov_el)
    payload = b"".join(
        np.ascontiguousarray(r, dtype="<f4").tobytes()
        for r in (range_map, amplitude_map, velocity_map))
    blob = header + payload
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "wb") as handle:
        handle.write(blob)
    os.replace(tmp, path)
    return len(blob)


def write_manifest(paths, manifest_path, comments):
    lines = [f"# {c}" for c in comments]
    lines += [Path(p).name for p in paths]
    Path(manifest_path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Render backends
# ---------------------------------------------------------------------------

class BlenderBackend:
    """Drives bpy: renders each frame and returns its depth/intensity passes.

    The compositor is wired to two file-output nodes (full-float EXR, one
    per pass) because viewer-node pixels are not reliably available in
    background mode; the EXRs are reloaded through bpy's image API.  Depth
    comes from the view layer's Z pass (planar), intensity from the
    emission or diffuse-color pass.
    """

    def __init__(self, settings: ExportSettings):
        import bpy  # deferred so the module imports without Blender

        self.bpy = bpy
        self.scene = bpy.context.scene
        camera_name = settings.camera
        if camera_name is None:
            if self.scene.camera is None:
                raise ConfigurationError("scene has no active camera")
            self.camera = self.scene.camera
        else:
            self.camera = bpy.data.objects.get(camera_name)
            if self.camera is None or self.camera.type != "CAMERA":
                raise ConfigurationError(f"no camera named {camera_name!r}")
        self.scene.camera = self.camera

        layer = bpy.context.view_layer
        layer.use_pass_z = True
        if settings.intensity_source == "emission":
            if not hasattr(layer, "use_pass_emit"):
                raise ConfigurationError("render engine has no emission pass")
            layer.use_pass_emit = True
            self._intensity_output = "Emit"
        else:
            if not hasattr(layer, "use_pass_diffuse_color"):
                raise ConfigurationError("render engine has no diffuse pass")
            layer.use_pass_diffuse_color = True
            self._intensity_output = "DiffCol"

        self._pass_dir = Path(settings.output_dir) / "_passes"
        self._pass_dir.mkdir(parents=True, exist_ok=True)
        self._build_compositor()

    def _build_compositor(self):
        scene = self.scene
        scene.use_nodes = True
        tree = scene.node_tree
        tree.nodes.clear()
        layers = tree.nodes.new("CompositorNodeRLayers")
        self._outputs = {}
        for label, socket in (("depth", "Depth"),
                              ("intensity", self._intensity_output)):
            node = tree.nodes.new("CompositorNodeOutputFile")
            node.base_path = str(self._pass_dir)
            node.format.file_format = "OPEN_EXR"
            node.format.color_depth = "32"
            node.file_slots[0].path = f"{label}_"
            if socket not in layers.outputs:
                raise ConfigurationError(
                    f"render layer has no {socket!r} output; enable the pass")
            tree.links.new(layers.outputs[socket], node.inputs[0])
            self._outputs[label] = node

    def resolution(self):
        render = self.scene.render
        scale = render.resolution_percentage / 100.0
        return (int(render.resolution_x * scale),
                int(render.resolution_y * scale))

    def camera_fov(self):
        data = self.camera.data
        return float(data.angle_x), float(data.angle_y)

    def frame_rate(self):
        render = self.scene.render
        return render.fps / render.fps_base

    def _load_exr(self, label, frame):
        path = self._pass_dir / f"{label}_{frame:04d}.exr"
        if not path.exists():
            raise ConfigurationError(f"render produced no {label} pass at {path}")
        image = self.bpy.data.images.load(str(path), check_existing=False)
        try:
            width, height = image.size
            pixels = np.array(image.pixels[:], dtype=np.float64)
            return pixels.reshape(height, width, -1)[:, :, 0]  # rows bottom-up
        finally:
            self.bpy.data.images.remove(image)

    def render_frame(self, frame):
        self.scene.frame_set(frame)
        self.bpy.ops.render.render(write_still=False)
        depth = self._load_exr("depth", frame)
        intensity = self._load_exr("intensity", frame)
        return depth, intensity


# ---------------------------------------------------------------------------
# Export driver
# ---------------------------------------------------------------------------

def export_animation(settings: ExportSettings, backend=None):
    """Render the frame range and write FMAP files plus a manifest.

    Returns the list of written frame paths.  ``backend`` defaults to
    :class:`BlenderBackend`; anything exposing ``resolution``,
    ``camera_fov``, ``frame_rate``, and ``render_frame`` works, which is how
    the math is exercised without a Blender installation.
    """
    if backend is None:
        backend = BlenderBackend(settings)
    width, height = backend.resolution()
    cam_fov_x, cam_fov_y = backend.camera_fov()
    frame_rate = backend.frame_rate()
    n_az = settings.n_az or width
    n_el = settings.n_el or height
    fov_az = settings.fov_az if settings.fov_az is not None else cam_fov_x
    fov_el = settings.fov_el if settings.fov_el is not None else cam_fov_y

    rows, cols = perspective_indices(n_az, n_el, fov_az, fov_el, width,
                                     height, cam_fov_x, cam_fov_y)

    frames = range(settings.frame_start, settings.frame_end + 1)
    ranges = []
    intensities = []
    for frame in frames:
        depth, intensity = backend.render_frame(frame)
        if depth.shape != (height, width) or intensity.shape != (height, width):
            raise DimensionDriftError(
                f"frame {frame} rendered at {depth.shape[::-1]}, "
                f"expected {(width, height)}; aborting export")
        depth = depth[rows, cols]
        miss = ~np.isfinite(depth) | (depth >= MISS_DEPTH)
        range_map = np.where(miss, np.inf,
                             planar_depth_to_range(depth, fov_az, fov_el))
        ranges.append(range_map)
        intensities.append(np.where(miss, 0.0, intensity[rows, cols]))

    velocity_maps = velocities_from_ranges(ranges, frame_rate)

    settings.output_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for index, frame in enumerate(frames):
        path = settings.output_dir / f"frame_{index:05d}.fmap"
        write_fmap(path, frame_index=index, time=index / frame_rate,
                   fov_az=fov_az, fov_el=fov_el, range_map=ranges[index],
                   amplitude_map=intensities[index],
                   velocity_map=velocity_maps[index])
        paths.append(path)
    write_manifest(paths, settings.output_dir / MANIFEST_NAME, comments=[
        f"exported frames {settings.frame_start}..{settings.frame_end}",
        f"intensity_source: {settings.intensity_source}",
        f"grid {n_el}x{n_az}, source render {height}x{width}",
        "velocity: inter-frame depth difference",
    ])
    return paths


def parse_frames(spec: str):
    """Parse an inclusive frame range: '1..100' or a single frame '7'."""
    if ".." in spec:
        start, _, end = spec.partition("..")
    else:
        start = end = spec
    try:
        return int(start), int(end)
    except ValueError as exc:
        raise ConfigurationError(f"bad frame range {spec!r}") from exc


def parse_args(argv) -> ExportSettings:
    parser = argparse.ArgumentParser(
        prog="export.py", description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, metavar="DIR")
    parser.add_argument("--frames", required=True, metavar="A..B")
    parser.add_argument("--camera", default=None)
    parser.add_argument("--intensity", choices=["emission", "diffuse"],
                        default="emission")
    parser.add_argument("--pixels", default=None, metavar="NAZxNEL",
                        help="equiangular output grid (default: render size)")
    parser.add_argument("--fov-az-deg", type=float, default=None)
    parser.add_argument("--fov-el-deg", type=float, default=None)
    args = parser.parse_args(argv)
    start, end = parse_frames(args.frames)
    n_az = n_el = None
    if args.pixels:
        try:
            n_az, n_el = (int(x) for x in args.pixels.lower().split("x"))
        except ValueError as exc:
            raise ConfigurationError(f"bad --pixels {args.pixels!r}") from exc
    return ExportSettings(
        output_dir=Path(args.out), frame_start=start, frame_end=end,
        camera=args.camera, intensity_source=args.intensity,
        n_az=n_az, n_el=n_el,
        fov_az=np.deg2rad(args.fov_az_deg) if args.fov_az_deg else None,
        fov_el=np.deg2rad(args.fov_el_deg) if args.fov_el_deg else None)


def main():
    # Blender passes script args after a literal "--"
    argv = sys.argv[sys.argv.index("--") + 1:] if "--" in sys.argv else sys.argv[1:]
    settings = parse_args(argv)
    paths = export_animation(settings)
    print(f"exported {len(paths)} frames to {settings.output_dir}")


if __name__ == "__main__":
    main()
