"""Exporter conformance tests against an analytic render backend.

No Blender is required: a fake backend produces the planar-Z depth and
intensity passes a renderer would, computed in closed form for spheres, and
the exporter's output is validated through the consumer package's ingest
module.
"""

import io

import numpy as np
import pytest

from export import (ConfigurationError, DimensionDriftError, ExportSettings,
                    export_animation, parse_args, parse_frames,
                    velocities_from_ranges)
from scenecube.dsp import extract_track, range_doppler
from scenecube.evaluate import fit_sinusoid
from scenecube.fileio import read_frame, read_sequence, write_frame
from scenecube.signal import RadarConfig, synthesize_cpi

FPS = 24.0


class FakeSphereBackend:
    """Analytic perspective depth/intensity passes for one moving sphere.

    Rays leave the origin through a pinhole grid uniform in tangent space
    (rows bottom-up, like renderer pixel buffers); the depth pass is planar
    Z (distance along the camera axis) and the intensity pass is the
    Lambert-shaded silhouette, like a diffuse render under a headlight.
    """

    def __init__(self, center_of_frame, radius=0.5, width=33, height=23,
                 fov_x=np.deg2rad(30.0), fov_y=np.deg2rad(22.0)):
        self.center_of_frame = center_of_frame
        self.radius = radius
        self.width = width
        self.height = height
        self.fov = (fov_x, fov_y)
        self.rendered = []

    def resolution(self):
        return self.width, self.height

    def camera_fov(self):
        return self.fov

    def frame_rate(self):
        return FPS

    def _directions(self):
        w, h = self.width, self.height
        px = (2.0 * (np.arange(w) + 0.5) / w - 1.0) * np.tan(self.fov[0] / 2)
        py = (2.0 * (np.arange(h) + 0.5) / h - 1.0) * np.tan(self.fov[1] / 2)
        dirs = np.stack([np.ones((h, w)),
                         np.broadcast_to(px, (h, w)),
                         np.broadcast_to(py[:, None], (h, w))], axis=-1)
        return dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)

    def render_frame(self, frame):
        self.rendered.append(frame)
        center = np.asarray(self.center_of_frame(frame), dtype=float)
        dirs = self._directions()
        dc = dirs @ center
        disc = dc * dc - center @ center + self.radius**2
        t = np.where(disc >= 0, dc - np.sqrt(np.maximum(disc, 0.0)), np.inf)
        hit = (disc >= 0) & (t > 0)
        depth = np.where(hit, t * dirs[..., 0], 1e10)  # planar Z
        points = np.where(hit, t, 1.0)[..., None] * dirs
        normals = (points - center) / self.radius
        lambert = np.clip(-(dirs * normals).sum(axis=-1), 0.0, 1.0)
        intensity = np.where(hit, lambert, 0.0)
        return depth, intensity


class FlatWallBackend(FakeSphereBackend):
    """Constant planar depth everywhere: an infinite wall facing the camera."""

    def __init__(self, depth, **kw):
        super().__init__(center_of_frame=lambda f: (1, 0, 0), **kw)
        self.depth = depth

    def render_frame(self, frame):
        shape = (self.height, self.width)
        return np.full(shape, self.depth), np.ones(shape)


def _static_settings(tmp_path, frames=(1, 3), **kw):
    return ExportSettings(output_dir=tmp_path / "fmaps", frame_start=frames[0],
                          frame_end=frames[1], **kw)


def test_static_sphere_export_validates_through_ingest(tmp_path):
    distance = 12.0
    backend = FakeSphereBackend(lambda f: (distance, 0.0, 0.0), radius=0.5)
    paths = export_animation(_static_settings(tmp_path), backend=backend)
    assert len(paths) == 3
    frames = read_sequence(tmp_path / "fmaps")  # validates headers + sequence
    assert [f.frame_index for f in frames] == [0, 1, 2]
    center = frames[0].range[frames[0].grid.n_el // 2, frames[0].grid.n_az // 2]
    # center pixel: authored camera-to-surface distance within 1 cm
    assert abs(center - (distance - 0.5)) < 0.01
    for f in frames:
        assert np.all(np.abs(f.radial_velocity) < 1e-6)
        hit = np.isfinite(f.range)
        assert np.any(hit)
        assert np.all(f.amplitude[~hit] == 0.0)
        assert np.all(np.asarray(f.range)[~hit] == np.inf)


def test_round_trip_through_primary_ingest_is_lossless(tmp_path):
    backend = FakeSphereBackend(lambda f: (8.0, 0.2, -0.1))
    paths = export_animation(_static_settings(tmp_path, frames=(5, 5)),
                             backend=backend)
    original = paths[0].read_bytes()
    rewritten = io.BytesIO()
    write_frame(read_frame(paths[0]), rewritten)
    assert rewritten.getvalue() == original


def test_manifest_records_intensity_choice(tmp_path):
    backend = FakeSphereBackend(lambda f: (8.0, 0.0, 0.0))
    export_animation(_static_settings(tmp_path, intensity_source="diffuse"),
                     backend=backend)
    manifest = (tmp_path / "fmaps" / "manifest.txt").read_text()
    assert "intensity_source: diffuse" in manifest


def test_planar_depth_converts_by_off_axis_cosine(tmp_path):
    z0 = 10.0
    fov_az, fov_el = np.deg2rad(40.0), np.deg2rad(30.0)
    backend = FlatWallBackend(z0, width=21, height=15, fov_x=fov_az,
                              fov_y=fov_el)
    paths = export_animation(
        _static_settings(tmp_path, frames=(1, 1), fov_az=fov_az, fov_el=fov_el),
        backend=backend)
    maps = read_frame(paths[0])
    n_el, n_az = maps.grid.n_el, maps.grid.n_az
    assert maps.range[n_el // 2, n_az // 2] == pytest.approx(z0, rel=1e-6)
    theta_az = fov_az * ((0 + 0.5) / n_az - 0.5)
    theta_el = fov_el * ((0 + 0.5) / n_el - 0.5)
    expected_corner = z0 / (np.cos(theta_az) * np.cos(theta_el))
    assert maps.range[0, 0] == pytest.approx(expected_corner, rel=1e-6)
    assert expected_corner > z0


def test_velocity_by_depth_differencing(tmp_path):
    closing = 0.1  # metres per frame toward the camera
    backend = FakeSphereBackend(lambda f: (15.0 - closing * f, 0.0, 0.0),
                                radius=0.5)
    paths = export_animation(_static_settings(tmp_path, frames=(1, 4)),
                             backend=backend)
    frames = [read_frame(p) for p in paths]
    centers = [f.radial_velocity[f.grid.n_el // 2, f.grid.n_az // 2]
               for f in frames]
    # approaching target: negative radial velocity of closing * fps
    assert np.allclose(centers, -closing * FPS, atol=1e-4)
    # first frame uses the forward difference
    assert centers[0] == pytest.approx(centers[1], abs=1e-4)
    # pixels hit in one frame but not its neighbor carry velocity 0
    edge = np.isfinite(frames[1].range) != np.isfinite(frames[0].range)
    if np.any(edge):
        assert np.all(frames[1].radial_velocity[edge] == 0.0)


def test_velocities_from_ranges_single_frame_is_zero():
    ranges = [np.array([[3.0, np.inf]])]
    (v,) = velocities_from_ranges(ranges, FPS)
    assert np.all(v == 0.0)


def test_dimension_drift_aborts(tmp_path):
    class Drifting(FakeSphereBackend):
        def render_frame(self, frame):
            depth, intensity = super().render_frame(frame)
            if frame >= 2:
                return depth[:, :-1], intensity[:, :-1]
            return depth, intensity

    backend = Drifting(lambda f: (10.0, 0.0, 0.0))
    with pytest.raises(DimensionDriftError, match="frame 2"):
        export_animation(_static_settings(tmp_path), backend=backend)


def test_settings_validation():
    with pytest.raises(ConfigurationError, match="empty"):
        ExportSettings(output_dir=".", frame_start=5, frame_end=4)
    with pytest.raises(ConfigurationError, match="intensity"):
        ExportSettings(output_dir=".", frame_start=1, frame_end=2,
                       intensity_source="albedo")


def test_frame_range_and_arg_parsing():
    assert parse_frames("1..100") == (1, 100)
    assert parse_frames("7") == (7, 7)
    with pytest.raises(ConfigurationError):
        parse_frames("a..b")
    settings = parse_args(["--out", "d", "--frames", "2..9",
                           "--pixels", "64x48", "--intensity", "diffuse"])
    assert (settings.frame_start, settings.frame_end) == (2, 9)
    assert (settings.n_az, settings.n_el) == (64, 48)
    assert settings.intensity_source == "diffuse"


def test_exported_orbit_yields_sinusoidal_doppler_track(tmp_path):
    """End-to-end: exporter output through the full consumer pipeline."""
    period = 100 / 24.0
    omega = 2 * np.pi / period

    def orbit(frame):
        # one lap of a 3 m circle, 20.6 m out, in the camera plane
        t = (frame - 1) / FPS
        return (20.6 + 3.0 * np.cos(omega * t), 3.0 * np.sin(omega * t), 0.0)

    backend = FakeSphereBackend(orbit, radius=0.6, width=41, height=9,
                                fov_x=np.deg2rad(24.0), fov_y=np.deg2rad(6.0))
    export_animation(_static_settings(tmp_path, frames=(1, 100)),
                     backend=backend)
    frames = read_sequence(tmp_path / "fmaps")
    cfg = RadarConfig.indoor_default()
    maps = [range_doppler(synthesize_cpi(f, cfg, cpi_index=f.frame_index))
            for f in frames]
    track = extract_track(maps, cfg)
    live = ~np.isnan(track.velocities)
    assert live.sum() > 90
    fit = fit_sinusoid(track.times[live], track.velocities[live])
    assert abs(fit.period - period) / period < 0.10
    # depth-differenced velocity is Eulerian, so the envelope is noisier
    # than the analytic renderer's; a fifth of the amplitude is typical
    assert fit.residual_rms < 0.20 * fit.amplitude
    # the detected speed stays near the orbital speed (within two bins)
    speed = omega * 3.0
    assert np.nanmax(np.abs(track.velocities)) <= speed + 0.41
