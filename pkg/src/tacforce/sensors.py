"""Synthetic force-paired tactile data from parametric virtual sensors.

Two virtual fingertips grasp a rigid indenter quasi-statically, so every
frame's left and right deformations derive from one shared contact wrench.
The elastomer is a Gaussian-influence linear surrogate: displacement is
linear in the shear pair (Fx, Fy) and in Fz separately, which gives an
analytic oracle for tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SENSOR_KINDS = ("grid_vision", "pin_vision", "taxel_array")

# Marker counts per kind are fixed by the virtual hardware.
MARKER_COUNTS = {"grid_vision": 80, "pin_vision": 127, "taxel_array": 16}

# Default compliance (mm/N) and geometry per kind; pin_vision has the
# softest skin, taxel_array the stiffest. Override gains via sim.* config.
# Marker radii are in storage pixels (~0.6 mm discs), large enough to
# survive the nearest-neighbor resize to the model input size.
KIND_DEFAULTS = {
    "grid_vision": {"active": (25.0, 25.0), "g_s": 0.30, "g_n": 0.15, "sigma": 5.0, "r0": 11.0},
    "pin_vision": {"active": (40.0, 40.0), "g_s": 0.55, "g_n": 0.30, "sigma": 8.0, "r0": 12.0},
    "taxel_array": {"active": (24.0, 22.0), "g_s": 0.25, "g_n": 0.12, "sigma": 6.0, "r0": 14.0},
}

RENDER_SIZE = (640, 480)  # (W, H) px; also the canonical storage size

EPS_RADIAL = 0.1  # mm, smoothing of the radial unit vector at the center

# Symmetric double-sided indenter shapes, realized as a spread factor on the
# profile's influence radius. Index order fixes the id list for a dataset.
INDENTER_SIGMA_SCALE = {
    "sphere_small": 0.65,
    "sphere_large": 1.30,
    "cube": 1.00,
    "triangle": 0.80,
    "ridge": 0.90,
    "ring": 1.15,
    "cone": 0.70,
    "dome": 1.45,
}


def indenter_ids(n: int) -> list[str]:
    """First ``n`` indenter ids; beyond the 8 named shapes, generic probes."""
    names = list(INDENTER_SIGMA_SCALE)
    if n <= len(names):
        return names[:n]
    return names + [f"probe_{i}" for i in range(len(names), n)]


def indenter_sigma_scale(indenter_id: str) -> float:
    if indenter_id in INDENTER_SIGMA_SCALE:
        return INDENTER_SIGMA_SCALE[indenter_id]
    if indenter_id.startswith("probe_"):
        idx = int(indenter_id.split("_", 1)[1])
        return 0.6 + 0.05 * (idx % 16)
    raise ConfigError(f"unknown indenter id: {indenter_id}")


@dataclass
class SensorProfile:
    """Geometry, marker layout, and compliance of one virtual sensor."""

    sensor_id: str
    kind: str
    marker_positions: np.ndarray    # (n, 2) rest positions, mm
    active_area: tuple[float, float]  # (width, height) mm
    shear_gain: float               # mm/N
    normal_gain: float              # mm/N
    influence_radius: float         # mm
    marker_radius: float            # px at render
    render_size: tuple[int, int]    # (W, H) px
    side: str                       # "left" | "right"

    @property
    def n_markers(self) -> int:
        return len(self.marker_positions)

    def pixel_scale(self) -> tuple[float, float, float]:
        """Uniform mm->px scale and the (x, y) px offset centering the area."""
        w_px, h_px = self.render_size
        w_mm, h_mm = self.active_area
        scale = min(w_px / w_mm, h_px / h_mm)
        off_x = (w_px - w_mm * scale) / 2.0
        off_y = (h_px - h_mm * scale) / 2.0
        return scale, off_x, off_y

    def marker_pixels(self, displacements: np.ndarray | None = None) -> np.ndarray:
        """Marker centers in px, optionally displaced (displacements in mm)."""
        pos = self.marker_positions
        if displacements is not None:
            pos = pos + displacements
        scale, off_x, off_y = self.pixel_scale()
        return pos * scale + np.array([off_x, off_y])

    def to_dict(self) -> dict:
        return {
            "sensor_id": self.sensor_id,
            "kind": self.kind,
            "marker_positions": self.marker_positions.tolist(),
            "active_area": list(self.active_area),
            "shear_gain": self.shear_gain,
            "normal_gain": self.normal_gain,
            "influence_radius": self.influence_radius,
            "marker_radius": self.marker_radius,
            "render_size": list(self.render_size),
            "side": self.side,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SensorProfile":
        return cls(
            sensor_id=d["sensor_id"],
            kind=d["kind"],
            marker_positions=np.asarray(d["marker_positions"], dtype=float),
            active_area=tuple(d["active_area"]),
            shear_gain=d["shear_gain"],
            normal_gain=d["normal_gain"],
            influence_radius=d["influence_radius"],
            marker_radius=d["marker_radius"],
            render_size=tuple(d["render_size"]),
            side=d["side"],
        )


@dataclass
class ContactState:
    """One shared contact wrench plus where it acts on the skin."""

    wrench: np.ndarray        # (6,) Fx, Fy, Fz (N), tau_x, tau_y, tau_z (N*mm)
    contact_center: np.ndarray  # (2,) mm in the canonical (left) frame
    indenter_id: str

    @property
    def force(self) -> np.ndarray:
        return self.wrench[:3]

    def validate(self, mu_cap: float) -> None:
        fx, fy, fz = self.wrench[:3]
        if fz < 0:
            raise ValueError(f"compressive contact requires Fz >= 0, got {fz}")
        cap = fz * mu_cap + 1e-9
        if abs(fx) > cap or abs(fy) > cap:
            raise ValueError(
                f"shear ({fx:.3f}, {fy:.3f}) exceeds friction cap {cap:.3f}"
            )

    def offset_from(self, active_area: tuple[float, float]) -> np.ndarray:
        """Contact center relative to the middle of the given active area."""
        return self.contact_center - np.asarray(active_area) / 2.0


@dataclass
class RawSignal:
    """Raw per-frame sensor output before canonicalization.

    Vision kinds carry a grayscale render; the taxel kind carries the
    (16, 3) per-taxel (dx, dy, dz) deformation signal.
    """

    kind: str
    image: np.ndarray | None = None   # (H, W) uint8
    taxels: np.ndarray | None = None  # (16, 3) float


@dataclass
class GraspEpisode:
    """A quasi-static bilateral grasp: one wrench per frame, two sensors."""

    episode_id: str
    indenter_id: str
    frames: list[tuple[ContactState, RawSignal, RawSignal]]
    seed: int
    profiles: tuple[SensorProfile, SensorProfile] = field(repr=False, default=None)

    @property
    def n_frames(self) -> int:
        return len(self.frames)


def _grid_layout(active: tuple[float, float], nx: int, ny: int, margin: float) -> np.ndarray:
    w, h = active
    xs = np.linspace(margin, w - margin, nx)
    ys = np.linspace(margin, h - margin, ny)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def _hex_layout(active: tuple[float, float], rings: int) -> np.ndarray:
    """Centered hexagonal packing: 1 + 3*rings*(rings+1) pins."""
    w, h = active
    spacing = (min(w, h) / 2.0 - 2.0) / rings
    pts = []
    for q in range(-rings, rings + 1):
        for r in range(-rings, rings + 1):
            if (abs(q) + abs(r) + abs(q + r)) // 2 <= rings:
                x = spacing * (q + r / 2.0)
                y = spacing * (r * np.sqrt(3.0) / 2.0)
                pts.append((x + w / 2.0, y + h / 2.0))
    return np.array(pts)


def make_profile(kind: str, side: str, seed: int, jitter_mm: float = 0.0,
                 shear_gain: float | None = None,
                 normal_gain: float | None = None) -> SensorProfile:
    """Build a virtual sensor of the given kind.

    Deterministic for fixed (kind, seed, jitter). ``jitter_mm`` perturbs the
    rest layout to emulate manufacturing variation; 0 keeps the canonical
    lattice/hex/grid layout exactly.
    """
    if kind not in SENSOR_KINDS:
        raise ConfigError(f"unknown sensor kind: {kind!r} (expected one of {SENSOR_KINDS})")
    if side not in ("left", "right"):
        raise ConfigError(f"side must be 'left' or 'right', got {side!r}")
    spec = KIND_DEFAULTS[kind]
    if kind == "grid_vision":
        positions = _grid_layout(spec["active"], nx=8, ny=10, margin=2.5)
    elif kind == "pin_vision":
        positions = _hex_layout(spec["active"], rings=6)
    else:
        positions = _grid_layout(spec["active"], nx=4, ny=4, margin=4.0)
    if jitter_mm > 0.0:
        rng = np.random.default_rng(seed)
        positions = positions + rng.normal(0.0, jitter_mm, positions.shape)
    assert len(positions) == MARKER_COUNTS[kind]
    g_s = spec["g_s"] if shear_gain is None else shear_gain
    g_n = spec["g_n"] if normal_gain is None else normal_gain
    if g_s <= 0 or g_n <= 0:
        raise ConfigError("sensor gains must be strictly positive")
    return SensorProfile(
        sensor_id=f"{kind}_{side}",
        kind=kind,
        marker_positions=positions,
        active_area=spec["active"],
        shear_gain=g_s,
        normal_gain=g_n,
        influence_radius=spec["sigma"],
        marker_radius=spec["r0"],
        render_size=RENDER_SIZE,
        side=side,
    )


def mirror_contact(contact: ContactState, source_area: tuple[float, float],
                   target_area: tuple[float, float]) -> ContactState:
    """The same physical contact seen by the opposing, x-mirrored sensor.

    The lateral offset from the source sensor's center flips sign and is
    re-anchored at the target sensor's center; Fx and the torques whose
    sense depends on x flip with it.
    """
    off = contact.offset_from(source_area)
    center = np.asarray(target_area) / 2.0 + np.array([-off[0], off[1]])
    w = contact.wrench.copy()
    w[0] = -w[0]   # Fx
    w[4] = -w[4]   # tau_y
    w[5] = -w[5]   # tau_z
    return ContactState(wrench=w, contact_center=center, indenter_id=contact.indenter_id)


def displacement_field(profile: SensorProfile, contact: ContactState) -> np.ndarray:
    """Per-marker in-plane displacement (mm) under the contact wrench.

    u(p) = g_s * (Fx, Fy) * w(p) + g_n * Fz * rhat(p) * w(p) with
    w(p) = exp(-|p - c|^2 / (2 sigma^2)) and rhat the outward radial unit
    vector smoothed by EPS_RADIAL near the center.
    """
    fx, fy, fz = contact.wrench[:3]
    sigma = profile.influence_radius * indenter_sigma_scale(contact.indenter_id)
    delta = profile.marker_positions - contact.contact_center
    dist = np.hypot(delta[:, 0], delta[:, 1])
    weight = np.exp(-(dist**2) / (2.0 * sigma**2))
    shear = profile.shear_gain * np.array([fx, fy]) * weight[:, None]
    radial = delta / (dist + EPS_RADIAL)[:, None]
    normal = profile.normal_gain * fz * radial * weight[:, None]
    return shear + normal


def normal_depth_field(profile: SensorProfile, contact: ContactState) -> np.ndarray:
    """Per-marker out-of-plane deflection (mm): g_n * Fz * w(p)."""
    fz = contact.wrench[2]
    sigma = profile.influence_radius * indenter_sigma_scale(contact.indenter_id)
    delta = profile.marker_positions - contact.contact_center
    dist2 = delta[:, 0] ** 2 + delta[:, 1] ** 2
    return profile.normal_gain * fz * np.exp(-dist2 / (2.0 * sigma**2))


BACKGROUND_LEVEL = 230
MARKER_LEVEL = 25


def draw_discs(canvas: np.ndarray, centers_px: np.ndarray, radius: float,
               value: int = MARKER_LEVEL) -> None:
    """Blend anti-aliased discs onto ``canvas`` in place (edge coverage ~1px).

    Discs fully outside the frame are clipped silently.
    """
    h, w = canvas.shape
    r_out = radius + 0.5
    for cx, cy in centers_px:
        x0 = max(int(np.floor(cx - r_out)), 0)
        x1 = min(int(np.ceil(cx + r_out)) + 1, w)
        y0 = max(int(np.floor(cy - r_out)), 0)
        y1 = min(int(np.ceil(cy + r_out)) + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        ys = np.arange(y0, y1, dtype=float)[:, None]
        xs = np.arange(x0, x1, dtype=float)[None, :]
        dist = np.hypot(xs - cx, ys - cy)
        cov = np.clip(radius + 0.5 - dist, 0.0, 1.0)
        win = canvas[y0:y1, x0:x1].astype(float)
        canvas[y0:y1, x0:x1] = np.round(win - cov * (win - value)).astype(np.uint8)


def render_frame(profile: SensorProfile, displacements: np.ndarray,
                 normal_depth: np.ndarray | None = None,
                 noise_std: float = 0.0,
                 rng: np.random.Generator | None = None) -> RawSignal:
    """Render one raw frame from per-marker displacements.

    Vision kinds produce a grayscale image of dark discs on a light
    background; the taxel kind produces the (16, 3) signal with the
    out-of-plane channel taken from ``normal_depth`` (zeros if omitted).
    """
    displacements = np.asarray(displacements, dtype=float)
    if displacements.shape != (profile.n_markers, 2):
        raise ValueError(
            f"expected {profile.n_markers}x2 displacements, got {displacements.shape}"
        )
    if profile.kind == "taxel_array":
        dz = np.zeros(profile.n_markers) if normal_depth is None else np.asarray(normal_depth, dtype=float)
        if dz.shape != (profile.n_markers,):
            raise ValueError(f"expected {profile.n_markers} depth values, got {dz.shape}")
        taxels = np.concatenate([displacements, dz[:, None]], axis=1)
        if noise_std > 0.0 and rng is not None:
            taxels = taxels + rng.normal(0.0, noise_std, taxels.shape)
        return RawSignal(kind=profile.kind, taxels=taxels)

    w, h = profile.render_size
    canvas = np.full((h, w), BACKGROUND_LEVEL, dtype=np.uint8)
    draw_discs(canvas, profile.marker_pixels(displacements), profile.marker_radius)
    if noise_std > 0.0 and rng is not None:
        noisy = canvas.astype(float) + rng.normal(0.0, noise_std * 255.0, canvas.shape)
        canvas = np.clip(np.round(noisy), 0, 255).astype(np.uint8)
    return RawSignal(kind=profile.kind, image=canvas)


def reference_render(profile: SensorProfile) -> RawSignal:
    """The undeformed frame: zero displacement, zero depth."""
    return render_frame(profile, np.zeros((profile.n_markers, 2)))


def _lowpass_walk(rng: np.random.Generator, n: int, alpha: float = 0.05) -> np.ndarray:
    """Smoothed random walk starting at 0, normalized to max |.| of 1."""
    steps = rng.normal(0.0, 1.0, n)
    walk = np.cumsum(steps)
    smooth = np.empty(n)
    acc = 0.0
    for i, v in enumerate(walk):
        acc = (1.0 - alpha) * acc + alpha * v
        smooth[i] = acc
    smooth -= smooth[0]
    peak = np.max(np.abs(smooth))
    return smooth / peak if peak > 0 else smooth


def wrench_trajectory(rng: np.random.Generator, n_frames: int, *,
                      f_min: float = 0.0,
                      fz_peak_range: tuple[float, float] = (6.0, 12.0),
                      shear_limit: float = 3.0,
                      mu_cap: float = 0.4,
                      torque_amp: float = 0.0) -> np.ndarray:
    """Smooth (n_frames, 6) wrench path for one grasp episode.

    Fz ramps from f_min to a sampled peak; tangential components follow a
    low-pass random walk clipped to the shear limit and the friction cap.
    Frame 0 carries zero tangential load.
    """
    peak = rng.uniform(*fz_peak_range)
    t = np.linspace(0.0, 1.0, n_frames)
    ramp = t * t * (3.0 - 2.0 * t)  # smoothstep
    fz = f_min + (peak - f_min) * ramp
    wiggle = 0.02 * peak * _lowpass_walk(rng, n_frames)
    fz = np.clip(fz + wiggle * ramp, 0.0, None)
    fz[0] = f_min

    cap = mu_cap * fz
    shear = np.empty((n_frames, 2))
    for axis in range(2):
        amp = rng.uniform(0.4, 1.0) * shear_limit
        walk = amp * _lowpass_walk(rng, n_frames)
        shear[:, axis] = np.clip(walk, -shear_limit, shear_limit)
    shear = np.clip(shear, -cap[:, None], cap[:, None])
    shear[0] = 0.0

    torque = np.zeros((n_frames, 3))
    if torque_amp > 0.0:
        for axis in range(3):
            torque[:, axis] = torque_amp * _lowpass_walk(rng, n_frames)
        torque[0] = 0.0

    return np.concatenate([shear, fz[:, None], torque], axis=1)


def generate_episode(profile_left: SensorProfile, profile_right: SensorProfile,
                     indenter_id: str, n_frames: int, seed: int, *,
                     f_min: float = 0.0,
                     fz_peak_range: tuple[float, float] = (6.0, 12.0),
                     shear_limit: float = 3.0,
                     mu_cap: float = 0.4,
                     torque_amp: float = 0.0,
                     noise_std: float = 0.0,
                     episode_id: str | None = None) -> GraspEpisode:
    """Simulate one bilateral grasp; both sensors share each frame's wrench.

    Deterministic for fixed arguments. The right sensor renders the
    x-mirrored view of the shared contact, matching a fingertip facing the
    left one; the canonicalization stage mirrors it back.
    """
    if n_frames < 2:
        raise ValueError(f"n_frames must be >= 2, got {n_frames}")
    indenter_sigma_scale(indenter_id)  # validate id early
    rng = np.random.default_rng(seed)
    wrenches = wrench_trajectory(
        rng, n_frames, f_min=f_min, fz_peak_range=fz_peak_range,
        shear_limit=shear_limit, mu_cap=mu_cap, torque_amp=torque_amp,
    )

    # Contact offset is bounded by the smaller active area so the indenter
    # touches well inside both skins.
    left_area = np.asarray(profile_left.active_area)
    right_area = np.asarray(profile_right.active_area)
    bound = np.minimum(left_area, right_area)
    offset = rng.uniform(-0.15, 0.15, 2) * bound
    jitter = rng.normal(0.0, 0.1, (n_frames, 2))
    jitter[0] = 0.0

    frames = []
    for k in range(n_frames):
        contact = ContactState(
            wrench=wrenches[k].copy(),
            contact_center=left_area / 2.0 + offset + jitter[k],
            indenter_id=indenter_id,
        )
        contact.validate(mu_cap)
        raw_left = render_frame(
            profile_left,
            displacement_field(profile_left, contact),
            normal_depth_field(profile_left, contact),
            noise_std=noise_std, rng=rng,
        )
        mirrored = mirror_contact(contact, profile_left.active_area, profile_right.active_area)
        raw_right = render_frame(
            profile_right,
            displacement_field(profile_right, mirrored),
            normal_depth_field(profile_right, mirrored),
            noise_std=noise_std, rng=rng,
        )
        frames.append((contact, raw_left, raw_right))

    return GraspEpisode(
        episode_id=episode_id or f"{indenter_id}_{seed}",
        indenter_id=indenter_id,
        frames=frames,
        seed=seed,
        profiles=(profile_left, profile_right),
    )
