"""Procedural sprite-face dataset with exact ground-truth landmarks.

Each record is a grayscale image containing two eye discs, a nose disc and a
mouth segment, plus seeded pixel noise. The five landmark positions (left
eye, right eye, nose, mouth corners) are known analytically, so the
conditioning target is exact by construction. Normalized coordinates map to
pixels via px = (x + 1) / 2 * (size - 1).
"""

import csv
import hashlib
import io
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
from scipy import ndimage

FORMAT_VERSION = 1
N_LANDMARKS = 5

LANDMARK_NAMES = (
    "left_eye_x", "left_eye_y",
    "right_eye_x", "right_eye_y",
    "nose_x", "nose_y",
    "mouth_left_x", "mouth_left_y",
    "mouth_right_x", "mouth_right_y",
)

# sampling ranges (normalized coords / pixels / intensities)
RANGES = {
    "eye_x_left": (-0.75, -0.15),
    "eye_x_right": (0.15, 0.75),
    "eye_y": (-0.7, -0.25),
    "nose_x": (-0.35, 0.35),
    "nose_y": (-0.12, 0.15),
    "mouth_x_left": (-0.75, -0.15),
    "mouth_x_right": (0.15, 0.75),
    "mouth_y": (0.3, 0.7),
    "eye_radius": (1.5, 2.5),
    "nose_radius": (1.5, 2.5),
    "mouth_thickness": (1.6, 2.6),
    "foreground": (0.75, 1.0),
    "background": (0.0, 0.2),
    "noise_amp": (0.0, 0.04),
}


class DataError(ValueError):
    pass


@dataclass
class FaceParams:
    left_eye: tuple
    right_eye: tuple
    nose: tuple
    mouth_left: tuple
    mouth_right: tuple
    eye_radius: float
    nose_radius: float
    mouth_thickness: float
    foreground: float
    background: float
    noise_amp: float
    noise_seed: int = 0

    def landmarks(self):
        """Flat target vector in the fixed landmark order."""
        pts = (self.left_eye, self.right_eye, self.nose, self.mouth_left, self.mouth_right)
        return np.array([c for p in pts for c in p], dtype=np.float64)

    def validate(self, image_size):
        lm = self.landmarks()
        if np.any(np.abs(lm) > 1):
            raise DataError("landmark outside [-1,1]")
        if not self.left_eye[0] < self.right_eye[0]:
            raise DataError("eyes out of order")
        eye_row = max(self.left_eye[1], self.right_eye[1])
        mouth_row = min(self.mouth_left[1], self.mouth_right[1])
        if not eye_row < self.nose[1] < mouth_row:
            raise DataError("nose not between eye row and mouth row")
        if min(self.eye_radius, self.nose_radius) < 1 or self.mouth_thickness < 1:
            raise DataError("feature radius below 1 pixel")
        # features must fit on the canvas
        margin = max(self.eye_radius, self.nose_radius, self.mouth_thickness) + 1
        px = to_pixels(lm, image_size).reshape(-1, 2)
        if np.any(px < margin) or np.any(px > image_size - 1 - margin):
            raise DataError("feature does not fit inside the canvas")
        # features must not merge (keeps landmarks recoverable from pixels)
        radii = [self.eye_radius, self.eye_radius, self.nose_radius]
        for i in range(3):
            for j in range(i + 1, 3):
                if np.hypot(*(px[i] - px[j])) < radii[i] + radii[j] + 2:
                    raise DataError("features overlap")
        half = max(self.mouth_thickness / 2.0, 0.8)
        for i in range(3):
            d = _point_segment_distance(px[i], px[3], px[4])
            if d < radii[i] + half + 2:
                raise DataError("features overlap")
        return self


def _point_segment_distance(p, a, b):
    p, a, b = (np.asarray(v, dtype=np.float64) for v in (p, a, b))
    d = b - a
    t = np.clip(np.dot(p - a, d) / np.dot(d, d), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * d)))


def to_pixels(coords, image_size):
    """Normalized [-1,1] coordinates -> pixel coordinates."""
    return (np.asarray(coords, dtype=np.float64) + 1.0) / 2.0 * (image_size - 1)


def to_normalized(pixels, image_size):
    return np.asarray(pixels, dtype=np.float64) / (image_size - 1) * 2.0 - 1.0


def sample_face_params(rng, image_size=32, max_retries=1000):
    """Rejection-sample FaceParams from the documented uniform ranges."""
    u = rng.uniform
    for _ in range(max_retries):
        params = FaceParams(
            left_eye=(u(*RANGES["eye_x_left"]), u(*RANGES["eye_y"])),
            right_eye=(u(*RANGES["eye_x_right"]), u(*RANGES["eye_y"])),
            nose=(u(*RANGES["nose_x"]), u(*RANGES["nose_y"])),
            mouth_left=(u(*RANGES["mouth_x_left"]), u(*RANGES["mouth_y"])),
            mouth_right=(u(*RANGES["mouth_x_right"]), u(*RANGES["mouth_y"])),
            eye_radius=u(*RANGES["eye_radius"]),
            nose_radius=u(*RANGES["nose_radius"]),
            mouth_thickness=u(*RANGES["mouth_thickness"]),
            foreground=u(*RANGES["foreground"]),
            background=u(*RANGES["background"]),
            noise_amp=u(*RANGES["noise_amp"]),
            noise_seed=int(rng.integers(0, 2**63 - 1)),
        )
        try:
            return params.validate(image_size)
        except DataError:
            continue
    raise DataError(f"could not sample valid FaceParams in {max_retries} tries")


def _disc(xgrid, ygrid, center_px, radius):
    cx, cy = center_px
    return (xgrid - cx) ** 2 + (ygrid - cy) ** 2 <= radius**2


def _segment(xgrid, ygrid, a_px, b_px, half_width):
    ax, ay = a_px
    bx, by = b_px
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    t = ((xgrid - ax) * dx + (ygrid - ay) * dy) / denom
    dist2 = (xgrid - (ax + t * dx)) ** 2 + (ygrid - (ay + t * dy)) ** 2
    # flat end caps: the stroke stops exactly at the corner landmarks
    return (dist2 <= half_width**2) & (t >= 0.0) & (t <= 1.0)


def render_face(params, image_size=32):
    """Deterministic raster of a FaceParams; float image in [0,1]."""
    ygrid, xgrid = np.mgrid[0:image_size, 0:image_size].astype(np.float64)
    img = np.full((image_size, image_size), params.background, dtype=np.float64)
    mask = np.zeros_like(img, dtype=bool)
    for center, radius in (
        (params.left_eye, params.eye_radius),
        (params.right_eye, params.eye_radius),
        (params.nose, params.nose_radius),
    ):
        mask |= _disc(xgrid, ygrid, to_pixels(center, image_size), radius)
    mask |= _segment(
        xgrid, ygrid,
        to_pixels(params.mouth_left, image_size),
        to_pixels(params.mouth_right, image_size),
        max(params.mouth_thickness / 2.0, 0.8),
    )
    img[mask] = params.foreground
    if params.noise_amp > 0:
        noise_rng = np.random.default_rng(params.noise_seed)
        img += params.noise_amp * noise_rng.uniform(-1, 1, img.shape)
    return np.clip(img, 0.0, 1.0)


def quantize(img):
    return np.round(img * 255.0).astype(np.uint8)


@dataclass
class Dataset:
    image_size: int
    landmark_count: int
    seed: int
    images_u8: np.ndarray   # (n, size, size) uint8
    targets: np.ndarray     # (n, 2L) float64
    manifest: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.images_u8.shape[0]

    def images_float(self, idx=None, dtype=np.float64):
        sel = self.images_u8 if idx is None else self.images_u8[idx]
        return (sel.astype(dtype) / 255.0)[:, None, :, :]

    def batches(self, batch_size, rng, dtype=np.float64):
        """Endless seed-deterministic batch stream of (images, targets)."""
        while True:
            idx = rng.integers(0, self.n, size=batch_size)
            yield self.images_float(idx, dtype), self.targets[idx]

    def digest(self):
        h = hashlib.sha256()
        h.update(_manifest_text(self.manifest).encode())
        h.update(self.images_u8.tobytes())
        h.update(_targets_csv_text(self.targets).encode())
        return h.hexdigest()


def _manifest_text(manifest):
    return "".join(f"{k}={manifest[k]}\n" for k in sorted(manifest))


def _targets_csv_text(targets):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LANDMARK_NAMES)
    for row in targets:
        writer.writerow([f"{v:.6f}" for v in row])
    return buf.getvalue()


def generate_dataset(n, image_size=32, seed=0, noise=True):
    """Generate n records deterministically from a single seed."""
    if n < 1:
        raise DataError("n must be >= 1")
    children = np.random.SeedSequence(seed).spawn(n)
    images = np.empty((n, image_size, image_size), dtype=np.uint8)
    targets = np.empty((n, 2 * N_LANDMARKS), dtype=np.float64)
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        params = sample_face_params(rng, image_size)
        if not noise:
            params.noise_amp = 0.0
        images[i] = quantize(render_face(params, image_size))
        targets[i] = params.landmarks()
    manifest = {
        "version": FORMAT_VERSION,
        "image_size": image_size,
        "landmark_count": N_LANDMARKS,
        "n": n,
        "seed": seed,
        "noise": int(noise),
    }
    for key, (lo, hi) in RANGES.items():
        manifest[f"range_{key}"] = f"{lo}:{hi}"
    return Dataset(image_size, N_LANDMARKS, seed, images, targets, manifest)


def save_dataset(dataset, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest").write_text(_manifest_text(dataset.manifest))
    (out / "images.bin").write_bytes(dataset.images_u8.tobytes())
    (out / "targets.csv").write_text(_targets_csv_text(dataset.targets))
    return out


def load_dataset(path):
    path = Path(path)
    manifest = {}
    for line in (path / "manifest").read_text().splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            manifest[k] = v
    size = int(manifest["image_size"])
    n = int(manifest["n"])
    raw = (path / "images.bin").read_bytes()
    images = np.frombuffer(raw, dtype=np.uint8).reshape(n, size, size).copy()
    with (path / "targets.csv").open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        targets = np.array([[float(v) for v in row] for row in reader])
    if tuple(header) != LANDMARK_NAMES:
        raise DataError("unexpected targets.csv header")
    if targets.shape != (n, 2 * N_LANDMARKS):
        raise DataError("targets.csv row/column count mismatch")
    return Dataset(size, int(manifest["landmark_count"]), int(manifest["seed"]),
                   images, targets, manifest)


def sample_latent(rng, latent_dim, batch, dtype=np.float64):
    """Uniform latent samples in [-1,1]^latent_dim."""
    return rng.uniform(-1.0, 1.0, size=(batch, latent_dim)).astype(dtype)


def make_condition_input(z, y):
    """Generator input [z ; y], z leading."""
    z = np.asarray(z)
    y = np.asarray(y)
    if z.shape[0] != y.shape[0]:
        raise DataError(f"batch mismatch: {z.shape[0]} vs {y.shape[0]}")
    return np.concatenate([z, y.astype(z.dtype)], axis=1)


def extract_landmarks(image):
    """Recover the five landmarks from a (near) noise-free sprite image by
    connected-component analysis; used to validate that targets are truly
    encoded in pixels."""
    img = np.asarray(image, dtype=np.float64)
    size = img.shape[-1]
    img = img.reshape(size, size)
    thresh = 0.5 * (img.min() + img.max())
    labels, count = ndimage.label(img > thresh)
    if count != 4:
        raise DataError(f"expected 4 components, found {count}")
    cents = ndimage.center_of_mass(img > thresh, labels, range(1, count + 1))
    order = np.argsort([c[0] for c in cents])  # by row: eyes, nose, mouth
    eye_a, eye_b = sorted(order[:2], key=lambda i: cents[i][1])
    nose = order[2]
    mouth = order[3] + 1
    # mouth corners: extremes of the stroke along its principal axis
    mouth_pix = np.argwhere(labels == mouth).astype(np.float64)
    center = mouth_pix.mean(axis=0)
    centered = mouth_pix - center
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axis = vt[0]
    if axis[1] < 0:
        axis = -axis  # orient left -> right in column direction
    proj = centered @ axis
    # pixel centers stop up to half a pixel short of the flat cap faces
    left_px = center + axis * (proj.min() - 0.5)
    right_px = center + axis * (proj.max() + 0.5)

    def norm_pt(row_col):
        return to_normalized(np.array([row_col[1], row_col[0]]), size)

    pts = [cents[eye_a], cents[eye_b], cents[nose], left_px, right_px]
    return np.concatenate([norm_pt(p) for p in pts])
