"""PolSAR data model, synthetic Wishart scenes, file formats and rendering."""
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, FormatError, InvalidMatrix, NotPositiveDefinite
from .hpd_core import as_hpd, conj_t, symmetrize

FIELD_MAGIC = b"HPD3"
FIELD_VERSION = 1
_HEADER = struct.Struct("<4sHIIII")
FLAG_LABELS = 1
LOAD_HERMITIAN_TOL = 1e-6
DEFAULT_LOADING = 1e-6

# order of the nine real planes used by flatten-like encodings and manifests
PLANE_KEYS = ("t11", "t22", "t33", "t12_real", "t12_imag",
              "t13_real", "t13_imag", "t23_real", "t23_imag")


@dataclass
class CoherencyField:
    """Row-major grid of 3x3 coherency matrices, shape ``(H, W, 3, 3)``."""

    pixels: np.ndarray
    looks: int = 1

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.complex128)
        if self.pixels.ndim != 4 or self.pixels.shape[2:] != (3, 3):
            raise InvalidMatrix(f"field must have shape (H, W, 3, 3), got {self.pixels.shape}")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


def pauli_vector(s_hh, s_hv, s_vv):
    """Pauli scattering vector ``(S_hh + S_vv, S_hh - S_vv, 2 S_hv) / sqrt(2)``."""
    s_hh, s_hv, s_vv = (np.asarray(s, dtype=np.complex128) for s in (s_hh, s_hv, s_vv))
    return np.stack([s_hh + s_vv, s_hh - s_vv, 2.0 * s_hv], axis=-1) / np.sqrt(2.0)


def multilook_coherency(ks, loading=0.0):
    """Average of outer products ``k k^H`` over the look axis, plus ``loading * I``."""
    ks = np.asarray(ks, dtype=np.complex128)
    if ks.ndim == 1:
        ks = ks[None]
    if ks.shape[-2] == 0:
        raise EmptyInput("multi-look average of zero looks")
    if loading < 0:
        raise ValueError("loading must be >= 0")
    t = np.einsum("...ni,...nj->...ij", ks, ks.conj()) / ks.shape[-2]
    return symmetrize(t) + loading * np.eye(3)


def loading_amount(pixels, factor=DEFAULT_LOADING):
    tr = np.trace(np.asarray(pixels), axis1=-2, axis2=-1).real
    return factor * float(tr.mean())


def diagonal_loading(pixels, factor=DEFAULT_LOADING):
    """Add ``factor * mean trace`` to every diagonal so rank-deficient pixels become HPD."""
    pixels = np.asarray(pixels, dtype=np.complex128)
    return pixels + loading_amount(pixels, factor) * np.eye(3)


# --- synthetic scenes --------------------------------------------------------

@dataclass
class SyntheticSceneSpec:
    """Class centres ``(C, 3, 3)`` for ids ``1..C`` and an ``(H, W)`` layout of ids."""

    centers: np.ndarray
    layout: np.ndarray
    looks: int = 4
    seed: int = 0
    unlabeled_border: int = 0

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.complex128)
        self.layout = np.asarray(self.layout, dtype=np.int64)
        if self.looks < 3:
            raise ValueError(f"looks must be >= 3 for a full-rank Wishart field, got {self.looks}")
        ids = np.unique(self.layout)
        if ids.min() < 1 or ids.max() > len(self.centers):
            raise ValueError(f"layout ids must lie in 1..{len(self.centers)}")


def pixel_rng(seed, index):
    """Independent generator for one pixel; parallel and serial runs agree."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def sample_wishart_pixels(center, looks, seed, indices):
    """Multi-look coherency samples ``(1/N) sum k k^H`` with ``k ~ CN(0, center)``."""
    chol = np.linalg.cholesky(center)
    z = np.empty((len(indices), looks, 3), dtype=np.complex128)
    for n, idx in enumerate(indices):
        g = pixel_rng(seed, int(idx)).standard_normal((2, looks, 3))
        z[n] = (g[0] + 1j * g[1]) / np.sqrt(2.0)
    k = z @ chol.T
    return multilook_coherency(k)


def region_boundary_mask(layout, width):
    """True for pixels within ``width`` (Chebyshev) of a different region."""
    mask = np.zeros(layout.shape, dtype=bool)
    if width <= 0:
        return mask
    h, w = layout.shape
    pad = np.pad(layout, width, mode="edge")
    for di in range(-width, width + 1):
        for dj in range(-width, width + 1):
            shifted = pad[width + di:width + di + h, width + dj:width + dj + w]
            mask |= shifted != layout
    return mask


def generate_synthetic_scene(spec):
    """Complex-Wishart scene: returns ``(CoherencyField, labels)``."""
    for c, center in enumerate(spec.centers, start=1):
        try:
            as_hpd(center)
        except (NotPositiveDefinite, InvalidMatrix) as exc:
            raise NotPositiveDefinite(f"class {c} centre is not HPD: {exc}") from exc
    h, w = spec.layout.shape
    flat_layout = spec.layout.reshape(-1)
    pixels = np.empty((h * w, 3, 3), dtype=np.complex128)
    for c, center in enumerate(spec.centers, start=1):
        idx = np.nonzero(flat_layout == c)[0]
        if idx.size:
            pixels[idx] = sample_wishart_pixels(center, spec.looks, spec.seed, idx)
    labels = spec.layout.astype(np.uint8)
    labels[region_boundary_mask(spec.layout, spec.unlabeled_border)] = 0
    return CoherencyField(pixels.reshape(h, w, 3, 3), spec.looks), labels


def voronoi_layout(height, width, sites, num_classes, seed):
    """Nearest-site partition; site ``k`` belongs to class ``k % C + 1``."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1, size=(sites, 2)) * (height, width)
    ii, jj = np.mgrid[0:height, 0:width]
    d = (ii[..., None] - pts[:, 0]) ** 2 + (jj[..., None] - pts[:, 1]) ** 2
    owner = np.argmin(d, axis=-1)
    return (owner % num_classes + 1).astype(np.int64)


def block_layout(height, width, rows, cols, num_classes):
    bi = np.arange(height) * rows // height
    bj = np.arange(width) * cols // width
    return ((bi[:, None] * cols + bj[None, :]) % num_classes + 1).astype(np.int64)


def stripe_layout(height, width, num_classes):
    return (np.arange(width)[None, :] * num_classes // width + 1).repeat(height, 0).astype(np.int64)


# --- sampling -----------------------------------------------------------------

def stratified_sample(labels, fraction, seed):
    """Flat indices of a per-class random sample of labelled pixels.

    Each class ``c > 0`` contributes ``round(fraction * count_c)`` pixels (at
    least one). Classes are visited in ascending id order with one generator,
    and the returned indices are sorted.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"sample fraction must be in (0, 1], got {fraction}")
    lab = np.asarray(labels).reshape(-1)
    rng = np.random.default_rng(seed)
    picked = []
    for c in np.unique(lab):
        if c == 0:
            continue
        idx = np.nonzero(lab == c)[0]
        n = max(1, int(round(fraction * idx.size)))
        picked.append(idx[np.sort(rng.choice(idx.size, size=n, replace=False))])
    if not picked:
        return np.zeros(0, dtype=np.intp)
    return np.sort(np.concatenate(picked))


# --- binary field format ------------------------------------------------------

def save_field(path, field, labels=None):
    """Write the little-endian ``HPD3`` format (float32 entries, optional u8 labels)."""
    px = field.pixels
    h, w = px.shape[:2]
    flags = 0
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (h, w):
            raise ValueError(f"labels shape {labels.shape} does not match field ({h}, {w})")
        flags |= FLAG_LABELS
    payload = np.empty((h, w, 3, 3, 2), dtype="<f4")
    payload[..., 0] = px.real
    payload[..., 1] = px.imag
    parts = [_HEADER.pack(FIELD_MAGIC, FIELD_VERSION, h, w, int(field.looks), flags),
             payload.tobytes()]
    if labels is not None:
        parts.append(labels.astype(np.uint8).tobytes())
    _atomic_write(path, b"".join(parts))


def _atomic_write(path, data):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def parse_field(data):
    """Decode ``HPD3`` bytes into ``(CoherencyField, labels or None)``."""
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", len(data))
    magic, version, h, w, looks, flags = _HEADER.unpack_from(data, 0)
    if magic != FIELD_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != FIELD_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if h == 0 or w == 0:
        raise FormatError("empty field", 6)
    off = _HEADER.size
    n_px = h * w * 18 * 4
    need = off + n_px + (h * w if flags & FLAG_LABELS else 0)
    if len(data) < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(data)}", len(data))
    if len(data) > need:
        raise FormatError(f"{len(data) - need} trailing bytes", need)
    raw = np.frombuffer(data, dtype="<f4", count=h * w * 18, offset=off).reshape(h * w, 3, 3, 2)
    m = raw[..., 0].astype(np.float64) + 1j * raw[..., 1].astype(np.float64)
    bad = ~np.isfinite(m).all(axis=(-2, -1))
    dev = np.abs(m - conj_t(m)).max(axis=(-2, -1)) if not bad.any() else None
    if dev is not None:
        scale = np.maximum(1.0, np.abs(m).max(axis=(-2, -1)))
        bad = dev > LOAD_HERMITIAN_TOL * scale
    if bad.any():
        k = int(np.argmax(bad))
        raise FormatError(f"pixel {k} (row {k // w}, col {k % w}) is not a finite Hermitian "
                          "matrix", off + k * 72)
    labels = None
    if flags & FLAG_LABELS:
        labels = np.frombuffer(data, dtype=np.uint8, count=h * w, offset=off + n_px)
        labels = labels.reshape(h, w).copy()
    return CoherencyField(symmetrize(m).reshape(h, w, 3, 3), looks), labels


def load_field(path):
    """Load a dataset: an ``HPD3`` binary file or a raster manifest."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == FIELD_MAGIC:
        return parse_field(data)
    if _looks_like_text(data):
        return load_manifest(path)
    return parse_field(data)


def _looks_like_text(data):
    try:
        text = data[:4096].decode("utf-8")
    except UnicodeDecodeError:
        return False
    return "=" in text


# --- raster manifest import ---------------------------------------------------

def load_manifest(path):
    """Import nine raw float32 rasters listed in a ``key = path`` manifest.

    Required keys: ``height``, ``width`` and the nine planes ``t11, t22, t33,
    t12_real, t12_imag, t13_real, t13_imag, t23_real, t23_imag`` (raw
    little-endian float32, row-major). Optional: ``looks`` and ``labels``
    (raw u8 or a binary PGM).
    """
    from .config import parse_kv

    with open(path, encoding="utf-8") as fh:
        kv = parse_kv(fh.read(), str(path))
    base = os.path.dirname(os.path.abspath(path))
    try:
        h, w = int(kv["height"][0]), int(kv["width"][0])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: manifest needs integer height and width ({exc})") from exc
    looks = int(kv.get("looks", ("1", 0))[0])
    planes = {}
    for key in PLANE_KEYS:
        if key not in kv:
            raise FormatError(f"{path}: manifest missing key '{key}'")
        planes[key] = _read_raster(os.path.join(base, kv[key][0]), h, w, "<f4")
    m = np.zeros((h, w, 3, 3), dtype=np.complex128)
    for i in range(3):
        m[..., i, i] = planes[f"t{i + 1}{i + 1}"]
    for i, j in ((0, 1), (0, 2), (1, 2)):
        z = planes[f"t{i + 1}{j + 1}_real"] + 1j * planes[f"t{i + 1}{j + 1}_imag"]
        m[..., i, j] = z
        m[..., j, i] = np.conj(z)
    if not np.isfinite(m).all():
        raise FormatError(f"{path}: raster planes contain NaN or Inf")
    labels = None
    if "labels" in kv:
        lpath = os.path.join(base, kv["labels"][0])
        with open(lpath, "rb") as fh:
            head = fh.read(2)
        labels = read_pgm(lpath) if head == b"P5" else _read_raster(lpath, h, w, np.uint8)
        if labels.shape != (h, w):
            raise FormatError(f"{lpath}: label map shape {labels.shape} != ({h}, {w})")
    return CoherencyField(m, looks), labels


def _read_raster(path, h, w, dtype):
    data = np.fromfile(path, dtype=dtype)
    if data.size != h * w:
        raise FormatError(f"{path}: expected {h * w} values, found {data.size}",
                          data.size * np.dtype(dtype).itemsize)
    return data.reshape(h, w).astype(np.float64 if dtype != np.uint8 else np.uint8)


# --- images -------------------------------------------------------------------

def write_ppm(path, rgb):
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w = rgb.shape[:2]
    _atomic_write(path, f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes())


def write_pgm(path, gray):
    gray = np.asarray(gray, dtype=np.uint8)
    h, w = gray.shape
    _atomic_write(path, f"P5\n{w} {h}\n255\n".encode() + gray.tobytes())


def _read_pnm(path, magic, channels):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos)
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header", pos)
        tokens.append(data[start:pos])
    if tokens[0] != magic:
        raise FormatError(f"{path}: expected {magic.decode()} image", 0)
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit images are supported", pos)
    pos += 1
    need = w * h * channels
    if len(data) - pos < need:
        raise FormatError(f"{path}: truncated pixel data", len(data))
    img = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return img.reshape((h, w, channels) if channels > 1 else (h, w)).copy()


def read_pgm(path):
    return _read_pnm(path, b"P5", 1)


def read_ppm(path):
    return _read_pnm(path, b"P6", 3)


def pauli_rgb(pixels):
    """8-bit false colour: R, G, B from T22, T33, T11 in dB, min-max scaled per channel."""
    pixels = np.asarray(pixels)
    diag = np.stack([pixels[..., 1, 1].real, pixels[..., 2, 2].real, pixels[..., 0, 0].real],
                    axis=-1)
    db = 10.0 * np.log10(np.maximum(diag, np.finfo(np.float64).tiny))
    lo = db.min(axis=(0, 1))
    span = db.max(axis=(0, 1)) - lo
    scaled = np.where(span > 0, (db - lo) / np.where(span > 0, span, 1.0), 0.0)
    return np.floor(scaled * 255.0 + 0.5).astype(np.uint8)


def render_pauli_rgb(pixels, path):
    img = pauli_rgb(pixels)
    write_ppm(path, img)
    return img
