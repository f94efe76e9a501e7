"""``key = value`` text configs: pipeline settings and synthetic scene specs."""
import dataclasses
from dataclasses import dataclass

import numpy as np

from .cnn import CnnConfig
from .errors import ConfigError
from .polsar import (
    SyntheticSceneSpec, block_layout, stripe_layout, voronoi_layout,
)
from .rcm import unflatten


def parse_kv(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Returns ``{key: (value, line_number)}``. Duplicate keys and lines without
    ``=`` raise ``ConfigError`` naming the line.
    """
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{n}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r} (first on line {out[key][1]})")
        out[key] = (value, n)
    return out


def _int_tuple(value):
    return tuple(int(v) for v in str(value).replace(",", " ").split())


def _bool(value):
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


@dataclass
class PipelineConfig:
    seed: int = 0
    sample_fraction: float = 0.1
    rcm_layers: int = 1
    patch_size: int = 13
    iterations: int = 400
    lr: float = 0.005
    batch_size: int = 64
    conv_kernels: tuple = (5, 3, 3, 3, 1)
    conv_channels: tuple = (16, 32, 32, 32, 64)
    pool_after: tuple = (2, 4)
    fc_width: int = 128
    loading: float = 1e-6
    # None keeps the learned percentile threshold
    epsilon: float = None

    def validate(self):
        if self.rcm_layers not in (0, 1, 2):
            raise ConfigError(f"rcm_layers must be 0, 1 or 2, got {self.rcm_layers}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.loading < 0:
            raise ConfigError(f"loading must be >= 0, got {self.loading}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        self.cnn_config()
        return self

    def cnn_config(self):
        return CnnConfig(
            patch_size=self.patch_size, conv_kernels=tuple(self.conv_kernels),
            conv_channels=tuple(self.conv_channels), pool_after=tuple(self.pool_after),
            fc_width=self.fc_width, learning_rate=self.lr, iterations=self.iterations,
            batch_size=self.batch_size, sample_fraction=self.sample_fraction, seed=self.seed)


_CONVERTERS = {
    int: int, float: float, tuple: _int_tuple, bool: _bool,
}


def _field_types():
    defaults = PipelineConfig()
    return {f.name: (float if f.name == "epsilon" else type(getattr(defaults, f.name)))
            for f in dataclasses.fields(PipelineConfig)}


def build_config(text=None, source="<config>", overrides=None):
    """Defaults, then the config text, then ``overrides`` (already typed or strings)."""
    types = _field_types()
    values = {}
    if text:
        for key, (value, line) in parse_kv(text, source).items():
            key = key.replace("-", "_")
            if key not in types:
                raise ConfigError(f"{source}:{line}: unknown key {key!r}")
            try:
                values[key] = _CONVERTERS[types[key]](value)
            except ValueError as exc:
                raise ConfigError(f"{source}:{line}: bad value for {key}: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in types:
            raise ConfigError(f"unknown setting {key!r}")
        try:
            values[key] = _CONVERTERS[types[key]](value) if isinstance(value, str) else value
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc
    return PipelineConfig(**values).validate()


def load_config(path=None, overrides=None):
    text = None
    if path:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return build_config(text, str(path) if path else "<defaults>", overrides)


# --- synthetic scene spec -----------------------------------------------------

def parse_scene_spec(text, source="<spec>"):
    """Build a ``SyntheticSceneSpec`` from a text spec.

    Keys: ``height``, ``width``, ``looks``, ``seed``, ``unlabeled_border``,
    ``layout`` (``voronoi K`` | ``blocks R C`` | ``stripes``) and
    ``center.<c>`` for classes ``1..C`` given as nine reals in the order
    ``t11 t22 t33 t12_real t12_imag t13_real t13_imag t23_real t23_imag``.
    """
    kv = parse_kv(text, source)

    def get(key, conv, default=None):
        if key not in kv:
            if default is None:
                raise ConfigError(f"{source}: missing required key {key!r}")
            return default
        value, line = kv[key]
        try:
            return conv(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{line}: bad value for {key}: {exc}") from exc

    height, width = get("height", int), get("width", int)
    looks, seed = get("looks", int, 4), get("seed", int, 0)
    border = get("unlabeled_border", int, 0)
    if height < 1 or width < 1:
        raise ConfigError(f"{source}: height and width must be positive")
    if looks < 3:
        raise ConfigError(f"{source}:{kv['looks'][1]}: looks must be >= 3")

    centers = {}
    for key, (value, line) in kv.items():
        if not key.startswith("center."):
            continue
        try:
            c = int(key.split(".", 1)[1])
            nums = [float(v) for v in value.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"{source}:{line}: bad centre entry: {exc}") from exc
        if len(nums) != 9:
            raise ConfigError(f"{source}:{line}: class {c} centre needs 9 numbers, got {len(nums)}")
        centers[c] = (unflatten_plain(nums), line)
    ids = sorted(centers)
    if len(ids) < 2 or ids != list(range(1, len(ids) + 1)):
        raise ConfigError(f"{source}: need centres for classes 1..C (C >= 2), got {ids}")
    for c in ids:
        m, line = centers[c]
        if np.linalg.eigvalsh(m).min() <= 0:
            raise ConfigError(f"{source}:{line}: class {c} centre is not positive definite")

    layout_kind = get("layout", str, "voronoi 12").split()
    n = len(ids)
    try:
        if layout_kind[0] == "voronoi":
            sites = int(layout_kind[1]) if len(layout_kind) > 1 else 12
            layout = voronoi_layout(height, width, sites, n, seed)
        elif layout_kind[0] == "blocks":
            layout = block_layout(height, width, int(layout_kind[1]), int(layout_kind[2]), n)
        elif layout_kind[0] == "stripes":
            layout = stripe_layout(height, width, n)
        else:
            raise ValueError(f"unknown layout {layout_kind[0]!r}")
    except (ValueError, IndexError) as exc:
        line = kv["layout"][1] if "layout" in kv else 0
        raise ConfigError(f"{source}:{line}: bad layout: {exc}") from exc
    return SyntheticSceneSpec(np.stack([centers[c][0] for c in ids]), layout, looks, seed, border)


def unflatten_plain(nums):
    """Nine plane values (unscaled off-diagonals) to a Hermitian matrix."""
    f = np.asarray(nums, dtype=np.float64).copy()
    f[3:] *= np.sqrt(2.0)
    return unflatten(f)
