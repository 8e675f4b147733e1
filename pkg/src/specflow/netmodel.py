"""Network/layer/spectral configuration and synthetic sparse-kernel generation.

A model is an ordered list of stride-1, same-padded convolutional layers plus
one spectral configuration (FFT window, tile size, compression ratio). Sparse
spectral kernels are generated synthetically, either with uniformly random
index patterns or with clustered patterns that mimic pruned kernels whose
nonzero indices concentrate on a shared hotspot set.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

BUILTIN_MODELS = ("vgg16-k8",)

# Standard VGG16 convolutional body for 224x224 inputs. The layer names are
# conventional; the dimensions are the published architecture.
_VGG16_LAYERS = (
    # name, in_ch, out_ch, h_in, pool_after
    ("conv1_1", 3, 64, 224, False),
    ("conv1_2", 64, 64, 224, True),
    ("conv2_1", 64, 128, 112, False),
    ("conv2_2", 128, 128, 112, True),
    ("conv3_1", 128, 256, 56, False),
    ("conv3_2", 256, 256, 56, False),
    ("conv3_3", 256, 256, 56, True),
    ("conv4_1", 256, 512, 28, False),
    ("conv4_2", 512, 512, 28, False),
    ("conv4_3", 512, 512, 28, True),
    ("conv5_1", 512, 512, 14, False),
    ("conv5_2", 512, 512, 14, False),
    ("conv5_3", 512, 512, 14, True),
)


class ConfigError(ValueError):
    """Raised when a model config violates an invariant.

    Carries the offending layer name and field when known.
    """

    def __init__(self, message, layer=None, field_name=None):
        self.layer = layer
        self.field_name = field_name
        prefix = ""
        if layer is not None:
            prefix += f"layer {layer!r}: "
        if field_name is not None:
            prefix += f"field {field_name!r}: "
        super().__init__(prefix + message)


@dataclass(frozen=True)
class LayerConfig:
    """One convolutional layer: channel counts and spatial geometry.

    Layers are stride-1 and same-padded, so the output spatial size equals
    the input spatial size. ``pool_after`` marks a 2x2 pooling boundary that
    halves the next layer's spatial size; ``skip_opt`` excludes the layer
    from dataflow-optimization objectives (it still gets a latency share).
    """

    name: str
    in_channels: int
    out_channels: int
    h_in: int
    w_in: int
    k: int
    pool_after: bool = False
    skip_opt: bool = False

    def __post_init__(self):
        for fname in ("in_channels", "out_channels", "h_in", "w_in", "k"):
            v = getattr(self, fname)
            if not isinstance(v, int) or v < 1:
                raise ConfigError("must be an integer >= 1", self.name, fname)
        if self.k % 2 == 0:
            raise ConfigError("spatial kernel side must be odd", self.name, "k")

    @property
    def h_out(self):
        return self.h_in

    @property
    def w_out(self):
        return self.w_in

    # Short aliases used throughout the cost models.
    @property
    def m(self):
        return self.in_channels

    @property
    def n(self):
        return self.out_channels


@dataclass(frozen=True)
class SpectralConfig:
    """FFT window size, spatial tile size, compression ratio and word width.

    The tile side and window side are tied by ``fft_size = tile + k - 1``
    for the spatial kernel side ``k`` the model uses; ``alpha`` is the
    compression ratio, so each spectral kernel keeps exactly
    ``fft_size**2 / alpha`` nonzero entries. ``word_bits`` is the width of
    one real scalar in off-chip transfer accounting (complex scalars count
    as two words).
    """

    fft_size: int
    h_tile: int
    w_tile: int
    alpha: int
    word_bits: int = 16

    def __post_init__(self):
        k2 = self.fft_size * self.fft_size
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ConfigError("fft_size must be a power of two >= 2", field_name="fft_size")
        if not 1 < self.h_tile <= self.fft_size:
            raise ConfigError("tile side must satisfy 1 < tile <= fft_size", field_name="h_tile")
        if self.w_tile != self.h_tile:
            raise ConfigError("square tiles only (w_tile == h_tile)", field_name="w_tile")
        if self.alpha < 1 or k2 % self.alpha:
            raise ConfigError("fft_size**2 must be divisible by alpha", field_name="alpha")
        if self.word_bits < 1:
            raise ConfigError("word_bits must be >= 1", field_name="word_bits")

    @classmethod
    def for_kernel(cls, fft_size, k, alpha, word_bits=16):
        """Build a config whose tile size matches spatial kernel side ``k``."""
        tile = fft_size - k + 1
        if tile < 1:
            raise ConfigError(f"fft_size {fft_size} too small for k={k}", field_name="fft_size")
        return cls(fft_size, tile, tile, alpha, word_bits)

    @property
    def kernel_side(self):
        """Spatial kernel side implied by the window/tile relation."""
        return self.fft_size - self.h_tile + 1

    @property
    def nnz(self):
        """Nonzero entries kept per spectral kernel."""
        return self.fft_size * self.fft_size // self.alpha


@dataclass(frozen=True)
class SparseKernel:
    """One sparse spectral kernel: sorted flat indices into the K*K window
    plus the complex value kept at each index."""

    out_ch: int
    in_ch: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.complex128)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-D and equal length")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise ValueError("indices must be strictly increasing and nonnegative")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @property
    def nnz(self):
        return int(self.indices.size)

    @property
    def entries(self):
        """The (index, value) pairs in storage order."""
        return list(zip(self.indices.tolist(), self.values.tolist()))

    def dense(self, fft_size):
        """Scatter into a dense K*K complex array."""
        out = np.zeros(fft_size * fft_size, dtype=np.complex128)
        out[self.indices] = self.values
        return out.reshape(fft_size, fft_size)


@dataclass(frozen=True)
class SparseKernelSet:
    """A group of sparse spectral kernels indexed by (out_ch, in_ch)."""

    kernels: tuple
    n_kernels: int
    n_channels: int
    fft_size: int
    alpha: int
    pattern: str = "uniform-random"
    seed: int | None = None

    def __post_init__(self):
        if len(self.kernels) != self.n_kernels * self.n_channels:
            raise ValueError("kernel count must equal n_kernels * n_channels")

    def kernel(self, out_ch, in_ch):
        return self.kernels[out_ch * self.n_channels + in_ch]

    def channel(self, in_ch):
        """All kernels reading input channel ``in_ch``, ordered by out_ch."""
        return [self.kernel(n, in_ch) for n in range(self.n_kernels)]

    @property
    def nnz(self):
        return self.fft_size * self.fft_size // self.alpha


@dataclass(frozen=True)
class ModelConfig:
    """An ordered stack of conv layers plus the spectral configuration."""

    name: str
    layers: tuple
    spectral: SpectralConfig

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("model has no layers")
        for lyr in self.layers:
            if lyr.k != self.spectral.kernel_side:
                raise ConfigError(
                    f"k={lyr.k} inconsistent with spectral tile "
                    f"(expects k={self.spectral.kernel_side})",
                    lyr.name,
                    "k",
                )
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.out_channels != cur.in_channels:
                raise ConfigError(
                    f"in_channels {cur.in_channels} != previous out_channels "
                    f"{prev.out_channels}",
                    cur.name,
                    "in_channels",
                )
            expect = prev.h_in // 2 if prev.pool_after else prev.h_in
            if cur.h_in != expect:
                raise ConfigError(
                    f"h_in {cur.h_in} != expected {expect} "
                    f"(previous layer {'pools' if prev.pool_after else 'does not pool'})",
                    cur.name,
                    "h_in",
                )

    def layer(self, name):
        for lyr in self.layers:
            if lyr.name == name:
                return lyr
        raise KeyError(name)

    def optimized_layers(self):
        """Layers that participate in dataflow optimization."""
        return [lyr for lyr in self.layers if not lyr.skip_opt]


def vgg16_k8():
    """The builtin VGG16 model with an 8x8 FFT window and 4x compression.

    Layer dimensions follow the standard published VGG16 architecture for
    224x224 inputs. The first layer is kept in the model but flagged
    skip-in-optimization because its compute share is negligible.
    """
    layers = tuple(
        LayerConfig(name, m, n, h, h, 3, pool_after=pool, skip_opt=(name == "conv1_1"))
        for name, m, n, h, pool in _VGG16_LAYERS
    )
    return ModelConfig("vgg16-k8", layers, SpectralConfig.for_kernel(8, 3, 4))


def tile_grid(layer, spectral):
    """Tile counts for one layer: (tiles_h, tiles_w, total).

    Partial tiles at the image border are zero-padded to full tile size, so
    the grid is the ceiling of the spatial size over the tile side.
    """
    th = -(-layer.h_in // spectral.h_tile)
    tw = -(-layer.w_in // spectral.w_tile)
    return th, tw, th * tw


def _parse_bool(raw, layer, fname):
    s = raw.strip().lower()
    if s in ("true", "yes", "1"):
        return True
    if s in ("false", "no", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}", layer, fname)


def _parse_int(raw, layer, fname):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}", layer, fname) from None


_LAYER_KEYS = {"in_channels", "out_channels", "h_in", "w_in", "k", "pool_after", "skip_opt"}
_MODEL_KEYS = {"name", "fft_size", "alpha", "word_bits", "k"}


def loads_model(text):
    """Parse a model from config text (INI grammar, see the repo README).

    One ``[model]`` section holds the global spectral block; each
    ``[layer <name>]`` section declares one conv layer, in network order.
    """
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    if "model" not in parser:
        raise ConfigError("missing [model] section")
    g = parser["model"]
    for key in g:
        if key not in _MODEL_KEYS:
            raise ConfigError(f"unknown key {key!r}", field_name=key)
    name = g.get("name", "unnamed")
    fft_size = _parse_int(g.get("fft_size", ""), None, "fft_size")
    alpha = _parse_int(g.get("alpha", ""), None, "alpha")
    word_bits = _parse_int(g.get("word_bits", "16"), None, "word_bits")

    layers = []
    model_k = None
    for section in parser.sections():
        if section == "model":
            continue
        if not section.startswith("layer "):
            raise ConfigError(f"unknown section {section!r}")
        lname = section[len("layer "):].strip()
        sec = parser[section]
        for key in sec:
            if key not in _LAYER_KEYS:
                raise ConfigError(f"unknown key {key!r}", lname, key)
        missing = {"in_channels", "out_channels", "h_in", "w_in", "k"} - set(sec)
        if missing:
            raise ConfigError(f"missing keys {sorted(missing)}", lname)
        k = _parse_int(sec["k"], lname, "k")
        model_k = k if model_k is None else model_k
        layers.append(
            LayerConfig(
                lname,
                _parse_int(sec["in_channels"], lname, "in_channels"),
                _parse_int(sec["out_channels"], lname, "out_channels"),
                _parse_int(sec["h_in"], lname, "h_in"),
                _parse_int(sec["w_in"], lname, "w_in"),
                k,
                pool_after=_parse_bool(sec.get("pool_after", "false"), lname, "pool_after"),
                skip_opt=_parse_bool(sec.get("skip_opt", "false"), lname, "skip_opt"),
            )
        )
    if not layers:
        raise ConfigError("config declares no layers")
    spectral = SpectralConfig.for_kernel(fft_size, model_k, alpha, word_bits)
    return ModelConfig(name, tuple(layers), spectral)


def load_model(path_or_builtin):
    """Load a model from a config file path or a builtin name."""
    if path_or_builtin == "vgg16-k8":
        return vgg16_k8()
    with open(path_or_builtin, "r", encoding="utf-8") as fh:
        return loads_model(fh.read())


def gen_sparse_kernels(seed, pattern, n_kernels, n_channels, spectral):
    """Generate a deterministic synthetic sparse spectral kernel set.

    ``uniform-random`` draws each kernel's indices uniformly without
    replacement from the K*K window. ``clustered`` mimics pruned kernels
    whose indices concentrate: all kernels of one input channel draw from a
    shared hotspot set of size ``2 * K**2 / alpha`` (padded uniformly in the
    degenerate case where the hotspot set is smaller than the nonzero
    count). Values are standard complex normal. Pure function of its
    arguments.
    """
    if pattern not in ("uniform-random", "clustered"):
        raise ValueError(f"unknown pattern {pattern!r}")
    if n_kernels < 1 or n_channels < 1:
        raise ValueError("n_kernels and n_channels must be >= 1")
    k2 = spectral.fft_size * spectral.fft_size
    nnz = spectral.nnz
    rng = np.random.Generator(np.random.PCG64(seed))
    kernels = []
    for in_ch in range(n_channels):
        hotspot = None
        if pattern == "clustered":
            hot_size = min(2 * nnz, k2)
            hotspot = np.sort(rng.choice(k2, size=hot_size, replace=False))
        for out_ch in range(n_kernels):
            if hotspot is None:
                idx = rng.choice(k2, size=nnz, replace=False)
            elif hotspot.size >= nnz:
                idx = rng.choice(hotspot, size=nnz, replace=False)
            else:
                rest = np.setdiff1d(np.arange(k2), hotspot)
                pad = rng.choice(rest, size=nnz - hotspot.size, replace=False)
                idx = np.concatenate([hotspot, pad])
            idx = np.sort(idx)
            vals = (rng.standard_normal(nnz) + 1j * rng.standard_normal(nnz)) / math.sqrt(2.0)
            kernels.append(SparseKernel(out_ch, in_ch, idx, vals))
    # Reorder to (out_ch major, in_ch minor) as SparseKernelSet expects.
    by_pos = {(kr.out_ch, kr.in_ch): kr for kr in kernels}
    ordered = tuple(
        by_pos[(n, m)] for n in range(n_kernels) for m in range(n_channels)
    )
    return SparseKernelSet(
        ordered, n_kernels, n_channels, spectral.fft_size, spectral.alpha,
        pattern=pattern, seed=seed,
    )
