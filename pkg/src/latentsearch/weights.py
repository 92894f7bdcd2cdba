"""The "LICW" weight archive: a neutral binary format carrying every learned
parameter from the trainer to the engine.

Layout (little-endian):

    magic "LICW" (4B) | version u8 | meta_len u32 | meta JSON (utf-8) | blob

The metadata block maps tensor name -> {"dtype": "f32", "shape": [...],
"offset": byte offset into blob}. The blob is concatenated little-endian
32-bit floats. CDF tables are stored as f32 as well; their entries are
integers <= 2^16 and therefore exact.

The model id embedded in bitstreams is derived from the blob contents
(crc32 & 0xFF), so streams and weight sets can be cross-checked without a
registry.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .adapter import AdapterWeights
from .codec import CodecWeights
from .entropy import (
    FactorizedPrior,
    GaussianConditional,
    default_scale_grid,
    discretized_gaussian_pmf,
)
from .errors import MagicMismatch, TruncatedStream, VersionMismatch
from .numerics import ConvParams, LinearParams
from .rangecoder import TOTAL, CdfTable, quantize_pmf

MAGIC = b"LICW"
VERSION = 1

_HEAD = struct.Struct("<4sBI")

# Every name the engine requires. ga/gs have 4 stages, ha/hs have 2,
# the fusion MLP has 3 layers; each entry carries a weight and a bias.
REQUIRED_NAMES: tuple[str, ...] = tuple(
    f"{group}.{i}.{kind}"
    for group, n in (("ga", 4), ("gs", 4), ("ha", 2), ("hs", 2))
    for i in range(n)
    for kind in ("w", "b")
) + tuple(
    f"adapter.{part}.{kind}"
    for part in ("branch_b", "branch_c1", "branch_c2", "fusion.0", "fusion.1", "fusion.2")
    for kind in ("w", "b")
) + (
    "prior.factorized.cdf",
    "prior.factorized.offset",
    "prior.gaussian.scales",
)


class WeightArchive:
    """An ordered name -> float32 ndarray mapping with a binary round trip."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.tensors = {k: np.ascontiguousarray(v, dtype=np.float32) for k, v in tensors.items()}

    @property
    def names(self) -> list[str]:
        return list(self.tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def to_bytes(self) -> bytes:
        # canonical (sorted) tensor order so equal contents give equal bytes
        meta: dict[str, dict] = {}
        blob = bytearray()
        for name in sorted(self.tensors):
            t = self.tensors[name]
            meta[name] = {"dtype": "f32", "shape": list(t.shape), "offset": len(blob)}
            blob += t.tobytes()
        meta_json = json.dumps(meta, sort_keys=True).encode("utf-8")
        return _HEAD.pack(MAGIC, VERSION, len(meta_json)) + meta_json + bytes(blob)

    @classmethod
    def from_bytes(cls, data: bytes) -> "WeightArchive":
        if len(data) < _HEAD.size:
            raise TruncatedStream(f"archive is {len(data)} bytes, header needs {_HEAD.size}")
        magic, version, meta_len = _HEAD.unpack_from(data, 0)
        if magic != MAGIC:
            raise MagicMismatch(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise VersionMismatch(f"unsupported archive version {version}")
        meta_end = _HEAD.size + meta_len
        if meta_end > len(data):
            raise TruncatedStream("metadata block exceeds archive size")
        meta = json.loads(data[_HEAD.size:meta_end].decode("utf-8"))
        blob = data[meta_end:]
        tensors: dict[str, np.ndarray] = {}
        for name, info in meta.items():
            if info.get("dtype") != "f32":
                raise ValueError(f"tensor {name!r} has unsupported dtype {info.get('dtype')!r}")
            shape = tuple(int(s) for s in info["shape"])
            count = int(np.prod(shape)) if shape else 1
            start = int(info["offset"])
            end = start + 4 * count
            if start < 0 or end > len(blob):
                raise TruncatedStream(f"tensor {name!r} offsets outside blob bounds")
            tensors[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=start).reshape(
                shape
            )
        return cls(tensors)

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "WeightArchive":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    def model_id(self) -> int:
        blob = b"".join(self.tensors[n].tobytes() for n in sorted(self.tensors))
        return zlib.crc32(blob) & 0xFF

    def missing_names(self) -> list[str]:
        return [n for n in REQUIRED_NAMES if n not in self.tensors]


def _conv(a: WeightArchive, prefix: str, stride: int) -> ConvParams:
    return ConvParams(
        weights=a[f"{prefix}.w"], bias=a[f"{prefix}.b"], stride=stride, padding=1
    )


def _linear(a: WeightArchive, prefix: str) -> LinearParams:
    return LinearParams(weights=a[f"{prefix}.w"], bias=a[f"{prefix}.b"])


@dataclass(frozen=True)
class EngineModel:
    """Everything the engine needs to encode, decode, and embed."""

    codec: CodecWeights
    adapter: AdapterWeights
    gaussian: GaussianConditional
    prior: FactorizedPrior
    model_id: int
    archive_names: tuple[str, ...]

    @property
    def embed_dim(self) -> int:
        return self.adapter.embed_dim


def load_model(archive: WeightArchive) -> EngineModel:
    """Build the engine model from an archive, validating completeness."""
    missing = archive.missing_names()
    if missing:
        raise ValueError(f"archive is missing required tensors: {', '.join(missing)}")

    codec = CodecWeights(
        ga=tuple(_conv(archive, f"ga.{i}", 2) for i in range(4)),
        gs=tuple(_conv(archive, f"gs.{i}", 1) for i in range(4)),
        ha=tuple(_conv(archive, f"ha.{i}", 2) for i in range(2)),
        hs=tuple(_conv(archive, f"hs.{i}", 1) for i in range(2)),
    )
    adapter = AdapterWeights(
        branch_b=_conv(archive, "adapter.branch_b", 2),
        branch_c1=_conv(archive, "adapter.branch_c1", 2),
        branch_c2=_conv(archive, "adapter.branch_c2", 2),
        fusion=tuple(_linear(archive, f"adapter.fusion.{i}") for i in range(3)),
    )
    if adapter.m_ch != codec.m_ch:
        raise ValueError(
            f"adapter consumes {adapter.m_ch} latent channels, codec produces {codec.m_ch}"
        )

    cdf = archive["prior.factorized.cdf"]
    offsets = archive["prior.factorized.offset"]
    if cdf.ndim != 2 or offsets.ndim != 1 or cdf.shape[0] != offsets.shape[0]:
        raise ValueError(
            f"factorized prior tables {cdf.shape} and offsets {offsets.shape} disagree"
        )
    if cdf.shape[0] != codec.hz_ch:
        raise ValueError(
            f"factorized prior has {cdf.shape[0]} channels, codec produces {codec.hz_ch}"
        )
    tables = [
        CdfTable(np.round(cdf[c]).astype(np.int64), offset=int(round(float(offsets[c]))))
        for c in range(cdf.shape[0])
    ]
    prior = FactorizedPrior(tables)
    gaussian = GaussianConditional(archive["prior.gaussian.scales"])

    return EngineModel(
        codec=codec,
        adapter=adapter,
        gaussian=gaussian,
        prior=prior,
        model_id=archive.model_id(),
        archive_names=tuple(archive.names),
    )


def init_random_archive(
    seed: int,
    n_ch: int = 64,
    m_ch: int = 96,
    hz_ch: int = 64,
    embed_dim: int = 512,
    fusion_hidden: int = 512,
    z_range: tuple[int, int] = (-127, 128),
) -> WeightArchive:
    """A seeded, randomly initialized but structurally valid archive.

    Weight scales are chosen so latents of [0,1] images stay well inside
    the entropy models' symbol ranges; the factorized prior gets random
    per-channel discretized Gaussians.
    """
    rng = np.random.default_rng(seed)

    def conv_t(out_c, in_c, gain=1.0):
        std = gain / np.sqrt(in_c * 9)
        w = rng.normal(0.0, std, size=(out_c, in_c, 3, 3)).astype(np.float32)
        b = np.zeros(out_c, dtype=np.float32)
        return w, b

    tensors: dict[str, np.ndarray] = {}

    ga_dims = [(n_ch, 3), (n_ch, n_ch), (n_ch, n_ch), (m_ch, n_ch)]
    gs_dims = [(n_ch, m_ch), (n_ch, n_ch), (n_ch, n_ch), (3, n_ch)]
    ha_dims = [(n_ch, m_ch), (hz_ch, n_ch)]
    hs_dims = [(n_ch, hz_ch), (2 * m_ch, n_ch)]
    for group, dims in (("ga", ga_dims), ("gs", gs_dims), ("ha", ha_dims), ("hs", hs_dims)):
        for i, (oc, ic) in enumerate(dims):
            gain = 2.2 if (group in ("ga", "ha") and i == len(dims) - 1) else 1.4
            w, b = conv_t(oc, ic, gain)
            tensors[f"{group}.{i}.w"] = w
            tensors[f"{group}.{i}.b"] = b

    for part, (oc, ic) in (
        ("branch_b", (m_ch, m_ch)),
        ("branch_c1", (m_ch, m_ch)),
        ("branch_c2", (m_ch, m_ch)),
    ):
        w, b = conv_t(oc, ic, 1.4)
        tensors[f"adapter.{part}.w"] = w
        tensors[f"adapter.{part}.b"] = b

    fusion_dims = [(fusion_hidden, 3 * m_ch), (fusion_hidden, fusion_hidden),
                   (embed_dim, fusion_hidden)]
    for i, (oc, ic) in enumerate(fusion_dims):
        std = 1.4 / np.sqrt(ic)
        tensors[f"adapter.fusion.{i}.w"] = rng.normal(0, std, size=(oc, ic)).astype(np.float32)
        tensors[f"adapter.fusion.{i}.b"] = np.zeros(oc, dtype=np.float32)

    lo, hi = z_range
    n_sym = hi - lo + 1
    cdf = np.zeros((hz_ch, n_sym + 1), dtype=np.float32)
    for c in range(hz_ch):
        mean = rng.normal(0.0, 1.0)
        sigma = rng.uniform(0.8, 2.5)
        freq = quantize_pmf(discretized_gaussian_pmf(mean, sigma, lo, hi))
        cdf[c, 1:] = np.cumsum(freq.astype(np.float64)).astype(np.float32)
    assert float(cdf[:, -1].min()) == float(TOTAL)
    tensors["prior.factorized.cdf"] = cdf
    tensors["prior.factorized.offset"] = np.full(hz_ch, float(lo), dtype=np.float32)
    tensors["prior.gaussian.scales"] = default_scale_grid()

    return WeightArchive(tensors)
