"""Binary model serialization.

Layout (all integers little-endian):

    bytes 0..3    magic b"SNNC"
    bytes 4..5    format version, uint16
    bytes 6..9    header length H, uint32
    10 .. 10+H    header: UTF-8 JSON, keys sorted
    next 4        CRC32 of the header bytes
    payload       one weight block per weighted layer, in layer order
                  (raw 32-bit little-endian floats), then one block per
                  codebook: z centroids as 32-bit floats followed by the
                  assignment indices bit-packed little-endian at
                  ceil(log2(z)) bits each

The header records the architecture table, per-layer thresholds, leak,
timestep count, weight shapes, and codebook sizes, so the payload can be
validated block by block. load(save(m)) is bit-identical; save(load(b))
reproduces b.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
import tempfile
import zlib

import numpy as np

from .. import layers as L
from ..errors import FormatError
from ..network import Network, NetworkConfig
from ..quantize import Codebook

MAGIC = b"SNNC"
VERSION = 1

# Fields serialized per layer kind; everything else is defaulted.
_LAYER_FIELDS = {
    L.CONV: ("k_h", "k_w", "c_in", "c_out", "stride", "padding", "spiking"),
    L.LINEAR: ("n_in", "n_out", "spiking"),
    L.AVGPOOL: ("pool",),
    L.DROPOUT: ("rate",),
}


@dataclasses.dataclass(frozen=True)
class ModelArtifact:
    """A network plus the simulation/compression state worth persisting.

    `timesteps` is 0 for analog (pre-conversion) checkpoints. Codebooks,
    when present, must reproduce the stored weights exactly.
    """

    network: Network
    timesteps: int = 0
    codebooks: tuple[Codebook, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "codebooks", tuple(self.codebooks))
        if self.timesteps < 0:
            raise ValueError("timesteps must be non-negative")
        widx = self.network.config.weighted_indices()
        seen = set()
        for book in self.codebooks:
            if book.layer_index not in widx:
                raise ValueError(f"codebook for non-weighted layer {book.layer_index}")
            if book.layer_index in seen:
                raise ValueError(f"duplicate codebook for layer {book.layer_index}")
            seen.add(book.layer_index)
            w = self.network.weight_of(book.layer_index)
            if book.assignments.size != w.size:
                raise ValueError(
                    f"codebook for layer {book.layer_index} has "
                    f"{book.assignments.size} assignments for {w.size} weights")
            if not np.array_equal(book.values(), w.ravel()):
                raise ValueError(
                    f"codebook for layer {book.layer_index} disagrees with weights")


def index_bits(z: int) -> int:
    """Bits per packed assignment index for a z-entry codebook."""
    if z < 1:
        raise ValueError("codebook must have at least one centroid")
    return (z - 1).bit_length()


def packed_size(n: int, bits: int) -> int:
    return (n * bits + 7) // 8


def pack_indices(indices: np.ndarray, bits: int) -> bytes:
    """Pack integer indices into a little-endian bitstream, `bits` bits
    each; index i occupies bit positions [i*bits, (i+1)*bits)."""
    idx = np.ascontiguousarray(indices, dtype=np.uint64).ravel()
    if bits == 0:
        if idx.size and idx.max() > 0:
            raise ValueError("nonzero index in a single-entry codebook")
        return b""
    if not 1 <= bits <= 32:
        raise ValueError(f"index width {bits} out of range")
    if idx.size and int(idx.max()) >> bits:
        raise ValueError(f"index {int(idx.max())} does not fit in {bits} bits")
    shifts = np.arange(bits, dtype=np.uint64)
    bitmat = ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    return np.packbits(bitmat.ravel(), bitorder="little").tobytes()


def unpack_indices(data: bytes, n: int, bits: int) -> np.ndarray:
    if bits == 0:
        return np.zeros(n, dtype=np.int64)
    if len(data) < packed_size(n, bits):
        raise ValueError(f"need {packed_size(n, bits)} bytes for {n} indices "
                         f"at {bits} bits, got {len(data)}")
    raw = np.frombuffer(data, dtype=np.uint8)
    bits_flat = np.unpackbits(raw, bitorder="little")[: n * bits]
    bitmat = bits_flat.reshape(n, bits).astype(np.int64)
    return bitmat @ (np.int64(1) << np.arange(bits, dtype=np.int64))


def _layer_to_dict(spec: L.LayerSpec) -> dict:
    d = {"kind": spec.kind}
    for f in _LAYER_FIELDS[spec.kind]:
        d[f] = getattr(spec, f)
    return d


def layer_table(config: NetworkConfig) -> list[dict]:
    """Architecture as a list of plain dicts (the header's layer table)."""
    return [_layer_to_dict(s) for s in config.layers]


def _layer_from_dict(d: dict) -> L.LayerSpec:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _LAYER_FIELDS:
        raise FormatError(f"header names unknown layer kind {kind!r}")
    unknown = set(d) - set(_LAYER_FIELDS[kind])
    if unknown:
        raise FormatError(f"header has unknown {kind} fields {sorted(unknown)}")
    try:
        return L.LayerSpec(kind=kind, **d)
    except (TypeError, ValueError) as e:
        raise FormatError(f"invalid {kind} layer in header: {e}") from e


def _header_dict(artifact: ModelArtifact) -> dict:
    cfg = artifact.network.config
    weights = []
    for i, w in zip(cfg.weighted_indices(), artifact.network.weights):
        if w.dtype != np.float32:
            raise ValueError(f"layer {i} weights are {w.dtype}; the format "
                             "stores 32-bit floats")
        weights.append({"layer": i, "shape": list(w.shape)})
    books = []
    for book in sorted(artifact.codebooks, key=lambda b: b.layer_index):
        if book.centroids.dtype != np.float32:
            raise ValueError(f"layer {book.layer_index} centroids are "
                             f"{book.centroids.dtype}; the format stores "
                             "32-bit floats")
        books.append({"layer": book.layer_index, "z": book.n_clusters,
                      "index_bits": index_bits(book.n_clusters)})
    return {
        "input_shape": list(cfg.input_shape),
        "n_classes": cfg.n_classes,
        "leak": cfg.leak_lambda,
        "thresholds": list(cfg.thresholds) if cfg.thresholds is not None else None,
        "timesteps": artifact.timesteps,
        "layers": [_layer_to_dict(s) for s in cfg.layers],
        "weights": weights,
        "codebooks": books,
    }


def save_model(artifact: ModelArtifact) -> bytes:
    """Serialize to bytes. Round trip through load_model is bit-exact."""
    header = json.dumps(_header_dict(artifact), sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", VERSION, len(header)), header,
             struct.pack("<I", zlib.crc32(header))]
    for w in artifact.network.weights:
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
    for book in sorted(artifact.codebooks, key=lambda b: b.layer_index):
        parts.append(np.ascontiguousarray(book.centroids, dtype="<f4").tobytes())
        parts.append(pack_indices(book.assignments,
                                  index_bits(book.n_clusters)))
    return b"".join(parts)


class _Cursor:
    """Byte reader that reports the offset and a block name on underrun."""

    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.data):
            raise FormatError(
                f"truncated model: {what} needs {n} bytes at byte {self.off}, "
                f"{len(self.data) - self.off} available")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out


def load_model(data: bytes) -> ModelArtifact:
    cur = _Cursor(data)
    magic = cur.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte 0")
    version, header_len = struct.unpack("<HI", cur.take(6, "version/length"))
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    header_bytes = cur.take(header_len, "header")
    (stored_crc,) = struct.unpack("<I", cur.take(4, "header checksum"))
    actual_crc = zlib.crc32(header_bytes)
    if stored_crc != actual_crc:
        raise FormatError(f"header checksum mismatch: stored 0x{stored_crc:08x}, "
                          f"computed 0x{actual_crc:08x}")
    try:
        head = json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"header is not valid JSON: {e}") from e

    required = {"input_shape", "n_classes", "leak", "thresholds", "timesteps",
                "layers", "weights", "codebooks"}
    missing = required - set(head)
    if missing:
        raise FormatError(f"header missing fields {sorted(missing)}")
    specs = tuple(_layer_from_dict(d) for d in head["layers"])
    try:
        cfg = NetworkConfig(
            input_shape=tuple(head["input_shape"]),
            n_classes=int(head["n_classes"]),
            layers=specs,
            leak_lambda=float(head["leak"]),
            thresholds=head["thresholds"])
    except (TypeError, ValueError) as e:
        raise FormatError(f"invalid architecture in header: {e}") from e

    widx = cfg.weighted_indices()
    if [w["layer"] for w in head["weights"]] != widx:
        raise FormatError(
            f"header weight table lists layers "
            f"{[w['layer'] for w in head['weights']]}, architecture has {widx}")
    ws = []
    for entry, i in zip(head["weights"], widx):
        shape = tuple(int(s) for s in entry["shape"])
        if shape != cfg.layers[i].weight_shape():
            raise FormatError(f"weights for layer {i}: header shape {shape} != "
                              f"architecture shape {cfg.layers[i].weight_shape()}")
        n = int(np.prod(shape)) if shape else 1
        raw = cur.take(4 * n, f"weights for layer {i}")
        ws.append(np.frombuffer(raw, dtype="<f4").reshape(shape).copy())
    try:
        net = Network(cfg, ws)
    except ValueError as e:
        raise FormatError(f"inconsistent weights: {e}") from e

    books = []
    for entry in head["codebooks"]:
        i = int(entry["layer"])
        z = int(entry["z"])
        bits = int(entry["index_bits"])
        if z < 1:
            raise FormatError(f"codebook for layer {i} has z={z}")
        if bits != index_bits(z):
            raise FormatError(f"codebook for layer {i}: {bits} index bits "
                              f"inconsistent with z={z}")
        if i not in widx:
            raise FormatError(f"codebook for non-weighted layer {i}")
        n = net.weight_of(i).size
        cents = np.frombuffer(
            cur.take(4 * z, f"centroids for layer {i}"), dtype="<f4").copy()
        packed = cur.take(packed_size(n, bits), f"indices for layer {i}")
        try:
            books.append(Codebook(i, cents, unpack_indices(packed, n, bits)))
        except ValueError as e:
            raise FormatError(f"codebook for layer {i} is invalid: {e}") from e

    if cur.off != len(data):
        raise FormatError(f"{len(data) - cur.off} trailing bytes at byte {cur.off}")
    try:
        return ModelArtifact(net, int(head["timesteps"]), tuple(books))
    except ValueError as e:
        raise FormatError(f"inconsistent model: {e}") from e


def save_model_file(artifact: ModelArtifact, path: str) -> str:
    """Atomic write: serialize to a sibling temp file, then rename."""
    data = save_model(artifact)
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-model-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_model_file(path: str) -> ModelArtifact:
    with open(path, "rb") as f:
        return load_model(f.read())
