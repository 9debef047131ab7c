#!/usr/bin/env python3
"""
Data I/O

Dataset ingestion, image output and checkpoint persistence:

1. CIFAR-10 binary batches (3073-byte records: label byte + 32×32 R, G, B planes)
2. Synthetic desk-scale sets: two_mode, checkerboard, gaussian_blobs
3. Binary PPM (P6) image grids, optional PNG export through matplotlib
4. HGAN checkpoint container:

       b"HGAN" | u32 version | u32 manifest length | JSON manifest | payload

   The payload is every tensor as little-endian float32, back to back, in
   manifest order. The manifest carries names, shapes, byte offsets, the
   training step, the config echo, the random-source state and a CRC-32 of
   the payload.

All images are N×C×H×W float arrays in [-1, 1].
"""

import json
import logging
import os
import queue
import re
import struct
import threading
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, Optional, Union

import numpy as np

from errors import ConfigError, ContractError, CorruptionError, DimensionError, FormatError

logger = logging.getLogger(__name__)

CIFAR_RECORD_BYTES = 3073
CIFAR_SIDE = 32
CIFAR_CLASSES = 10
SYNTHETIC_KINDS = ('two_mode', 'checkerboard', 'gaussian_blobs')
SYNTHETIC_RESOLUTIONS = (8, 16, 32)
CHECKPOINT_MAGIC = b"HGAN"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct('<4sII')

PathLike = Union[str, Path]


@dataclass
class ImageBatch:
    """N×C×H×W images in [-1, 1] with optional integer labels"""
    images: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DimensionError(f"ImageBatch expects N×C×H×W images, got shape {self.images.shape}")
        if self.images.size and (self.images.min() < -1.0 or self.images.max() > 1.0):
            raise ContractError(f"image values outside [-1, 1]: [{self.images.min()}, {self.images.max()}]")
        if self.labels is not None and len(self.labels) != len(self.images):
            raise DimensionError(f"{len(self.labels)} labels for {len(self.images)} images")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def resolution(self) -> int:
        return self.images.shape[-1]


@dataclass
class Checkpoint:
    """Decoded checkpoint container"""
    tensors: Dict[str, np.ndarray]
    step: int
    config: Dict[str, Any] = field(default_factory=dict)
    rng_state: Optional[Dict[str, Any]] = None
    version: int = CHECKPOINT_VERSION


# CIFAR-10

def bytes_to_unit(raw: np.ndarray) -> np.ndarray:
    """Map bytes 0..255 onto [-1, 1] as b/127.5 - 1"""
    return (raw.astype(np.float64) / 127.5 - 1.0).astype(np.float32)


def unit_to_bytes(values: np.ndarray) -> np.ndarray:
    """Map [-1, 1] onto bytes with clamping and round-half-up"""
    scaled = np.floor((np.asarray(values, dtype=np.float64) + 1.0) * 127.5 + 0.5)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def _cifar_files(path: Path):
    if path.is_dir():
        files = sorted(path.glob('*.bin'))
        if not files:
            raise FormatError(f"{path}: no CIFAR-10 .bin files found")
        return files
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    return [path]


def load_cifar10(path: PathLike) -> ImageBatch:
    """
    Load CIFAR-10 binary batches

    Args:
        path: a single .bin file or a directory of them (read in sorted order)

    Returns:
        ImageBatch of N×3×32×32 float32 images with labels
    """
    images, labels = [], []
    for file in _cifar_files(Path(path)):
        raw = np.fromfile(file, dtype=np.uint8)
        remainder = raw.size % CIFAR_RECORD_BYTES
        if remainder:
            offset = raw.size - remainder
            raise FormatError(f"{file}: truncated record at byte offset {offset} "
                              f"({remainder} of {CIFAR_RECORD_BYTES} bytes)")
        records = raw.reshape(-1, CIFAR_RECORD_BYTES)
        bad = np.flatnonzero(records[:, 0] >= CIFAR_CLASSES)
        if bad.size:
            index = int(bad[0])
            raise FormatError(f"{file}: label byte {records[index, 0]} > 9 at byte offset "
                              f"{index * CIFAR_RECORD_BYTES}")
        labels.append(records[:, 0].astype(np.int64))
        images.append(bytes_to_unit(records[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE)))
        logger.debug(f"Read {len(records)} CIFAR-10 records from {file}")
    batch = ImageBatch(np.concatenate(images), np.concatenate(labels))
    logger.info(f"Loaded {len(batch)} CIFAR-10 images from {path}")
    return batch


# Synthetic sets

def make_synthetic(kind: str, n: int, resolution: int, seed: int) -> ImageBatch:
    """
    Deterministic desk-scale image sets

    Args:
        kind: 'two_mode' (mean pixel ±0.5, balanced, small noise),
              'checkerboard' (period 2 or 4, random phase and sign),
              'gaussian_blobs' (one or two coloured blobs on a dark field)
        n: number of images
        resolution: 8, 16 or 32
        seed: integer seed

    Returns:
        ImageBatch with values clipped to [-1, 1]
    """
    if kind not in SYNTHETIC_KINDS:
        raise ConfigError(f"synthetic kind must be one of {SYNTHETIC_KINDS}, got '{kind}'")
    if resolution not in SYNTHETIC_RESOLUTIONS:
        raise ConfigError(f"synthetic resolution must be one of {SYNTHETIC_RESOLUTIONS}, got {resolution}")
    if n < 1:
        raise ConfigError(f"synthetic n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    shape = (n, 3, resolution, resolution)
    labels = None

    if kind == 'two_mode':
        signs = rng.permutation(np.r_[np.ones(n // 2), -np.ones(n - n // 2)])
        images = 0.5 * signs[:, None, None, None] + rng.normal(0.0, 0.05, size=shape)
        labels = (signs > 0).astype(np.int64)
    elif kind == 'checkerboard':
        rows, cols = np.indices((resolution, resolution))
        images = np.empty(shape)
        for i in range(n):
            half = int(rng.choice([1, 2]))
            phase_r, phase_c = rng.integers(0, 2 * half, size=2)
            sign = rng.choice([-1.0, 1.0])
            board = (((rows + phase_r) // half + (cols + phase_c) // half) % 2) * 2.0 - 1.0
            images[i] = 0.8 * sign * board
        images += rng.normal(0.0, 0.02, size=shape)
    else:
        rows, cols = np.indices((resolution, resolution)).astype(np.float64)
        images = np.full(shape, -1.0)
        for i in range(n):
            for _ in range(int(rng.integers(1, 3))):
                center = rng.uniform(0, resolution, size=2)
                sigma = rng.uniform(resolution / 8, resolution / 4)
                color = rng.uniform(0.0, 2.0, size=3)
                blob = np.exp(-((rows - center[0]) ** 2 + (cols - center[1]) ** 2) / (2 * sigma ** 2))
                images[i] += color[:, None, None] * blob

    return ImageBatch(np.clip(images, -1.0, 1.0).astype(np.float32), labels)


# Image files

def _grid_bytes(images: np.ndarray, cols: int) -> np.ndarray:
    n, c, h, w = images.shape
    if c == 1:
        images = np.repeat(images, 3, axis=1)
    elif c != 3:
        raise DimensionError(f"image grid needs 1 or 3 channels, got {c}")
    cols = max(1, min(cols, n))
    rows = -(-n // cols)
    grid = np.zeros((rows * h, cols * w, 3), dtype=np.uint8)
    tiles = unit_to_bytes(images).transpose(0, 2, 3, 1)
    for i, tile in enumerate(tiles):
        r, col = divmod(i, cols)
        grid[r * h:(r + 1) * h, col * w:(col + 1) * w] = tile
    return grid


def save_image_grid(batch: Union[ImageBatch, np.ndarray], path: PathLike, cols: int = 8) -> Path:
    """
    Write images as one tiled grid, row-major, empty cells black

    Args:
        batch: ImageBatch or N×C×H×W array
        path: .ppm for binary P6 (bit-exact), .png for a matplotlib export
        cols: grid columns

    Returns:
        The written path
    """
    images = batch.images if isinstance(batch, ImageBatch) else np.asarray(batch)
    if images.ndim != 4 or len(images) == 0:
        raise DimensionError(f"save_image_grid needs a non-empty N×C×H×W batch, got {images.shape}")
    path = Path(path)
    grid = _grid_bytes(images, cols)
    try:
        if path.suffix.lower() == '.png':
            import matplotlib
            matplotlib.use('Agg')
            import matplotlib.pyplot as plt
            plt.imsave(path, grid)
        else:
            header = f"P6\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode('ascii')
            with open(path, 'wb') as f:
                f.write(header)
                f.write(grid.tobytes())
    except OSError as e:
        raise OSError(f"cannot write image grid to {path}: {e.strerror or e}") from e
    logger.debug(f"Saved {len(images)} images to {path}")
    return path


def save_image_tiles(batch: Union[ImageBatch, np.ndarray], directory: PathLike, prefix: str = 'sample') -> int:
    """One P6 file per image, named <prefix>_00000.ppm …"""
    images = batch.images if isinstance(batch, ImageBatch) else np.asarray(batch)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, image in enumerate(images):
        save_image_grid(image[None], directory / f"{prefix}_{i:05d}.ppm", cols=1)
    return len(images)


_PPM_TOKEN = re.compile(rb'(?:\s|#[^\n]*\n)*(\S+)')


def read_ppm(path: PathLike) -> np.ndarray:
    """Read a binary P6 file with maxval 255 into an H×W×3 uint8 array"""
    data = Path(path).read_bytes()
    fields, pos = [], 0
    for _ in range(4):
        match = _PPM_TOKEN.match(data, pos)
        if not match:
            raise FormatError(f"{path}: truncated PPM header")
        fields.append(match.group(1))
        pos = match.end()
    if fields[0] != b'P6':
        raise FormatError(f"{path}: not a binary PPM (magic {fields[0]!r})")
    try:
        width, height, maxval = (int(v) for v in fields[1:])
    except ValueError as e:
        raise FormatError(f"{path}: malformed PPM header field: {e}") from e
    if maxval != 255:
        raise FormatError(f"{path}: PPM maxval {maxval} unsupported (expected 255)")
    pos += 1
    expected = width * height * 3
    payload = data[pos:pos + expected]
    if len(payload) != expected:
        raise FormatError(f"{path}: PPM payload has {len(payload)} bytes at offset {pos}, expected {expected}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)


def ppm_to_images(path: PathLike) -> np.ndarray:
    """A PPM file as a 1×3×H×W float32 batch"""
    return bytes_to_unit(read_ppm(path).transpose(2, 0, 1)[None])


def load_image_set(path: PathLike) -> ImageBatch:
    """
    Load an image set from a CIFAR .bin file, an .npy array, a .ppm file,
    or a directory of any of those (sorted by name)
    """
    path = Path(path)
    if path.is_dir():
        if any(path.glob('*.bin')):
            return load_cifar10(path)
        ppms = sorted(path.glob('*.ppm'))
        if ppms:
            images = [ppm_to_images(p) for p in ppms]
            shapes = {im.shape for im in images}
            if len(shapes) > 1:
                raise DimensionError(f"{path}: mixed image shapes {sorted(shapes)}")
            return ImageBatch(np.concatenate(images))
        arrays = sorted(path.glob('*.npy'))
        if arrays:
            return ImageBatch(np.concatenate([np.load(p).astype(np.float32) for p in arrays]))
        raise FormatError(f"{path}: no .bin, .ppm or .npy files found")
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    suffix = path.suffix.lower()
    if suffix == '.bin':
        return load_cifar10(path)
    if suffix == '.ppm':
        return ImageBatch(ppm_to_images(path))
    if suffix == '.npy':
        return ImageBatch(np.load(path).astype(np.float32))
    raise FormatError(f"{path}: unsupported image set format '{suffix}'")


# Checkpoints

def save_checkpoint(path: PathLike, tensors: Dict[str, np.ndarray], step: int,
                    config: Optional[Dict[str, Any]] = None,
                    rng_state: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write tensors plus run metadata to an HGAN container

    Args:
        path: destination file (written atomically)
        tensors: ordered name → array map; stored as little-endian float32
        step: training step
        config: JSON-serializable config echo
        rng_state: JSON-serializable random-source state

    Returns:
        The written path
    """
    path = Path(path)
    entries, chunks, offset = [], [], 0
    for name, array in tensors.items():
        raw = np.ascontiguousarray(array, dtype='<f4').tobytes()
        entries.append({'name': name, 'shape': list(np.shape(array)), 'offset': offset, 'nbytes': len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b''.join(chunks)
    manifest = {
        'config': config or {},
        'payload_bytes': len(payload),
        'payload_crc32': zlib.crc32(payload),
        'rng_state': rng_state,
        'step': int(step),
        'tensors': entries,
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(',', ':')).encode('utf-8')

    tmp = path.with_name(path.name + '.tmp')
    with open(tmp, 'wb') as f:
        f.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(manifest_bytes)))
        f.write(manifest_bytes)
        f.write(payload)
    os.replace(tmp, path)
    logger.debug(f"Wrote checkpoint {path}: {len(entries)} tensors, {len(payload):,} payload bytes, step {step}")
    return path


def load_checkpoint(path: PathLike) -> Checkpoint:
    """Read an HGAN container, verifying magic, version, offsets and checksum"""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: file too short for a checkpoint header ({len(data)} bytes)")
    magic, version, manifest_len = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    start = _HEADER.size + manifest_len
    if start > len(data):
        raise CorruptionError(f"{path}: manifest length {manifest_len} exceeds file size")
    try:
        manifest = json.loads(data[_HEADER.size:start].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptionError(f"{path}: unreadable manifest: {e}") from e

    payload = data[start:]
    if len(payload) != manifest.get('payload_bytes'):
        raise CorruptionError(f"{path}: payload has {len(payload)} bytes, manifest says {manifest.get('payload_bytes')}")
    if zlib.crc32(payload) != manifest.get('payload_crc32'):
        raise CorruptionError(f"{path}: payload checksum mismatch")

    tensors, expected_offset = {}, 0
    for entry in manifest.get('tensors', []):
        name, shape = entry['name'], tuple(entry['shape'])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if entry['offset'] != expected_offset or entry['nbytes'] != nbytes:
            raise CorruptionError(f"{path}: tensor '{name}' offset/size disagree with manifest layout")
        if name in tensors:
            raise CorruptionError(f"{path}: duplicate tensor '{name}' in manifest")
        chunk = payload[expected_offset:expected_offset + nbytes]
        tensors[name] = np.frombuffer(chunk, dtype='<f4').astype(np.float32).reshape(shape)
        expected_offset += nbytes
    if expected_offset != len(payload):
        raise CorruptionError(f"{path}: {len(payload) - expected_offset} payload bytes not covered by the manifest")

    return Checkpoint(tensors=tensors, step=int(manifest['step']), config=manifest.get('config', {}),
                      rng_state=manifest.get('rng_state'), version=version)


# Batching

class BatchSampler:
    """Stateless batch selection: the batch for a step depends only on (seed, step)"""

    def __init__(self, images: np.ndarray, batch_size: int, seed: int):
        if len(images) == 0:
            raise ContractError("cannot sample batches from an empty image set")
        self.images = images
        self.batch_size = batch_size
        self.seed = seed

    def batch(self, step: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, step])
        replace = len(self.images) < self.batch_size
        index = rng.choice(len(self.images), size=self.batch_size, replace=replace)
        return self.images[np.sort(index)]


def prefetch(sampler: BatchSampler, steps: Iterable[int], depth: int = 2) -> Iterator[np.ndarray]:
    """
    Yield sampler batches for the given steps, produced ahead on a worker thread

    The bounded queue holds at most depth batches; depth 0 disables the thread.
    Batch contents do not depend on depth.
    """
    steps = list(steps)
    if depth <= 0:
        for step in steps:
            yield sampler.batch(step)
        return

    buffer: "queue.Queue" = queue.Queue(maxsize=depth)
    stop = threading.Event()
    done = object()

    def offer(item) -> bool:
        """Put item unless the consumer has gone away"""
        while not stop.is_set():
            try:
                buffer.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def produce():
        try:
            for step in steps:
                if not offer(sampler.batch(step)):
                    return
            offer(done)
        except Exception as e:
            offer(e)

    worker = threading.Thread(target=produce, name='batch-prefetch', daemon=True)
    worker.start()
    try:
        while True:
            item = buffer.get()
            if item is done:
                return
            if isinstance(item, Exception):
                raise item
            yield item
    finally:
        stop.set()
