#!/usr/bin/env python3
"""
Transformer Generator

Maps latent vectors to RGB images through a stack of transformer encoder
stages:

    latent → linear → base_grid×base_grid token grid (+ positional embedding)
           → encoder blocks
           → [pixelshuffle up-sampling (grid ×2, width ÷4) + positional embedding
              → encoder blocks] per further stage
           → linear token → RGB, tanh

Linear weights are stored as (in_features, out_features). Parameter names are
stable and double as checkpoint manifest keys (``stage0.block1.attn.wq`` …).
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Tuple

import numpy as np

from errors import ConfigError, DimensionError
from tensor_engine import (DEFAULT_DTYPE, Tensor, activation, add, layer_norm, linear,
                           matmul, mul, pixel_shuffle, pixel_unshuffle, reshape, softmax,
                           transpose)

logger = logging.getLogger(__name__)

INIT_STD = 0.02


@dataclass
class GeneratorSpec:
    """Architecture hyperparameters of the transformer generator"""
    latent_dim: int = 256
    base_grid: int = 8
    embed_dim: int = 384
    depths: Tuple[int, ...] = (5, 4, 2)
    heads: int = 4
    mlp_ratio: float = 4.0
    out_channels: int = 3
    stages: int = 3

    def __post_init__(self):
        self.depths = tuple(int(d) for d in self.depths)

    @property
    def resolution(self) -> int:
        return self.base_grid * 2 ** (self.stages - 1)

    def stage_widths(self) -> List[int]:
        return [self.embed_dim // 4 ** s for s in range(self.stages)]

    def stage_grids(self) -> List[int]:
        return [self.base_grid * 2 ** s for s in range(self.stages)]

    def mlp_hidden(self, width: int) -> int:
        return int(round(self.mlp_ratio * width))

    def validate(self) -> None:
        """Raise ConfigError naming the first violated field"""
        for key in ('latent_dim', 'base_grid', 'embed_dim', 'heads', 'out_channels', 'stages'):
            if getattr(self, key) < 1:
                raise ConfigError(f"gen.{key} must be >= 1, got {getattr(self, key)}")
        if self.mlp_ratio <= 0:
            raise ConfigError(f"gen.mlp_ratio must be positive, got {self.mlp_ratio}")
        if len(self.depths) != self.stages:
            raise ConfigError(f"gen.depths has {len(self.depths)} entries but gen.stages is {self.stages}")
        if any(d < 0 for d in self.depths):
            raise ConfigError(f"gen.depths must be non-negative, got {list(self.depths)}")
        factor = 4 ** (self.stages - 1)
        if self.embed_dim % factor:
            raise ConfigError(f"gen.embed_dim {self.embed_dim} not divisible by 4^(stages-1) = {factor}")
        for stage, width in enumerate(self.stage_widths()):
            if width % self.heads:
                raise ConfigError(f"gen.heads {self.heads} does not divide stage {stage} width {width}")
            if self.mlp_hidden(width) < 1:
                raise ConfigError(f"gen.mlp_ratio {self.mlp_ratio} gives an empty MLP at width {width}")


# Size presets. S-XL are tuned to the parameter counts 18.6M / 33.1M / 74.3M / 133.6M.
GENERATOR_PRESETS: Dict[str, GeneratorSpec] = {
    'tiny': GeneratorSpec(latent_dim=16, base_grid=4, embed_dim=16, depths=(1, 1), heads=2, stages=2),
    'S': GeneratorSpec(latent_dim=256, base_grid=8, embed_dim=384, depths=(7, 4, 2), heads=4, stages=3),
    'M': GeneratorSpec(latent_dim=256, base_grid=8, embed_dim=512, depths=(8, 4, 2), heads=4, stages=3),
    'L': GeneratorSpec(latent_dim=256, base_grid=8, embed_dim=768, depths=(8, 4, 2), heads=4, stages=3),
    'XL': GeneratorSpec(latent_dim=256, base_grid=8, embed_dim=1024, depths=(9, 4, 2), heads=4, stages=3),
}


def generator_preset(name: str) -> GeneratorSpec:
    if name not in GENERATOR_PRESETS:
        raise ConfigError(f"generator: unknown preset '{name}', expected one of {sorted(GENERATOR_PRESETS)}")
    preset = GENERATOR_PRESETS[name]
    return replace(preset)


@dataclass
class GeneratorParams:
    """All learnable tensors of one generator, keyed by stable names"""
    spec: GeneratorSpec
    tensors: Dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def parameters(self) -> List[Tensor]:
        return list(self.tensors.values())


def block_shapes(prefix: str, width: int, hidden: int) -> Dict[str, Tuple[int, ...]]:
    return {
        f"{prefix}.ln1.gamma": (width,),
        f"{prefix}.ln1.beta": (width,),
        f"{prefix}.attn.wq": (width, width),
        f"{prefix}.attn.wk": (width, width),
        f"{prefix}.attn.wv": (width, width),
        f"{prefix}.attn.wo": (width, width),
        f"{prefix}.attn.bo": (width,),
        f"{prefix}.ln2.gamma": (width,),
        f"{prefix}.ln2.beta": (width,),
        f"{prefix}.mlp.fc1.weight": (width, hidden),
        f"{prefix}.mlp.fc1.bias": (hidden,),
        f"{prefix}.mlp.fc2.weight": (hidden, width),
        f"{prefix}.mlp.fc2.bias": (width,),
    }


def generator_shapes(spec: GeneratorSpec) -> Dict[str, Tuple[int, ...]]:
    """Ordered name → shape map of every generator parameter"""
    spec.validate()
    tokens0 = spec.base_grid ** 2
    shapes = {
        'input.weight': (spec.latent_dim, tokens0 * spec.embed_dim),
        'input.bias': (tokens0 * spec.embed_dim,),
    }
    for stage, (width, grid) in enumerate(zip(spec.stage_widths(), spec.stage_grids())):
        shapes[f"stage{stage}.pos"] = (grid * grid, width)
        for b in range(spec.depths[stage]):
            shapes.update(block_shapes(f"stage{stage}.block{b}", width, spec.mlp_hidden(width)))
    last = spec.stage_widths()[-1]
    shapes['output.weight'] = (last, spec.out_channels)
    shapes['output.bias'] = (spec.out_channels,)
    return shapes


def linear_param_count(in_features: int, out_features: int, bias: bool = True) -> int:
    return in_features * out_features + (out_features if bias else 0)


def param_count(spec: GeneratorSpec) -> int:
    """Exact number of scalar parameters for a generator spec, counted layer by layer"""
    spec.validate()
    total = linear_param_count(spec.latent_dim, spec.base_grid ** 2 * spec.embed_dim)
    for stage, (width, grid) in enumerate(zip(spec.stage_widths(), spec.stage_grids())):
        hidden = spec.mlp_hidden(width)
        block = (4 * width  # two layer norms
                 + 3 * linear_param_count(width, width, bias=False)  # q, k, v
                 + linear_param_count(width, width)
                 + linear_param_count(width, hidden)
                 + linear_param_count(hidden, width))
        total += grid * grid * width + spec.depths[stage] * block
    return total + linear_param_count(spec.stage_widths()[-1], spec.out_channels)


def _truncated_normal(rng: np.random.Generator, shape: Tuple[int, ...], std: float) -> np.ndarray:
    """Normal(0, std) resampled until every value lies within two std"""
    values = rng.normal(0.0, std, size=shape)
    outside = np.abs(values) > 2 * std
    while np.any(outside):
        values[outside] = rng.normal(0.0, std, size=int(outside.sum()))
        outside = np.abs(values) > 2 * std
    return values


def init_generator(spec: GeneratorSpec, seed: int, dtype=DEFAULT_DTYPE) -> GeneratorParams:
    """
    Initialize generator parameters deterministically from a seed

    Weights are truncated normal (std 0.02), biases and positional
    embeddings zero, layer-norm gains one.

    Args:
        spec: generator architecture
        seed: integer seed
        dtype: storage width (float32 for training, float64 for gradient checks)

    Returns:
        GeneratorParams with requires_grad set on every tensor
    """
    shapes = generator_shapes(spec)
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in shapes.items():
        if name.endswith('.gamma'):
            data = np.ones(shape)
        elif name.endswith(('.beta', '.bias', '.bo', '.pos')):
            data = np.zeros(shape)
        else:
            data = _truncated_normal(rng, shape, INIT_STD)
        tensors[name] = Tensor(data.astype(dtype), requires_grad=True, name=f"gen/{name}")
    logger.debug(f"Initialized generator: {len(tensors)} tensors, {param_count(spec):,} parameters, seed {seed}")
    return GeneratorParams(spec=spec, tensors=tensors)


def multi_head_attention(tokens: Tensor, params: GeneratorParams, prefix: str, heads: int) -> Tensor:
    """Scaled dot-product self-attention over N×T×d tokens, heads concatenated then projected"""
    n, t, d = tokens.shape
    if d % heads:
        raise ConfigError(f"gen.heads {heads} does not divide token width {d}")
    dh = d // heads

    def split(x: Tensor) -> Tensor:
        return transpose(reshape(x, (n, t, heads, dh)), (0, 2, 1, 3))

    q = split(matmul(tokens, params[f"{prefix}.wq"]))
    k = split(matmul(tokens, params[f"{prefix}.wk"]))
    v = split(matmul(tokens, params[f"{prefix}.wv"]))
    scores = mul(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    weights = softmax(scores, axis=-1)
    mixed = reshape(transpose(matmul(weights, v), (0, 2, 1, 3)), (n, t, d))
    return linear(mixed, params[f"{prefix}.wo"], params[f"{prefix}.bo"])


def encoder_block(tokens: Tensor, params: GeneratorParams, prefix: str, heads: int) -> Tensor:
    """Pre-norm block: x + MHSA(LN(x)), then + MLP(LN(·)) with GELU"""
    if tokens.ndim != 3:
        raise DimensionError(f"encoder_block expects N×T×d tokens, got {tokens.shape}")
    normed = layer_norm(tokens, params[f"{prefix}.ln1.gamma"], params[f"{prefix}.ln1.beta"])
    x = add(tokens, multi_head_attention(normed, params, f"{prefix}.attn", heads))
    normed = layer_norm(x, params[f"{prefix}.ln2.gamma"], params[f"{prefix}.ln2.beta"])
    hidden = activation(linear(normed, params[f"{prefix}.mlp.fc1.weight"], params[f"{prefix}.mlp.fc1.bias"]), 'gelu')
    return add(x, linear(hidden, params[f"{prefix}.mlp.fc2.weight"], params[f"{prefix}.mlp.fc2.bias"]))


def upsample_stage(tokens: Tensor, grid: Tuple[int, int]) -> Tensor:
    """
    N×(H·W)×d tokens → N×(4·H·W)×(d/4) tokens via pixel_shuffle(r=2)

    Args:
        tokens: row-major token grid
        grid: (H, W) of the incoming grid

    Returns:
        Tokens of the doubled grid
    """
    n, t, d = tokens.shape
    h, w = grid
    if t != h * w:
        raise ConfigError(f"token count {t} does not match grid {h}x{w}")
    if d % 4:
        raise ConfigError(f"token width {d} not divisible by 4 for up-sampling")
    image = reshape(transpose(tokens, (0, 2, 1)), (n, d, h, w))
    image = pixel_shuffle(image, 2)
    return transpose(reshape(image, (n, d // 4, 4 * t)), (0, 2, 1))


def downsample_stage(tokens: Tensor, grid: Tuple[int, int]) -> Tensor:
    """Inverse of upsample_stage: grid (H, W) halves, width ×4"""
    n, t, d = tokens.shape
    h, w = grid
    if t != h * w:
        raise ConfigError(f"token count {t} does not match grid {h}x{w}")
    if h % 2 or w % 2:
        raise ConfigError(f"grid {h}x{w} not divisible by 2 for down-sampling")
    image = reshape(transpose(tokens, (0, 2, 1)), (n, d, h, w))
    image = pixel_unshuffle(image, 2)
    return transpose(reshape(image, (n, 4 * d, t // 4)), (0, 2, 1))


def generate(params: GeneratorParams, latents) -> Tensor:
    """
    Map N×latent_dim latents to N×C×R×R images in [-1, 1]

    Args:
        params: generator parameters
        latents: Tensor or array of shape (N, latent_dim)

    Returns:
        Image tensor; recorded into the active graph when one is recording
    """
    spec = params.spec
    if not isinstance(latents, Tensor):
        latents = Tensor(np.asarray(latents, dtype=params['input.weight'].dtype))
    if latents.ndim != 2 or latents.shape[1] != spec.latent_dim:
        raise DimensionError(f"latents must be N×{spec.latent_dim}, got {latents.shape}")
    n = latents.shape[0]

    grid = spec.base_grid
    tokens = linear(latents, params['input.weight'], params['input.bias'])
    tokens = reshape(tokens, (n, grid * grid, spec.embed_dim))
    for stage in range(spec.stages):
        if stage:
            tokens = upsample_stage(tokens, (grid, grid))
            grid *= 2
        tokens = add(tokens, params[f"stage{stage}.pos"])
        for b in range(spec.depths[stage]):
            tokens = encoder_block(tokens, params, f"stage{stage}.block{b}", spec.heads)

    rgb = activation(linear(tokens, params['output.weight'], params['output.bias']), 'tanh')
    return reshape(transpose(rgb, (0, 2, 1)), (n, spec.out_channels, grid, grid))


def sample_latents(rng: np.random.Generator, n: int, spec: GeneratorSpec, dtype=DEFAULT_DTYPE) -> np.ndarray:
    return rng.standard_normal((n, spec.latent_dim)).astype(dtype)
