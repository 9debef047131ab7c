#!/usr/bin/env python3
"""
Convolutional Discriminator

Two families share one parameter layout:

1. sngan - ResBlocks (ReLU→conv3×3→ReLU→conv3×3, 1×1 shortcut when channels
   change, avg_pool2d(2) on both paths when down-sampling), then
   ReLU → global sum pool → linear. With use_sn every conv and the head are
   spectrally normalized; use_sn=False is the ablation without SN.
2. dcgan - strided 4×4 convs with LeakyReLU(0.2) and a final conv spanning
   the remaining grid. Never spectrally normalized.

Scores are raw reals (no sigmoid); hinge losses consume them directly.
Conv weights are stored O×C×kh×kw and flattened to O×(C·kh·kw) for spectral
normalization. The head weight is stored (1, C).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from errors import ConfigError, DimensionError
from tensor_engine import (DEFAULT_DTYPE, Tensor, activation, add, avg_pool2d, conv2d, div,
                           linear, mul, reshape, tensor_sum, transpose)

logger = logging.getLogger(__name__)

VARIANTS = ('sngan', 'dcgan')
BENCHMARK_VARIANTS = ('sngan', 'sngan_no_sn', 'dcgan')
SCALES = ('toy', 'full')
DCGAN_SLOPE = 0.2


@dataclass
class DiscriminatorSpec:
    """Architecture hyperparameters of the convolutional discriminator"""
    in_channels: int = 3
    base_width: int = 128
    n_blocks: int = 4
    downsample_flags: Tuple[bool, ...] = (True, True, False, False)
    use_sn: bool = True
    variant: str = 'sngan'
    resolution: int = 32
    n_power_iters: int = 1
    name: str = 'sngan'

    def __post_init__(self):
        self.downsample_flags = tuple(bool(f) for f in self.downsample_flags)

    def final_resolution(self) -> int:
        if self.variant == 'dcgan':
            return self.resolution // 2 ** self.n_blocks
        return self.resolution // 2 ** sum(self.downsample_flags)

    def validate(self) -> None:
        """Raise ConfigError naming the first violated field"""
        if self.variant not in VARIANTS:
            raise ConfigError(f"disc.variant must be one of {VARIANTS}, got '{self.variant}'")
        for key in ('in_channels', 'base_width', 'n_blocks', 'resolution', 'n_power_iters'):
            if getattr(self, key) < 1:
                raise ConfigError(f"disc.{key} must be >= 1, got {getattr(self, key)}")
        if self.variant == 'dcgan':
            if self.use_sn:
                raise ConfigError("disc.use_sn is not supported for the dcgan variant")
            factor = 2 ** self.n_blocks
        else:
            if len(self.downsample_flags) != self.n_blocks:
                raise ConfigError(f"disc.downsample_flags has {len(self.downsample_flags)} entries "
                                  f"but disc.n_blocks is {self.n_blocks}")
            factor = 2 ** sum(self.downsample_flags)
        if self.resolution % factor or self.resolution // factor < 1:
            raise ConfigError(f"disc.resolution {self.resolution} does not survive {factor}x down-sampling")


@dataclass
class SpectralNormState:
    """Persisted power-iteration vector of one normalized weight"""
    u: np.ndarray
    n_power_iters: int = 1
    degenerate: bool = False


@dataclass
class DiscriminatorParams:
    spec: DiscriminatorSpec
    tensors: Dict[str, Tensor] = field(default_factory=dict)
    sn_states: Dict[str, SpectralNormState] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def parameters(self) -> List[Tensor]:
        return list(self.tensors.values())


def discriminator_preset(variant: str, resolution: int = 32, scale: str = 'full') -> DiscriminatorSpec:
    """
    Named discriminator configurations

    Args:
        variant: 'sngan', 'sngan_no_sn' or 'dcgan'
        resolution: input image extent
        scale: 'full' (parameter counts near 9.4M / 0.6M) or 'toy'

    Returns:
        DiscriminatorSpec
    """
    if scale not in SCALES:
        raise ConfigError(f"disc.scale must be one of {SCALES}, got '{scale}'")
    full = scale == 'full'
    if variant in ('sngan', 'sngan_no_sn'):
        return DiscriminatorSpec(base_width=384 if full else 32, n_blocks=4,
                                 downsample_flags=(True, True, False, False),
                                 use_sn=variant == 'sngan', variant='sngan',
                                 resolution=resolution, name=variant)
    if variant == 'dcgan':
        return DiscriminatorSpec(base_width=64 if full else 4, n_blocks=3,
                                 downsample_flags=(True, True, True), use_sn=False,
                                 variant='dcgan', resolution=resolution, name=variant)
    raise ConfigError(f"discriminator: unknown variant '{variant}', expected one of {BENCHMARK_VARIANTS}")


def discriminator_shapes(spec: DiscriminatorSpec) -> Dict[str, Tuple[int, ...]]:
    """Ordered name → shape map of every discriminator parameter"""
    spec.validate()
    shapes = {}
    c_in = spec.in_channels
    if spec.variant == 'dcgan':
        for i in range(spec.n_blocks):
            c_out = spec.base_width * 2 ** i
            shapes[f"conv{i}.weight"] = (c_out, c_in, 4, 4)
            shapes[f"conv{i}.bias"] = (c_out,)
            c_in = c_out
        k = spec.final_resolution()
        shapes['out.weight'] = (1, c_in, k, k)
        shapes['out.bias'] = (1,)
        return shapes

    width = spec.base_width
    for i in range(spec.n_blocks):
        shapes[f"block{i}.conv1.weight"] = (width, c_in, 3, 3)
        shapes[f"block{i}.conv1.bias"] = (width,)
        shapes[f"block{i}.conv2.weight"] = (width, width, 3, 3)
        shapes[f"block{i}.conv2.bias"] = (width,)
        if c_in != width:
            shapes[f"block{i}.shortcut.weight"] = (width, c_in, 1, 1)
            shapes[f"block{i}.shortcut.bias"] = (width,)
        c_in = width
    shapes['head.weight'] = (1, width)
    shapes['head.bias'] = (1,)
    return shapes


def discriminator_param_count(spec: DiscriminatorSpec) -> int:
    return int(sum(np.prod(shape) for shape in discriminator_shapes(spec).values()))


def _l2_normalize(x: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(x)
    return x / norm if norm > 0 else x


def power_iterate(w2d: np.ndarray, u: np.ndarray, n_iters: int) -> Tuple[np.ndarray, np.ndarray]:
    """n_iters rounds of v = Wᵀu/‖Wᵀu‖, u = Wv/‖Wv‖ (u kept when Wv = 0)"""
    if n_iters < 1:
        raise ConfigError(f"power iteration needs n_iters >= 1, got {n_iters}")
    for _ in range(n_iters):
        v = _l2_normalize(w2d.T @ u)
        wv = w2d @ v
        if np.linalg.norm(wv) > 0:
            u = _l2_normalize(wv)
    return u, v


def spectral_normalize(weight: Tensor, state: SpectralNormState,
                       update: bool = True) -> Tuple[Tensor, SpectralNormState]:
    """
    Divide a weight by its power-iteration estimate of the top singular value

    σ̂ = uᵀ W v is recorded in the graph, so gradients flow through the
    estimate; u and v themselves are constants.

    Args:
        weight: weight tensor, leading axis = output rows
        state: persisted u vector; advanced in place when update is set
        update: run state.n_power_iters iterations first (training mode)

    Returns:
        (W / σ̂, state); W unchanged with state.degenerate set when σ̂ = 0
    """
    m = weight.shape[0]
    w2d = weight.data.reshape(m, -1)
    if state.u.shape != (m,):
        raise DimensionError(f"spectral norm vector has shape {state.u.shape}, weight has {m} rows")
    if update:
        u, v = power_iterate(w2d, state.u, state.n_power_iters)
        state.u = u.astype(state.u.dtype)
    else:
        v = _l2_normalize(w2d.T @ state.u)
    u = state.u

    sigma_value = float(u @ w2d @ v)
    if sigma_value == 0.0:
        if not state.degenerate:
            logger.warning(f"Spectral norm estimate is zero for weight {weight.name or weight.shape}; "
                           f"leaving it unnormalized")
        state.degenerate = True
        return weight, state
    state.degenerate = False

    outer = Tensor(np.outer(u, v).astype(weight.dtype))
    sigma = tensor_sum(mul(reshape(weight, (m, -1)), outer))
    return div(weight, sigma), state


def refresh_spectral_norms(params: DiscriminatorParams, n_iters: int) -> None:
    """Run n_iters power iterations per normalized weight on the current (frozen) weights"""
    for name, state in params.sn_states.items():
        weight = params[name].data
        u, _ = power_iterate(weight.reshape(weight.shape[0], -1), state.u, n_iters)
        state.u = u.astype(state.u.dtype)


def _weight(params: DiscriminatorParams, name: str, training: bool) -> Tensor:
    weight = params[name]
    if params.spec.use_sn and name in params.sn_states:
        weight, _ = spectral_normalize(weight, params.sn_states[name], update=training)
    return weight


def effective_weights(params: DiscriminatorParams) -> Dict[str, np.ndarray]:
    """Weights as the forward pass sees them in evaluation mode"""
    return {name: _weight(params, name, training=False).data.copy()
            for name in params.tensors if name.endswith('.weight')}


def init_discriminator(spec: DiscriminatorSpec, seed: int, dtype=DEFAULT_DTYPE) -> DiscriminatorParams:
    """
    Initialize discriminator parameters and spectral-norm vectors from a seed

    Weights are Xavier-uniform, biases zero, u vectors random unit vectors.
    """
    shapes = discriminator_shapes(spec)
    rng = np.random.default_rng(seed)
    tensors = {}
    sn_states = {}
    for name, shape in shapes.items():
        if name.endswith('.bias'):
            data = np.zeros(shape)
        else:
            receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
            fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            data = rng.uniform(-limit, limit, size=shape)
        tensors[name] = Tensor(data.astype(dtype), requires_grad=True, name=f"disc/{name}")
    if spec.use_sn:
        for name, shape in shapes.items():
            if name.endswith('.weight'):
                u = _l2_normalize(rng.standard_normal(shape[0]))
                sn_states[name] = SpectralNormState(u=u.astype(dtype), n_power_iters=spec.n_power_iters)
    logger.debug(f"Initialized {spec.name} discriminator: {discriminator_param_count(spec):,} parameters, "
                 f"spectral norm {'on' if spec.use_sn else 'off'}, seed {seed}")
    return DiscriminatorParams(spec=spec, tensors=tensors, sn_states=sn_states)


def _conv(params: DiscriminatorParams, prefix: str, x: Tensor, stride: int, padding: int,
          training: bool) -> Tensor:
    weight = _weight(params, f"{prefix}.weight", training)
    bias = params[f"{prefix}.bias"]
    out = conv2d(x, weight, stride=stride, padding=padding)
    return add(out, reshape(bias, (1, bias.shape[0], 1, 1)))


def resblock(x: Tensor, params: DiscriminatorParams, prefix: str, downsample: bool,
             training: bool = False) -> Tensor:
    """
    Residual block: ReLU→conv3×3→ReLU→conv3×3 plus shortcut, optional 2×2 average pooling

    Args:
        x: N×C×H×W activations
        params: discriminator parameters
        prefix: block name, e.g. 'block0'
        downsample: halve the grid on both paths
        training: advance spectral-norm power iteration

    Returns:
        N×C'×H'×W' activations
    """
    if x.ndim != 4:
        raise DimensionError(f"resblock expects N×C×H×W, got {x.shape}")
    if downsample and (x.shape[2] % 2 or x.shape[3] % 2):
        raise DimensionError(f"resblock cannot down-sample odd extents {x.shape[2]}x{x.shape[3]}")

    h = _conv(params, f"{prefix}.conv1", activation(x, 'relu'), 1, 1, training)
    h = _conv(params, f"{prefix}.conv2", activation(h, 'relu'), 1, 1, training)
    shortcut = x
    if f"{prefix}.shortcut.weight" in params.tensors:
        shortcut = _conv(params, f"{prefix}.shortcut", x, 1, 0, training)
    if downsample:
        h = avg_pool2d(h, 2)
        shortcut = avg_pool2d(shortcut, 2)
    return add(h, shortcut)


def discriminate(params: DiscriminatorParams, images, training: bool = False) -> Tensor:
    """
    Score a batch of images

    Args:
        params: discriminator parameters
        images: N×C×R×R tensor or array
        training: advance spectral-norm state once for every normalized weight

    Returns:
        Tensor of shape (N,) with raw real-valued scores
    """
    spec = params.spec
    if not isinstance(images, Tensor):
        images = Tensor(np.asarray(images, dtype=next(iter(params.tensors.values())).dtype))
    expected = (spec.in_channels, spec.resolution, spec.resolution)
    if images.ndim != 4 or images.shape[1:] != expected:
        raise DimensionError(f"discriminator expects N×{expected[0]}×{expected[1]}×{expected[2]} images, "
                             f"got {images.shape}")
    n = images.shape[0]

    if spec.variant == 'dcgan':
        h = images
        for i in range(spec.n_blocks):
            h = activation(_conv(params, f"conv{i}", h, 2, 1, training), 'leaky_relu', DCGAN_SLOPE)
        return reshape(_conv(params, 'out', h, 1, 0, training), (n,))

    h = images
    for i, downsample in enumerate(spec.downsample_flags):
        h = resblock(h, params, f"block{i}", downsample, training)
    pooled = tensor_sum(activation(h, 'relu'), axis=(2, 3))
    head = _weight(params, 'head.weight', training)
    return reshape(linear(pooled, transpose(head, (1, 0)), params['head.bias']), (n,))
