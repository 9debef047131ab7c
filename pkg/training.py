#!/usr/bin/env python3
"""
Adversarial Training

Hinge-loss GAN training of the transformer generator against the
convolutional discriminator:

1. d_steps_per_g_step discriminator updates per step, each on real images
   plus freshly generated fakes (one spectral-norm power iteration each)
2. one generator update through the discriminator in evaluation mode
3. Adam with bias correction for both networks

A run whose loss turns non-finite is marked collapsed and frozen. Run records
go to a line-delimited JSON log (runlog.jsonl); checkpoints use the HGAN
container from dataio.

The benchmark harness keeps the generator fixed and swaps the discriminator
(sngan, sngan_no_sn, dcgan), reporting parameter counts, FID-proxy and the
collapse flag per variant.
"""

import csv
import json
import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from dataio import BatchSampler, ImageBatch, load_checkpoint, prefetch, save_checkpoint, save_image_grid
from discriminator import (DiscriminatorParams, DiscriminatorSpec, SpectralNormState, discriminate,
                           discriminator_param_count, discriminator_preset, discriminator_shapes,
                           init_discriminator)
from errors import ConfigError, ContractError, CorruptionError, DimensionError, NumericalError
from generator import (GeneratorParams, GeneratorSpec, generate, generator_shapes, init_generator,
                       sample_latents)
from metrics import EXTRACTORS, fid, get_extractor
from tensor_engine import DEFAULT_DTYPE, Graph, Tensor, activation, backward, mean, neg, zero_grad

logger = logging.getLogger(__name__)

EVAL_SEED_SALT = 7919
EVAL_CHUNK = 128


@dataclass
class TrainConfig:
    """Optimizer, schedule and run-management settings"""
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    adam_beta1: float = 0.0
    adam_beta2: float = 0.99
    adam_eps: float = 1e-8
    batch_size: int = 32
    total_steps: int = 2000
    d_steps_per_g_step: int = 1
    seed: int = 0
    use_sn: bool = True
    generator: str = 'tiny'
    discriminator: str = 'sngan'
    checkpoint_every: int = 0
    log_every: int = 50
    eval_every: int = 0
    eval_samples: int = 256
    eval_extractor: str = 'smallcnn'
    record_wall_time: bool = False
    prefetch_depth: int = 2
    benchmark_workers: int = 1
    synthetic_samples: int = 1024

    def validate(self) -> None:
        """Raise ConfigError naming the first invalid key"""
        for key in ('lr_g', 'lr_d', 'adam_eps'):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be > 0, got {getattr(self, key)}")
        for key in ('adam_beta1', 'adam_beta2'):
            if not 0.0 <= getattr(self, key) < 1.0:
                raise ConfigError(f"{key} must be in [0, 1), got {getattr(self, key)}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.d_steps_per_g_step < 1:
            raise ConfigError(f"d_steps_per_g_step must be >= 1, got {self.d_steps_per_g_step}")
        for key in ('total_steps', 'checkpoint_every', 'eval_every', 'prefetch_depth'):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be >= 0, got {getattr(self, key)}")
        for key in ('log_every', 'benchmark_workers', 'synthetic_samples'):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1, got {getattr(self, key)}")
        if self.eval_samples < 2:
            raise ConfigError(f"eval_samples must be >= 2, got {self.eval_samples}")
        if self.eval_extractor not in EXTRACTORS:
            raise ConfigError(f"eval_extractor must be one of {EXTRACTORS}, got '{self.eval_extractor}'")


@dataclass
class AdamMoments:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, tensors: Dict[str, Tensor]) -> 'AdamMoments':
        return cls(m={n: np.zeros_like(t.data) for n, t in tensors.items()},
                   v={n: np.zeros_like(t.data) for n, t in tensors.items()})


@dataclass
class TrainState:
    """Everything one run mutates"""
    generator: GeneratorParams
    discriminator: DiscriminatorParams
    moments_g: AdamMoments
    moments_d: AdamMoments
    step: int
    rng: np.random.Generator
    collapsed: bool = False


@dataclass
class StepSnapshot:
    """Copy of the state a train_step mutates before its generator update succeeds"""
    disc: Dict[str, np.ndarray]
    moments_d: AdamMoments
    sn: Dict[str, Tuple[np.ndarray, bool]]
    rng_state: Dict

    @classmethod
    def take(cls, state: TrainState) -> 'StepSnapshot':
        return cls(disc={n: t.data.copy() for n, t in state.discriminator.tensors.items()},
                   moments_d=AdamMoments(m={n: a.copy() for n, a in state.moments_d.m.items()},
                                         v={n: a.copy() for n, a in state.moments_d.v.items()}),
                   sn={n: (s.u.copy(), s.degenerate) for n, s in state.discriminator.sn_states.items()},
                   rng_state=state.rng.bit_generator.state)

    def restore(self, state: TrainState) -> None:
        for name, data in self.disc.items():
            state.discriminator[name].data = data
        state.moments_d = self.moments_d
        for name, (u, degenerate) in self.sn.items():
            state.discriminator.sn_states[name].u = u
            state.discriminator.sn_states[name].degenerate = degenerate
        state.rng.bit_generator.state = self.rng_state


@dataclass
class RunRecord:
    """One line of runlog.jsonl"""
    step: int
    loss_d: Optional[float]
    loss_g: Optional[float]
    grad_norm_d: Optional[float]
    grad_norm_g: Optional[float]
    wall_ms: Optional[float] = None
    collapsed: bool = False
    metrics: Dict[str, Optional[float]] = field(default_factory=dict)

    def to_json(self) -> str:
        """Fixed field order; non-finite numbers become null"""
        def clean(value):
            if isinstance(value, float) and not math.isfinite(value):
                return None
            if isinstance(value, dict):
                return {k: clean(v) for k, v in value.items()}
            return value
        return json.dumps({k: clean(v) for k, v in asdict(self).items()})


@dataclass
class BenchmarkRow:
    discriminator: str
    params: int
    fid_proxy: Optional[float]
    collapsed: bool


# Losses

def hinge_d_loss(real_scores: Tensor, fake_scores: Tensor) -> Tensor:
    """mean(max(0, 1 − real)) + mean(max(0, 1 + fake))"""
    if real_scores.shape != fake_scores.shape:
        raise DimensionError(f"score shapes differ: {real_scores.shape} vs {fake_scores.shape}")
    return mean(activation(1.0 - real_scores, 'relu')) + mean(activation(fake_scores + 1.0, 'relu'))


def hinge_g_loss(fake_scores: Tensor) -> Tensor:
    return neg(mean(fake_scores))


# Optimizer

def adam_step(params: Dict[str, Tensor], grads: Dict[str, np.ndarray], moments: AdamMoments,
              step: int, config: TrainConfig, lr: float) -> Tuple[Dict[str, Tensor], AdamMoments]:
    """
    One Adam update with bias correction, applied in place

    Args:
        params: name → parameter tensor
        grads: name → gradient array
        moments: first/second moment estimates, updated in place
        step: 1-based update count used for bias correction
        config: supplies adam_beta1, adam_beta2, adam_eps
        lr: learning rate

    Returns:
        (params, moments)
    """
    if step < 1:
        raise ContractError(f"adam_step needs step >= 1 for bias correction, got {step}")
    beta1, beta2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    correction1 = 1.0 - beta1 ** step
    correction2 = 1.0 - beta2 ** step
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise DimensionError(f"gradient for {name} has shape {grad.shape}, parameter {param.shape}")
        m = beta1 * moments.m[name] + (1 - beta1) * grad
        v = beta2 * moments.v[name] + (1 - beta2) * grad * grad
        moments.m[name] = m.astype(param.dtype, copy=False)
        moments.v[name] = v.astype(param.dtype, copy=False)
        m_hat = moments.m[name] / correction1
        v_hat = moments.v[name] / correction2
        param.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype, copy=False)
    return params, moments


def _collect_grads(tensors: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
    return {name: t.grad if t.grad is not None else np.zeros_like(t.data) for name, t in tensors.items()}


def global_grad_norm(grads: Dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(np.sum(np.square(g, dtype=np.float64)) for g in grads.values())))


# State

def derive_seeds(seed: int, count: int) -> List[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


def init_train_state(gen_spec: GeneratorSpec, disc_spec: DiscriminatorSpec, config: TrainConfig,
                     dtype=DEFAULT_DTYPE) -> TrainState:
    """Fresh parameters, zero Adam moments and a seeded random source"""
    config.validate()
    if gen_spec.resolution != disc_spec.resolution:
        raise ConfigError(f"disc.resolution {disc_spec.resolution} does not match generator output "
                          f"{gen_spec.resolution}")
    if gen_spec.out_channels != disc_spec.in_channels:
        raise ConfigError(f"disc.in_channels {disc_spec.in_channels} does not match gen.out_channels "
                          f"{gen_spec.out_channels}")
    gen_seed, disc_seed, rng_seed = derive_seeds(config.seed, 3)
    generator = init_generator(gen_spec, gen_seed, dtype)
    discriminator = init_discriminator(disc_spec, disc_seed, dtype)
    return TrainState(generator=generator, discriminator=discriminator,
                      moments_g=AdamMoments.zeros_like(generator.tensors),
                      moments_d=AdamMoments.zeros_like(discriminator.tensors),
                      step=0, rng=np.random.default_rng(rng_seed))


def discriminator_update(state: TrainState, real: np.ndarray, config: TrainConfig,
                         update_index: int) -> Tuple[float, float]:
    """
    One discriminator update on real images and fresh fakes

    Fakes are generated outside any recording graph, so no gradient reaches
    the generator.

    Returns:
        (loss_d, grad_norm_d)
    """
    n = len(real)
    latents = sample_latents(state.rng, n, state.generator.spec, real.dtype)
    fakes = generate(state.generator, latents).data
    disc = state.discriminator.tensors
    zero_grad(disc.values())
    zero_grad(state.generator.parameters())

    graph = Graph()
    with graph.recording():
        scores = discriminate(state.discriminator, Tensor(np.concatenate([real, fakes])), training=True)
        loss = hinge_d_loss(scores[:n], scores[n:])
    if not np.isfinite(loss.data).all():
        raise NumericalError(f"non-finite discriminator loss {loss.item()}")
    backward(loss, graph)
    grads = _collect_grads(disc)
    adam_step(disc, grads, state.moments_d, update_index, config, config.lr_d)
    return loss.item(), global_grad_norm(grads)


def generator_update(state: TrainState, n: int, config: TrainConfig) -> Tuple[float, float]:
    """One generator update through the discriminator in evaluation mode; never reads real images"""
    gen = state.generator.tensors
    latents = sample_latents(state.rng, n, state.generator.spec, gen['input.weight'].dtype)
    zero_grad(gen.values())

    graph = Graph()
    with graph.recording():
        fakes = generate(state.generator, latents)
        loss = hinge_g_loss(discriminate(state.discriminator, fakes, training=False))
    if not np.isfinite(loss.data).all():
        raise NumericalError(f"non-finite generator loss {loss.item()}")
    backward(loss, graph)
    grads = _collect_grads(gen)
    adam_step(gen, grads, state.moments_g, state.step + 1, config, config.lr_g)
    zero_grad(state.discriminator.parameters())
    return loss.item(), global_grad_norm(grads)


def train_step(state: TrainState, real_batch, config: TrainConfig) -> Tuple[TrainState, RunRecord]:
    """
    d_steps_per_g_step discriminator updates then one generator update

    Args:
        state: run state, mutated in place
        real_batch: N×C×R×R real images
        config: training settings

    Returns:
        (state, RunRecord); a collapsed state is returned unchanged. When
        the step itself collapses, the state is rolled back to before it
        and only the collapsed flag is set.
    """
    step = state.step + 1
    if state.collapsed:
        return state, RunRecord(step=state.step, loss_d=None, loss_g=None, grad_norm_d=None,
                                grad_norm_g=None, collapsed=True)
    real = np.asarray(real_batch.images if isinstance(real_batch, ImageBatch) else real_batch,
                      dtype=state.generator['input.weight'].dtype)
    spec = state.discriminator.spec
    expected = (spec.in_channels, spec.resolution, spec.resolution)
    if real.ndim != 4 or real.shape[1:] != expected:
        raise DimensionError(f"real batch must be N×{expected[0]}×{expected[1]}×{expected[2]}, got {real.shape}")

    started = time.perf_counter()
    snapshot = StepSnapshot.take(state)
    loss_d = loss_g = norm_d = norm_g = None
    try:
        for i in range(config.d_steps_per_g_step):
            loss_d, norm_d = discriminator_update(state, real, config,
                                                  state.step * config.d_steps_per_g_step + i + 1)
        loss_g, norm_g = generator_update(state, len(real), config)
    except NumericalError as e:
        snapshot.restore(state)
        state.collapsed = True
        logger.warning(f"Run collapsed at step {step}: {e}; state rolled back to step {state.step}")
        return state, RunRecord(step=step, loss_d=loss_d, loss_g=loss_g, grad_norm_d=norm_d,
                                grad_norm_g=norm_g, collapsed=True)

    wall_ms = (time.perf_counter() - started) * 1000.0
    state.step = step
    record = RunRecord(step=step, loss_d=loss_d, loss_g=loss_g, grad_norm_d=norm_d, grad_norm_g=norm_g,
                       wall_ms=round(wall_ms, 3) if config.record_wall_time else None)
    logger.debug(f"step {step}: loss_d={loss_d:.4f} loss_g={loss_g:.4f} "
                 f"|g_d|={norm_d:.3e} |g_g|={norm_g:.3e} ({wall_ms:.1f} ms)")
    return state, record


# Evaluation

def eval_latents(config: TrainConfig, spec: GeneratorSpec, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Fixed latents so FID-proxy snapshots are comparable across steps"""
    rng = np.random.default_rng([config.seed, EVAL_SEED_SALT])
    return sample_latents(rng, config.eval_samples, spec, dtype)


def generate_samples(params: GeneratorParams, latents: np.ndarray) -> np.ndarray:
    chunks = [generate(params, latents[i:i + EVAL_CHUNK]).data for i in range(0, len(latents), EVAL_CHUNK)]
    return np.concatenate(chunks)


def evaluate(state: TrainState, real_images: np.ndarray, config: TrainConfig) -> Dict[str, float]:
    """FID-proxy between the first eval_samples real images and fixed-latent samples"""
    latents = eval_latents(config, state.generator.spec, state.generator['input.weight'].dtype)
    fakes = generate_samples(state.generator, latents)
    real = real_images[:config.eval_samples]
    return {'fid_proxy': fid(real, fakes, get_extractor(config.eval_extractor))}


# Checkpoints

def state_tensors(state: TrainState) -> Dict[str, np.ndarray]:
    """Every persisted array, keyed by manifest name"""
    tensors = {}
    for prefix, params in (('gen', state.generator), ('disc', state.discriminator)):
        for name, t in params.tensors.items():
            tensors[f"{prefix}/{name}"] = t.data
    for prefix, moments in (('adam_g', state.moments_g), ('adam_d', state.moments_d)):
        for name in moments.m:
            tensors[f"{prefix}/{name}/m"] = moments.m[name]
            tensors[f"{prefix}/{name}/v"] = moments.v[name]
    for name, sn in state.discriminator.sn_states.items():
        tensors[f"sn/{name}/u"] = sn.u
    return tensors


def config_echo(state: TrainState, config: TrainConfig) -> Dict:
    return {
        'train': asdict(config),
        'generator': asdict(state.generator.spec),
        'discriminator': asdict(state.discriminator.spec),
        'collapsed': state.collapsed,
    }


def save_state(state: TrainState, path, config: TrainConfig) -> Path:
    return save_checkpoint(path, state_tensors(state), state.step, config_echo(state, config),
                           state.rng.bit_generator.state)


def load_state(path) -> Tuple[TrainState, TrainConfig]:
    """Rebuild a TrainState (and its TrainConfig) from a checkpoint"""
    checkpoint = load_checkpoint(path)
    echo = checkpoint.config
    try:
        config = TrainConfig(**echo['train'])
        gen_spec = GeneratorSpec(**echo['generator'])
        disc_spec = DiscriminatorSpec(**echo['discriminator'])
    except (KeyError, TypeError) as e:
        raise CorruptionError(f"{path}: config echo is incomplete: {e}") from e
    tensors = checkpoint.tensors

    def take(name: str) -> np.ndarray:
        if name not in tensors:
            raise CorruptionError(f"{path}: checkpoint is missing tensor '{name}'")
        return tensors[name].copy()

    gen = GeneratorParams(spec=gen_spec)
    for name in generator_shapes(gen_spec):
        gen.tensors[name] = Tensor(take(f"gen/{name}"), requires_grad=True, name=f"gen/{name}")
    disc = DiscriminatorParams(spec=disc_spec)
    for name in discriminator_shapes(disc_spec):
        disc.tensors[name] = Tensor(take(f"disc/{name}"), requires_grad=True, name=f"disc/{name}")
        if disc_spec.use_sn and name.endswith('.weight'):
            disc.sn_states[name] = SpectralNormState(u=take(f"sn/{name}/u"), n_power_iters=disc_spec.n_power_iters)
    moments_g = AdamMoments(m={n: take(f"adam_g/{n}/m") for n in gen.tensors},
                            v={n: take(f"adam_g/{n}/v") for n in gen.tensors})
    moments_d = AdamMoments(m={n: take(f"adam_d/{n}/m") for n in disc.tensors},
                            v={n: take(f"adam_d/{n}/v") for n in disc.tensors})
    rng = np.random.default_rng()
    if checkpoint.rng_state is not None:
        rng.bit_generator.state = checkpoint.rng_state
    state = TrainState(generator=gen, discriminator=disc, moments_g=moments_g, moments_d=moments_d,
                       step=checkpoint.step, rng=rng, collapsed=bool(echo.get('collapsed', False)))
    return state, config


class TrainingRun:
    """Full training run writing a run log, checkpoints and a sample grid"""

    def __init__(self, gen_spec: GeneratorSpec, disc_spec: DiscriminatorSpec, config: TrainConfig,
                 images: ImageBatch, output_dir, config_extra: Optional[Dict] = None):
        """
        Initialize the run

        Args:
            gen_spec: generator architecture
            disc_spec: discriminator architecture
            config: training settings (validated here)
            images: real training images at the generator's resolution
            output_dir: directory for runlog.jsonl, checkpoints/, samples.ppm, summary.json
            config_extra: extra fields echoed into every checkpoint
        """
        self.output_dir = Path(output_dir)
        self.logger = logging.getLogger(__name__)
        self.config = config
        self.images = images
        self.config_extra = config_extra or {}
        if images.images.shape[1:] != (gen_spec.out_channels, gen_spec.resolution, gen_spec.resolution):
            raise DimensionError(f"training images have shape {images.images.shape[1:]}, generator produces "
                                 f"{(gen_spec.out_channels, gen_spec.resolution, gen_spec.resolution)}")
        self.state = init_train_state(gen_spec, disc_spec, config)
        self.sampler = BatchSampler(images.images, config.batch_size, derive_seeds(config.seed, 4)[3])
        self.records: List[RunRecord] = []
        self.initial_metrics: Dict[str, float] = {}
        self.final_metrics: Dict[str, float] = {}

    def save_checkpoint(self, filename: str) -> Path:
        directory = self.output_dir / 'checkpoints'
        directory.mkdir(parents=True, exist_ok=True)
        echo = {**config_echo(self.state, self.config), **self.config_extra}
        path = save_checkpoint(directory / filename, state_tensors(self.state), self.state.step, echo,
                               self.state.rng.bit_generator.state)
        self.logger.info(f"Checkpoint saved: {path}")
        return path

    def run(self, show_progress: bool = True) -> TrainState:
        """
        Train for config.total_steps steps

        Args:
            show_progress: display a tqdm progress bar

        Returns:
            The final TrainState
        """
        config = self.config
        self.output_dir.mkdir(parents=True, exist_ok=True)
        gen_spec, disc_spec = self.state.generator.spec, self.state.discriminator.spec
        self.logger.info(f"Training {config.generator} generator against {disc_spec.name} discriminator "
                         f"for {config.total_steps} steps (batch {config.batch_size}, seed {config.seed})")

        if config.eval_every:
            self.initial_metrics = evaluate(self.state, self.images.images, config)
            self.logger.info(f"Step 0 FID-proxy: {self.initial_metrics['fid_proxy']:.4f}")

        started = time.perf_counter()
        with open(self.output_dir / 'runlog.jsonl', 'w') as runlog:
            batches = prefetch(self.sampler, range(config.total_steps), config.prefetch_depth)
            pbar = tqdm(batches, total=config.total_steps, desc="Training", unit="step",
                        disable=not show_progress)
            for batch in pbar:
                step_started = time.perf_counter()
                self.state, record = train_step(self.state, batch, config)
                elapsed_ms = (time.perf_counter() - step_started) * 1000.0
                step = record.step

                if config.eval_every and not record.collapsed and step % config.eval_every == 0:
                    record.metrics = evaluate(self.state, self.images.images, config)
                    self.final_metrics = record.metrics

                runlog.write(record.to_json() + '\n')
                self.records.append(record)

                if record.collapsed:
                    pbar.close()
                    self.logger.warning(f"Run collapsed at step {step}; parameters frozen at step {self.state.step}")
                    break

                pbar.set_postfix({'loss_d': f"{record.loss_d:.3f}", 'loss_g': f"{record.loss_g:.3f}"})
                if step % config.log_every == 0:
                    extra = f", FID-proxy {record.metrics['fid_proxy']:.4f}" if record.metrics else ""
                    self.logger.info(f"Step {step}/{config.total_steps}: loss_d {record.loss_d:.4f}, "
                                     f"loss_g {record.loss_g:.4f}{extra}")
                    self.logger.debug(f"Step {step} took {elapsed_ms:.1f} ms")
                if config.checkpoint_every and step % config.checkpoint_every == 0:
                    self.save_checkpoint(f"step_{step:06d}.hgan")

        if config.eval_every and not self.state.collapsed and not self.final_metrics:
            self.final_metrics = evaluate(self.state, self.images.images, config)
        self.save_checkpoint('final.hgan')
        self.save_results()
        self.logger.info(f"Training finished after {self.state.step} steps")
        self.logger.debug(f"Wall time {time.perf_counter() - started:.1f} s")
        return self.state

    def save_results(self) -> None:
        """Write the final sample grid and summary.json"""
        if not self.state.collapsed:
            latents = eval_latents(self.config, self.state.generator.spec)[:64]
            grid = save_image_grid(generate_samples(self.state.generator, latents),
                                   self.output_dir / 'samples.ppm', cols=8)
            self.logger.info(f"Sample grid saved to {grid}")

        summary = {
            'steps': self.state.step,
            'collapsed': self.state.collapsed,
            'generator_preset': self.config.generator,
            'discriminator': self.state.discriminator.spec.name,
            'initial_metrics': self.initial_metrics,
            'final_metrics': self.final_metrics,
        }
        with open(self.output_dir / 'summary.json', 'w') as f:
            json.dump(summary, f, indent=2, default=str)


# Benchmark

def variant_seed(seed: int, variant: str) -> int:
    return (int(seed) * 1_000_003 + zlib.crc32(variant.encode('utf-8'))) % 2 ** 32


def benchmark_variant(variant: str, gen_spec: GeneratorSpec, config: TrainConfig, images: np.ndarray,
                      scale: str = 'toy') -> BenchmarkRow:
    """Train one discriminator variant against the fixed generator and score it"""
    disc_spec = discriminator_preset(variant, resolution=gen_spec.resolution, scale=scale)
    run_config = replace(config, seed=variant_seed(config.seed, variant), use_sn=disc_spec.use_sn,
                         discriminator=variant)
    state = init_train_state(gen_spec, disc_spec, run_config)
    sampler = BatchSampler(images, run_config.batch_size, derive_seeds(run_config.seed, 4)[3])
    for step in range(run_config.total_steps):
        state, record = train_step(state, sampler.batch(step), run_config)
        if record.collapsed:
            break
    fid_proxy = None if state.collapsed else evaluate(state, images, run_config)['fid_proxy']
    return BenchmarkRow(discriminator=variant, params=discriminator_param_count(disc_spec),
                        fid_proxy=fid_proxy, collapsed=state.collapsed)


def run_benchmark(variants: Sequence[str], gen_spec: GeneratorSpec, config: TrainConfig,
                  images: np.ndarray, scale: str = 'toy', workers: int = 1,
                  show_progress: bool = True) -> List[BenchmarkRow]:
    """
    Swap discriminators under a fixed generator preset

    Args:
        variants: discriminator variant names
        gen_spec: generator architecture shared by every run
        config: training settings; each variant derives its own seed
        images: real images
        scale: discriminator preset scale
        workers: parallel variant runs (process pool) when > 1

    Returns:
        One BenchmarkRow per variant, in input order
    """
    if not variants:
        raise ConfigError("benchmark needs at least one discriminator variant")
    for variant in variants:
        discriminator_preset(variant, resolution=gen_spec.resolution, scale=scale)
    config.validate()

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(benchmark_variant, v, gen_spec, config, images, scale) for v in variants]
            rows = [f.result() for f in tqdm(futures, desc="Benchmark", disable=not show_progress)]
    else:
        rows = []
        pbar = tqdm(variants, desc="Benchmark", disable=not show_progress)
        for variant in pbar:
            pbar.set_postfix({'discriminator': variant})
            rows.append(benchmark_variant(variant, gen_spec, config, images, scale))

    for row in rows:
        status = "collapsed" if row.collapsed else f"FID-proxy {row.fid_proxy:.4f}"
        logger.info(f"{row.discriminator}: {row.params:,} parameters, {status}")
    return rows


def save_benchmark(rows: Sequence[BenchmarkRow], output_dir) -> Tuple[Path, Path]:
    """benchmark.csv (discriminator, params, fid_proxy, collapsed) and benchmark.json"""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    csv_path = output_dir / 'benchmark.csv'
    with open(csv_path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=['discriminator', 'params', 'fid_proxy', 'collapsed'])
        writer.writeheader()
        for row in rows:
            writer.writerow({'discriminator': row.discriminator, 'params': row.params,
                             'fid_proxy': '' if row.fid_proxy is None else f"{row.fid_proxy:.6f}",
                             'collapsed': str(row.collapsed).lower()})
    json_path = output_dir / 'benchmark.json'
    with open(json_path, 'w') as f:
        json.dump([asdict(row) for row in rows], f, indent=2, default=str)
    logger.info(f"Benchmark results saved to {csv_path}")
    return csv_path, json_path
