#!/usr/bin/env python3
"""
Run configuration files

Flat ``key = value`` text, one entry per line, ``#`` starts a comment:

    # two-mode toy run
    generator = tiny
    discriminator = sngan
    total_steps = 2000
    batch_size = 32
    gen.depths = 1, 1
    disc.scale = toy

Bare keys are TrainConfig fields, ``gen.*`` keys override the generator
preset named by ``generator`` and ``disc.*`` keys override the discriminator
preset named by ``discriminator`` (plus ``disc.scale``). Unknown and repeated
keys are rejected.
"""

import logging
import typing
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

from discriminator import DiscriminatorSpec, discriminator_preset
from errors import ConfigError
from generator import GeneratorSpec, generator_preset
from training import TrainConfig

logger = logging.getLogger(__name__)

TRUE_WORDS = ('true', 'yes', 'on', '1')
FALSE_WORDS = ('false', 'no', 'off', '0')


@dataclass
class RunConfig:
    """Resolved and validated run configuration"""
    train: TrainConfig
    generator: GeneratorSpec
    discriminator: DiscriminatorSpec
    disc_scale: str
    raw: Dict[str, str]

    def echo(self) -> Dict[str, Any]:
        return {'disc_scale': self.disc_scale, 'raw': dict(sorted(self.raw.items()))}


def _parse_bool(key: str, text: str) -> bool:
    lowered = text.lower()
    if lowered in TRUE_WORDS:
        return True
    if lowered in FALSE_WORDS:
        return False
    raise ConfigError(f"{key}: expected true or false, got '{text}'")


def _parse_scalar(key: str, kind, text: str):
    if kind is bool:
        return _parse_bool(key, text)
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError as e:
        raise ConfigError(f"{key}: expected {kind.__name__}, got '{text}'") from e
    return text


def parse_value(key: str, annotation, text: str):
    """Convert a raw string according to a dataclass field annotation"""
    if typing.get_origin(annotation) is tuple:
        item_type = typing.get_args(annotation)[0]
        items = [item.strip() for item in text.split(',') if item.strip()]
        return tuple(_parse_scalar(key, item_type, item) for item in items)
    return _parse_scalar(key, annotation, text)


def _field_types(cls) -> Dict[str, Any]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in fields(cls)}


def read_entries(text: str, source: str = '<config>') -> Dict[str, str]:
    """Raw key → value strings, rejecting malformed lines and duplicates"""
    entries: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got '{line}'")
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        entries[key] = value
    return entries


def parse_run_config(text: str, source: str = '<config>',
                     overrides: Optional[Dict[str, str]] = None) -> RunConfig:
    """
    Parse and validate a run configuration

    Args:
        text: file contents
        source: name used in error messages
        overrides: raw entries applied on top of the file (e.g. seed from the command line)

    Returns:
        RunConfig with presets resolved and every spec validated
    """
    entries = read_entries(text, source)
    entries.update(overrides or {})

    train_types = _field_types(TrainConfig)
    gen_types = _field_types(GeneratorSpec)
    disc_types = _field_types(DiscriminatorSpec)
    train_values, gen_values, disc_values = {}, {}, {}
    disc_scale = None

    for key, text_value in entries.items():
        if key.startswith('gen.'):
            name = key[4:]
            if name not in gen_types:
                raise ConfigError(f"{source}: unknown key '{key}'")
            gen_values[name] = parse_value(key, gen_types[name], text_value)
        elif key.startswith('disc.'):
            name = key[5:]
            if name == 'scale':
                disc_scale = text_value
            elif name in disc_types:
                disc_values[name] = parse_value(key, disc_types[name], text_value)
            else:
                raise ConfigError(f"{source}: unknown key '{key}'")
        elif key in train_types:
            train_values[key] = parse_value(key, train_types[key], text_value)
        else:
            raise ConfigError(f"{source}: unknown key '{key}'")

    train = TrainConfig(**train_values)
    train.validate()
    generator = replace(generator_preset(train.generator), **gen_values)
    generator.validate()

    if disc_scale is None:
        disc_scale = 'full' if generator.resolution >= 32 else 'toy'
    discriminator = discriminator_preset(train.discriminator, resolution=generator.resolution,
                                         scale=disc_scale)
    if 'use_sn' in train_values and discriminator.variant == 'sngan':
        discriminator.use_sn = train.use_sn
    discriminator = replace(discriminator, **disc_values)
    discriminator.validate()
    train.use_sn = discriminator.use_sn

    if discriminator.resolution != generator.resolution:
        raise ConfigError(f"disc.resolution {discriminator.resolution} does not match generator output "
                          f"{generator.resolution}")
    if discriminator.in_channels != generator.out_channels:
        raise ConfigError(f"disc.in_channels {discriminator.in_channels} does not match gen.out_channels "
                          f"{generator.out_channels}")
    logger.debug(f"Parsed {source}: generator {train.generator}, discriminator {discriminator.name} "
                 f"({disc_scale}), {len(entries)} keys")
    return RunConfig(train=train, generator=generator, discriminator=discriminator,
                     disc_scale=disc_scale, raw=entries)


def load_run_config(path: Union[str, Path], overrides: Optional[Dict[str, str]] = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror or e}") from e
    return parse_run_config(text, source=str(path), overrides=overrides)
