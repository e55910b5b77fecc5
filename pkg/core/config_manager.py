# core/config_manager.py

import copy
import json
import os
from typing import Any, Dict, List, Optional

import psutil

from core.default_config import CONSTANTS, DEFAULT_CONFIG, EXPERIMENT_KINDS, KIND_PRESETS
from core.errors import InvalidConfigError
from core.schedule import schedule_from_config


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _int_list(value) -> bool:
    return isinstance(value, list) and all(_is_int(item) for item in value)


def _number_list(value) -> bool:
    return isinstance(value, list) and all(_is_number(item) for item in value)


def _int_pair(value) -> bool:
    return _int_list(value) and len(value) == 2


def _label(value) -> bool:
    return value is None or isinstance(value, str)


def _optional_number(value) -> bool:
    return value is None or _is_number(value)


def _mask(value) -> bool:
    if not isinstance(value, dict):
        return False
    if "coordinates" in value:
        return _int_list(value["coordinates"]) and all(item >= 0 for item in value["coordinates"])
    return all(_int_pair(value[key]) for key in ("rows", "cols") if key in value)


def _target(value) -> bool:
    return _is_number(value) or (isinstance(value, list) and all(_is_number(item) or _number_list(item)
                                                                 for item in value))


# field checks per edits subsection: (key, predicate, expectation)
EDIT_FIELD_CHECKS = {
    "shift": (
        ("distances", lambda v: _int_list(v) and bool(v) and min(v) >= 0, "a non-empty list of integers >= 0"),
        ("axis", _is_int, "an integer"),
        ("source_offset", lambda v: v is None or (_is_int(v) and v >= 0), "null or an integer >= 0"),
    ),
    "flip": (
        ("axis", _is_int, "an integer"),
    ),
    "color": (
        ("t1", lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
        ("t2", lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
        ("strengths", lambda v: _number_list(v) and bool(v), "a non-empty list of numbers"),
        ("mask", _mask, "{'rows': [r0, r1], 'cols': [c0, c1]} or {'coordinates': [...]}"),
        ("target", _target, "a number or a nested list of numbers"),
    ),
    "cond_swap": (
        ("source", _label, "a condition label"),
        ("target", _label, "a condition label"),
        ("strength", _optional_number, "null or a number"),
        ("t_skips", lambda v: _int_list(v) and bool(v) and min(v) >= 0, "a non-empty list of integers >= 0"),
    ),
    "sweep": (
        ("source", _label, "a condition label"),
        ("target", _label, "a condition label"),
        ("strengths", lambda v: _number_list(v) and bool(v), "a non-empty list of numbers"),
        ("t_skip_step", lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
    ),
    "diversity": (
        ("source", _label, "a condition label"),
        ("target", _label, "a condition label"),
        ("strength", _optional_number, "null or a number"),
        ("t_skip", lambda v: _is_int(v) and v >= 0, "an integer >= 0"),
        ("inversions", lambda v: _is_int(v) and v >= 2, "an integer >= 2"),
    ),
}


def merge_config(base: dict, override: dict) -> dict:
    """
    Recursive merge of ``override`` into a copy of ``base``. Sections listed in
    CONSTANTS["REPLACED_SECTIONS"] (the model declaration) are replaced whole.
    """
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if key in CONSTANTS["REPLACED_SECTIONS"] or not isinstance(value, dict) \
                or not isinstance(merged.get(key), dict):
            merged[key] = copy.deepcopy(value)
        else:
            merged[key] = merge_config(merged[key], value)
    return merged


class ConfigManager:
    def __init__(self, config_path: Optional[str], logger, kind: Optional[str] = None,
                 overrides: Optional[dict] = None, required: bool = False):
        """
        Layered experiment configuration.

        Args:
            config_path (str, optional): JSON config file or a run manifest
            logger: Logger instance
            kind (str, optional): experiment kind; falls back to the file's
                experiment.kind, then the built-in default
            overrides (dict, optional): values from CLI flags, applied last
            required (bool): raise instead of falling back when the file is missing
        """
        self.config_path = config_path
        self.logger = logger
        file_config = self._load_config(required)
        self.kind = kind or file_config.get("experiment", {}).get("kind") or DEFAULT_CONFIG["experiment"]["kind"]
        if self.kind not in KIND_PRESETS:
            raise InvalidConfigError(f"unknown experiment kind '{self.kind}' (known: {', '.join(EXPERIMENT_KINDS)})")
        config = merge_config(DEFAULT_CONFIG, KIND_PRESETS[self.kind])
        config = merge_config(config, file_config)
        config = merge_config(config, overrides or {})
        config["experiment"]["kind"] = self.kind
        self.config = config

    def _load_config(self, required: bool) -> dict:
        """Load configuration from a json file (or a manifest's config member)"""
        if not self.config_path:
            return {}
        if not os.path.exists(self.config_path):
            if required:
                raise InvalidConfigError(f"config file not found: {self.config_path}")
            self.logger.warning(f"Config file {self.config_path} not found, using defaults")
            return {}
        try:
            with open(self.config_path, 'r', encoding='utf-8') as config_file:
                loaded = json.load(config_file)
        except (OSError, json.JSONDecodeError) as e:
            raise InvalidConfigError(f"error loading config {self.config_path}: {e}") from e
        if not isinstance(loaded, dict):
            raise InvalidConfigError(f"config {self.config_path} must hold a JSON object")
        if "manifest_version" in loaded:
            self.logger.info(f"Re-running from manifest {self.config_path}")
            return loaded.get("config", {})
        return loaded

    def _section(self, name: str) -> dict:
        return self.config.get(name, {}) or {}

    def get_kind(self) -> str:
        return self.kind

    def get_seed(self) -> int:
        """Get the root seed"""
        return self._section('experiment').get('seed', DEFAULT_CONFIG['experiment']['seed'])

    def get_samples(self) -> int:
        return self._section('experiment').get('samples', DEFAULT_CONFIG['experiment']['samples'])

    def get_workers(self) -> int:
        """Worker threads for replications; defaults to the physical core count"""
        workers = self._section('experiment').get('workers')
        if workers is None:
            workers = psutil.cpu_count(logical=False) or 1
        return int(workers)

    def get_output_directory(self) -> str:
        return self._section('experiment').get('output_directory',
            DEFAULT_CONFIG['experiment']['output_directory'])

    def get_plots_enabled(self) -> bool:
        return bool(self._section('experiment').get('plots', True))

    def get_progress_enabled(self) -> bool:
        return bool(self._section('experiment').get('progress', False))

    def get_latent_path(self) -> Optional[str]:
        return self._section('experiment').get('latent')

    def get_angle_bins(self) -> int:
        return int(self._section('experiment').get('angle_bins', DEFAULT_CONFIG['experiment']['angle_bins']))

    def get_schedule_config(self) -> Dict[str, Any]:
        """Get the schedule section (steps, betas, eta, respacing)"""
        return dict(self._section('schedule'))

    def get_model_declaration(self) -> Dict[str, Any]:
        return copy.deepcopy(self.config.get('model', DEFAULT_CONFIG['model']))

    def get_edit_config(self, name: str) -> Dict[str, Any]:
        """Get one edits subsection (shift, flip, color, cond_swap, sweep, diversity)"""
        return dict(self._section('edits').get(name, DEFAULT_CONFIG['edits'].get(name, {})))

    def get_log_level(self) -> str:
        return str(self._section('logging').get('level', 'INFO')).upper()

    def get_log_directory(self) -> str:
        directory = self._section('logging').get('directory')
        return directory or os.path.join(self.get_output_directory(), 'logs')

    def as_dict(self) -> dict:
        return copy.deepcopy(self.config)

    def _edit_problems(self) -> List[str]:
        edits = self.config.get('edits')
        if not isinstance(edits, dict):
            return ["edits must be an object"]
        problems = []
        for name, checks in EDIT_FIELD_CHECKS.items():
            section = edits.get(name, {})
            if not isinstance(section, dict):
                problems.append(f"edits.{name} must be an object")
                continue
            for key, check, expected in checks:
                if key in section and not check(section[key]):
                    problems.append(f"edits.{name}.{key} must be {expected}, got {section[key]!r}")
        return problems

    def validate(self) -> None:
        """
        Check every field the experiment will use.

        Raises:
            InvalidConfigError: on the first invalid field
        """
        problems: List[str] = []
        seed = self.get_seed()
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            problems.append(f"experiment.seed must be an explicit integer in [0, 2^64), got {seed!r}")
        samples = self.get_samples()
        if isinstance(samples, bool) or not isinstance(samples, int) or samples < 1:
            problems.append(f"experiment.samples must be a positive integer, got {samples!r}")
        workers = self._section('experiment').get('workers')
        if workers is not None and (isinstance(workers, bool) or not isinstance(workers, int) or workers < 1):
            problems.append(f"experiment.workers must be a positive integer or null, got {workers!r}")
        bins = self._section('experiment').get('angle_bins')
        if not isinstance(bins, int) or bins < 2:
            problems.append(f"experiment.angle_bins must be an integer >= 2, got {bins!r}")
        if self.get_log_level() not in CONSTANTS['LOG_LEVELS']:
            problems.append(f"logging.level must be one of {CONSTANTS['LOG_LEVELS']}")
        declaration = self.config.get('model')
        if not isinstance(declaration, dict) or 'type' not in declaration:
            problems.append("model must be a declaration object with a 'type' field")
        problems.extend(self._edit_problems())
        if problems:
            raise InvalidConfigError("; ".join(problems))

        # the model itself is checked when built; a bad declaration raises InvalidModelError
        schedule_from_config(self.get_schedule_config())
