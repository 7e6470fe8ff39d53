"""Declarative run configuration shared by every CLI subcommand.

One YAML file names all paths, the backend, seeds, and forest settings, so
repeated refinement runs cannot drift apart. Relative paths resolve against
the config file's own directory. Credentials never live here: the backend
section may only name the environment variable holding the API key.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .forest import ForestConfig
from .gateway import BackendConfig

_PATH_KEYS = {"manifest", "registry", "added_registry", "images_root", "cache",
              "output_dir", "test_manifest", "test_features"}
_BACKEND_KEYS = {"kind", "endpoint_url", "api_key_env", "model_id", "timeout_s",
                 "max_retries_transport", "max_in_flight",
                 "mock_invalid_probability", "mock_seed", "audit_path"}
_FOREST_KEYS = {"n_trees", "max_features", "max_depth", "min_samples_leaf",
                "bootstrap", "class_weighting", "seed"}
_SPLIT_KEYS = {"val_fraction", "seed"}
_PRUNE_KEYS = {"k_grid"}
_TOP_KEYS = {"paths", "backend", "forest", "split", "prune", "language",
             "error_threshold"}


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


@dataclass
class RunConfig:
    manifest_path: Path
    registry_path: Path
    cache_path: Path
    output_dir: Path
    backend: BackendConfig
    forest: ForestConfig
    images_root: Path | None = None
    added_registry_path: Path | None = None
    test_manifest_path: Path | None = None
    test_features_path: Path | None = None
    val_fraction: float = 0.2
    split_seed: int = 42
    language: str = "all"
    k_grid: list[int] | None = None
    error_threshold: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("split.val_fraction must be in [0, 1)")
        if not 0.0 <= self.error_threshold <= 1.0:
            raise ConfigError("error_threshold must be in [0, 1]")

    def with_overrides(self, language: str | None = None,
                       seed: int | None = None) -> "RunConfig":
        """Apply CLI flag overrides; --seed re-seeds forest, split, and mock."""
        out = self
        if language is not None:
            out = replace(out, language=language)
        if seed is not None:
            out = replace(out,
                          split_seed=seed,
                          forest=replace(out.forest, seed=seed),
                          backend=replace(out.backend, mock_seed=seed))
        return out

    def run_dir(self) -> Path:
        return self.output_dir / self.language

    def snapshot(self) -> dict:
        def p(v: Path | None) -> str | None:
            return None if v is None else str(v)
        return {
            "paths": {"manifest": p(self.manifest_path),
                      "registry": p(self.registry_path),
                      "added_registry": p(self.added_registry_path),
                      "images_root": p(self.images_root),
                      "cache": p(self.cache_path),
                      "output_dir": p(self.output_dir),
                      "test_manifest": p(self.test_manifest_path),
                      "test_features": p(self.test_features_path)},
            "backend": {"kind": self.backend.kind,
                        "endpoint_url": self.backend.endpoint_url,
                        "api_key_env": self.backend.api_key_env,
                        "model_id": self.backend.model_id,
                        "timeout_s": self.backend.timeout_s,
                        "max_retries_transport": self.backend.max_retries_transport,
                        "max_in_flight": self.backend.max_in_flight,
                        "mock_invalid_probability": self.backend.mock_invalid_probability,
                        "mock_seed": self.backend.mock_seed,
                        "audit_path": self.backend.audit_path},
            "forest": self.forest.to_dict(),
            "split": {"val_fraction": self.val_fraction, "seed": self.split_seed},
            "prune": {"k_grid": self.k_grid},
            "language": self.language,
            "error_threshold": self.error_threshold,
        }

    def digest(self) -> str:
        blob = json.dumps(self.snapshot(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    _check_keys(raw, _TOP_KEYS, "top-level")

    base = path.parent

    def resolve(value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    paths = raw.get("paths") or {}
    if not isinstance(paths, dict):
        raise ConfigError("paths section must be a mapping")
    _check_keys(paths, _PATH_KEYS, "paths")
    for required in ("manifest", "registry", "cache", "output_dir"):
        if not paths.get(required):
            raise ConfigError(f"paths.{required} is required")

    backend_raw = dict(raw.get("backend") or {})
    if "api_key" in backend_raw:
        raise ConfigError(
            "backend.api_key is not allowed; put the key in an environment "
            "variable and name it via backend.api_key_env"
        )
    _check_keys(backend_raw, _BACKEND_KEYS, "backend")
    if backend_raw.get("audit_path"):
        backend_raw["audit_path"] = str(resolve(backend_raw["audit_path"]))
    try:
        backend = BackendConfig(**backend_raw)
    except TypeError as exc:
        raise ConfigError(f"bad backend section: {exc}") from exc

    forest_raw = dict(raw.get("forest") or {})
    _check_keys(forest_raw, _FOREST_KEYS, "forest")
    try:
        forest = ForestConfig(**forest_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad forest section: {exc}") from exc

    split_raw = dict(raw.get("split") or {})
    _check_keys(split_raw, _SPLIT_KEYS, "split")
    prune_raw = dict(raw.get("prune") or {})
    _check_keys(prune_raw, _PRUNE_KEYS, "prune")
    k_grid = prune_raw.get("k_grid")
    if k_grid is not None and (not isinstance(k_grid, list)
                               or not all(isinstance(k, int) for k in k_grid)):
        raise ConfigError("prune.k_grid must be a list of integers")

    language = raw.get("language", "all")
    if language not in ("en", "hi", "zh", "all"):
        raise ConfigError(f"unknown language {language!r}")

    return RunConfig(
        manifest_path=resolve(paths["manifest"]),
        registry_path=resolve(paths["registry"]),
        cache_path=resolve(paths["cache"]),
        output_dir=resolve(paths["output_dir"]),
        images_root=resolve(paths.get("images_root")),
        added_registry_path=resolve(paths.get("added_registry")),
        test_manifest_path=resolve(paths.get("test_manifest")),
        test_features_path=resolve(paths.get("test_features")),
        backend=backend,
        forest=forest,
        val_fraction=float(split_raw.get("val_fraction", 0.2)),
        split_seed=int(split_raw.get("seed", 42)),
        language=language,
        k_grid=k_grid,
        error_threshold=float(raw.get("error_threshold", 0.01)),
    )
