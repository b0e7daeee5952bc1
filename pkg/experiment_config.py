import copy
import dataclasses
import itertools
import json
import logging
import math
import os
from dataclasses import dataclass, field

from emo import ENGINES, EngineConfig
from semantic_emo import Approach, SemanticConfig
from semantics import SimilarityBounds

# Set up logging
logger = logging.getLogger(__name__)

# Placeholder sweep: 4 x 4 = 16 bound pairs, all with LBSS <= UBSS
DEFAULT_LBSS_GRID = [0.001, 0.01, 0.1, 0.25]
DEFAULT_UBSS_GRID = [0.25, 0.5, 0.75, 1.0]

# Default experiment settings, nested the way the JSON file is
DEFAULT_CONFIG = {
    "dataset": {
        "path": None,
        "label_column": -1,
        "positive_label": None,
        "scale_features": False,
        "train_fraction": 0.7,
    },
    "engine": "nsga2",
    "semantic": {
        "approach": "canonical",
        "lbss": 0.01,
        "ubss": 0.5,
        "distance_rule": "eq2",
        "ssc_max_trials": 12,
        "ssc_subset_fraction": 1.0,
        "ssc_whole_parent": False,
        "allow_moead_scd": False,
    },
    "gp": {field_.name: field_.default for field_ in dataclasses.fields(EngineConfig)},
    "threshold": 0.0,
    "seeds": [0],
    "output_dir": "results",
    "n_workers": 1,
    "run_workers": 1,
    "record_wall_time": False,
    "lbss_grid": [],
    "ubss_grid": [],
}


class ConfigError(ValueError):
    """Raised for unreadable or invalid experiment configuration"""


@dataclass
class ExperimentConfig:
    dataset_path: str
    label_column: int = -1
    positive_label: str = None
    scale_features: bool = False
    train_fraction: float = 0.7
    engine: str = "nsga2"
    semantic: SemanticConfig = field(default_factory=SemanticConfig)
    gp: EngineConfig = field(default_factory=EngineConfig)
    threshold: float = 0.0
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "results"
    n_workers: int = 1
    run_workers: int = 1
    record_wall_time: bool = False
    lbss_grid: list = field(default_factory=list)
    ubss_grid: list = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.dataset_path:
            raise ConfigError("No dataset path configured")
        if self.engine not in ENGINES:
            raise ConfigError(f"Unknown engine {self.engine!r}; expected one of {sorted(ENGINES)}")
        if not self.seeds:
            raise ConfigError("At least one seed is required")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.n_workers < 1 or self.run_workers < 1:
            raise ConfigError("Worker counts must be at least 1")

    def to_dict(self):
        """Nested JSON-ready form; from_dict(to_dict()) rebuilds an equal config"""
        semantic = self.semantic
        return {
            "dataset": {
                "path": self.dataset_path,
                "label_column": self.label_column,
                "positive_label": self.positive_label,
                "scale_features": self.scale_features,
                "train_fraction": self.train_fraction,
            },
            "engine": self.engine,
            "semantic": {
                "approach": semantic.approach.value,
                "lbss": _bound_to_json(semantic.bounds.lbss),
                "ubss": _bound_to_json(semantic.bounds.ubss),
                "distance_rule": semantic.distance_rule.value,
                "ssc_max_trials": semantic.ssc_max_trials,
                "ssc_subset_fraction": semantic.ssc_subset_fraction,
                "ssc_whole_parent": semantic.ssc_whole_parent,
                "allow_moead_scd": semantic.allow_moead_scd,
            },
            "gp": {**dataclasses.asdict(self.gp), "reference_point": list(self.gp.reference_point)},
            "threshold": self.threshold,
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "n_workers": self.n_workers,
            "run_workers": self.run_workers,
            "record_wall_time": self.record_wall_time,
            "lbss_grid": [_bound_to_json(v) for v in self.lbss_grid],
            "ubss_grid": [_bound_to_json(v) for v in self.ubss_grid],
        }

    @classmethod
    def from_dict(cls, data):
        merged = _merge(DEFAULT_CONFIG, data)
        unknown = set(merged) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")
        try:
            sem = dict(merged["semantic"])
            bounds = SimilarityBounds(_bound_from_json(sem.pop("lbss")), _bound_from_json(sem.pop("ubss")))
            semantic = SemanticConfig(bounds=bounds, **sem)
            gp = dict(merged["gp"])
            gp["reference_point"] = tuple(gp["reference_point"])
            engine_config = EngineConfig(**gp)
            ds = merged["dataset"]
            return cls(
                dataset_path=ds["path"],
                label_column=int(ds["label_column"]),
                positive_label=ds["positive_label"],
                scale_features=bool(ds["scale_features"]),
                train_fraction=float(ds["train_fraction"]),
                engine=merged["engine"],
                semantic=semantic,
                gp=engine_config,
                threshold=float(merged["threshold"]),
                seeds=[int(s) for s in merged["seeds"]],
                output_dir=merged["output_dir"],
                n_workers=int(merged["n_workers"]),
                run_workers=int(merged["run_workers"]),
                record_wall_time=bool(merged["record_wall_time"]),
                lbss_grid=[_bound_from_json(v) for v in merged["lbss_grid"]],
                ubss_grid=[_bound_from_json(v) for v in merged["ubss_grid"]],
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid configuration: {e}") from e


def _bound_to_json(value):
    # JSON has no infinity; null stands for an unbounded UBSS
    return None if math.isinf(value) else value


def _bound_from_json(value):
    return math.inf if value is None else float(value)


def _merge(defaults, overrides):
    """Deep-merge ``overrides`` over a copy of ``defaults``"""
    merged = copy.deepcopy(defaults)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path):
    """Load an experiment configuration file, filling missing keys from DEFAULT_CONFIG"""
    if not os.path.exists(path):
        raise ConfigError(f"Configuration file not found: {path}")
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        logger.error(f"Error reading configuration {path}: {e}")
        raise ConfigError(f"Configuration file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Configuration file {path} must hold a JSON object")
    cfg = ExperimentConfig.from_dict(data)
    logger.info(f"Loaded configuration from {path}")
    return cfg


def save_config(cfg, path):
    with open(path, "w") as f:
        json.dump(cfg.to_dict(), f, indent=4, allow_nan=False)
    logger.info(f"Saved configuration to {path}")


def apply_overrides(cfg, seed=None, engine=None, approach=None, lbss=None, ubss=None, out=None, dataset=None):
    """Return a copy of ``cfg`` with command-line values taking precedence"""
    data = cfg.to_dict()
    if seed is not None:
        data["seeds"] = [int(seed)]
    if engine is not None:
        data["engine"] = engine
    if approach is not None:
        data["semantic"]["approach"] = approach
    if lbss is not None:
        data["semantic"]["lbss"] = lbss
        data["lbss_grid"] = []
    if ubss is not None:
        data["semantic"]["ubss"] = ubss
        data["ubss_grid"] = []
    if out is not None:
        data["output_dir"] = out
    if dataset is not None:
        data["dataset"]["path"] = dataset
    return ExperimentConfig.from_dict(data)


def expand_grid(cfg):
    """
    Cross-product of lbss_grid x ubss_grid as single-bound configurations.

    An empty grid list keeps the configured bound. Pairs with LBSS > UBSS
    are skipped.
    """
    if not cfg.lbss_grid and not cfg.ubss_grid:
        return [cfg]
    if cfg.semantic.approach is Approach.CANONICAL:
        logger.warning("Bound grid ignored: the canonical approach does not use LBSS/UBSS")
        return [dataclasses.replace(cfg, lbss_grid=[], ubss_grid=[])]
    lbss_values = cfg.lbss_grid or [cfg.semantic.bounds.lbss]
    ubss_values = cfg.ubss_grid or [cfg.semantic.bounds.ubss]
    expanded = []
    for lbss, ubss in itertools.product(lbss_values, ubss_values):
        if lbss > ubss:
            logger.warning(f"Skipping bound pair LBSS={lbss} > UBSS={ubss}")
            continue
        semantic = dataclasses.replace(cfg.semantic, bounds=SimilarityBounds(lbss, ubss))
        expanded.append(dataclasses.replace(cfg, semantic=semantic, lbss_grid=[], ubss_grid=[]))
    logger.info(f"Expanded bound grid into {len(expanded)} configurations")
    return expanded
