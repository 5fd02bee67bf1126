from .config import ConfigError, Mode, ScenarioConfig, load_config, parse_config
from .engine import MetricsRecord, PointResult, Simulation, SweepResult, run
