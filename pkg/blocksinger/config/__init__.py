"""設定パッケージ"""

from .models import (
    AppConfig, AnalysisConfig, DataConfig, GeneratorConfig, CriticConfig,
    TrainConfig, InferenceConfig, ProbeConfig, LoggingConfig
)
from .loader import ConfigLoader, load_config, dump_config, read_config_json
