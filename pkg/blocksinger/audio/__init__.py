"""ボコーダーパッケージ"""

from .wav_io import Waveform, read_wav, write_wav
from .analysis import analyze
from .synthesis import synthesize
