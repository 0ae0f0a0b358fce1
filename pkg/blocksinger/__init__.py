"""blocksinger - ブロック単位 ConvLSTM 条件付き WGAN による歌声合成"""

__version__ = '0.1.0'
