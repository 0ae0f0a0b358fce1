"""
ニューラルネットワーク基盤パッケージ

numpy 上の逆伝播テープ、畳み込み演算、ConvLSTM セル、RMSProp、勾配検査を提供します。
"""

from .tape import GradientTape, Tensor, backward, is_recording
from .ops import conv1d, conv1d_transpose, conv_output_length, conv_transpose_output_length
from .convlstm import ConvLSTMLayer, ConvLSTMState, convlstm_cell, glorot_bound, init_convlstm, zero_state
from .optim import RMSProp, clip_weights, rmsprop_step
from .gradcheck import check_gradients, relative_error

__all__ = [
    'GradientTape', 'Tensor', 'backward', 'is_recording',
    'conv1d', 'conv1d_transpose', 'conv_output_length', 'conv_transpose_output_length',
    'ConvLSTMLayer', 'ConvLSTMState', 'convlstm_cell', 'glorot_bound', 'init_convlstm', 'zero_state',
    'RMSProp', 'clip_weights', 'rmsprop_step',
    'check_gradients', 'relative_error',
]
