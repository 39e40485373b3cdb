"""Convolutional-recurrent feature network with hand-written reverse mode."""

from .layers import (conv2d, conv2d_backward, conv2d_forward, layer_norm, layer_norm_backward,
                     layer_norm_forward, sigmoid)
from .network import (ForwardResult, NetworkConfig, conv_lstm_backward, conv_lstm_forward,
                      conv_lstm_step, network_backward, network_forward, rvt_block_backward,
                      rvt_block_forward, scale_params)
from .weights import WeightStore, init_bound, init_weights, load_weights, save_weights
