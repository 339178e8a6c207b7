"""GEMM shapes of the AlexNet layers, as (m, depth, n).

Convolution layers are the usual im2col-converted products; the
fully-connected layers use a batch of 128.
"""

LAYER_PRESETS = {
    "conv-1": (96, 363, 3025),
    "conv-2": (128, 1200, 729),
    "conv-3": (384, 2304, 169),
    "conv-4": (192, 1728, 169),
    "conv-5": (128, 1728, 169),
    "fc-6": (128, 9216, 4096),
    "fc-7": (128, 4096, 4096),
    "fc-8": (128, 4096, 1000),
}
