from .fourier import ComplexTensor, amp_phase, fft2, hermitian_part, ifft2, recompose
from .gradcheck import GradCheckReport, grad_check
from .module import Module
from .nn import (activation, conv2d, filter2d_valid, gelu, layer_norm, sigmoid, silu,
                 softmax, softplus)
from .tensor import (Parameter, Tensor, absolute, add, amax, as_tensor, backward,
                     broadcast_to, concat, cos, div, exp, getitem, log, matmul, maximum,
                     mean, mul, power, reshape, sin, sqrt, square, stack, sub, transpose,
                     tsum, zero_grad)

__all__ = [
    "ComplexTensor", "amp_phase", "fft2", "hermitian_part", "ifft2", "recompose",
    "GradCheckReport", "grad_check", "Module",
    "activation", "conv2d", "filter2d_valid", "gelu", "layer_norm", "sigmoid", "silu",
    "softmax", "softplus",
    "Parameter", "Tensor", "absolute", "add", "amax", "as_tensor", "backward",
    "broadcast_to", "concat", "cos", "div", "exp", "getitem", "log", "matmul", "maximum",
    "mean", "mul", "power", "reshape", "sin", "sqrt", "square", "stack", "sub", "transpose",
    "tsum", "zero_grad",
]
