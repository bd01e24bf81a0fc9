"""Moment-propagating layers.

Each rule maps input (mean, variance) arrays and parameter (mean, variance)
arrays to output (mean, variance) arrays and returns a pullback for the
tape in :mod:`momentbnn.autograd`.  The layer classes wrap those rules and
carry their :class:`~momentbnn.variational.GaussianParameter` arrays.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError
from .moments import MomentTensor, truncated_stats

#: Input variances below this are treated as exactly zero by the leaky-ReLU.
DEGENERATE_VAR = 1e-12


# --- rules ---------------------------------------------------------------


def linear_moments(a_mean, a_var, w_mean, w_var, b_mean, b_var):
    """Fully connected layer on independent Gaussian inputs and parameters.

    Shapes: inputs (batch, in), weights (out, in), biases (out,).
    """
    w_mean_sq = w_mean * w_mean
    a_mean_sq = a_mean * a_mean
    out_mean = a_mean @ w_mean.T + b_mean
    out_var = b_var + a_var @ (w_var + w_mean_sq).T + a_mean_sq @ w_var.T

    def pullback(g_mean, g_var):
        g_a_mean = g_mean @ w_mean + 2.0 * a_mean * (g_var @ w_var)
        g_a_var = g_var @ (w_var + w_mean_sq)
        g_w_mean = g_mean.T @ a_mean + 2.0 * w_mean * (g_var.T @ a_var)
        g_w_var = g_var.T @ (a_var + a_mean_sq)
        return (
            g_a_mean,
            g_a_var,
            g_w_mean,
            g_w_var,
            g_mean.sum(axis=0),
            g_var.sum(axis=0),
        )

    return (out_mean, out_var), pullback


def _conv_out_size(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def _im2col(x, kh, kw, stride, padding):
    """(B, C, H, W) -> (B*Ho*Wo, C*kh*kw) patches, cross-correlation order."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    b, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * kh * kw)
    return cols, ho, wo


def _col2im(cols, x_shape, kh, kw, stride, padding, ho, wo):
    b, c, h, w = x_shape
    patches = cols.reshape(b, ho, wo, c, kh, kw)
    out = np.zeros((b, c, h + 2 * padding, w + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += (
                patches[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    if padding:
        out = out[:, :, padding:-padding, padding:-padding]
    return out


def conv2d_moments(a_mean, a_var, w_mean, w_var, b_mean, b_var, stride=1, padding=0):
    """2-D convolution (zero padding, no kernel flip) on moment images.

    Shapes: inputs (B, C, H, W), weights (O, C, kh, kw), biases (O,).
    """
    out_ch, _, kh, kw = w_mean.shape
    b = a_mean.shape[0]
    cm, ho, wo = _im2col(a_mean, kh, kw, stride, padding)
    cv, _, _ = _im2col(a_var, kh, kw, stride, padding)
    wm = w_mean.reshape(out_ch, -1)
    wv = w_var.reshape(out_ch, -1)
    (m, v), lin_pullback = linear_moments(cm, cv, wm, wv, b_mean, b_var)

    def to_image(z):
        return z.reshape(b, ho, wo, out_ch).transpose(0, 3, 1, 2)

    def to_rows(g):
        return g.transpose(0, 2, 3, 1).reshape(b * ho * wo, out_ch)

    def pullback(g_mean, g_var):
        gcm, gcv, gwm, gwv, gbm, gbv = lin_pullback(to_rows(g_mean), to_rows(g_var))
        shape = a_mean.shape
        return (
            _col2im(gcm, shape, kh, kw, stride, padding, ho, wo),
            _col2im(gcv, shape, kh, kw, stride, padding, ho, wo),
            gwm.reshape(w_mean.shape),
            gwv.reshape(w_var.shape),
            gbm,
            gbv,
        )

    return (to_image(m), to_image(v)), pullback


def avgpool2d_moments(a_mean, a_var, pool_height, pool_width):
    """Non-overlapping average pooling; variances pick up an extra 1/N."""
    b, c, h, w = a_mean.shape
    if h % pool_height or w % pool_width:
        raise ShapeError(
            f"spatial dims ({h}, {w}) not divisible by pool ({pool_height}, {pool_width})"
        )
    n = pool_height * pool_width
    blocks = (b, c, h // pool_height, pool_height, w // pool_width, pool_width)
    out_mean = a_mean.reshape(blocks).mean(axis=(3, 5))
    out_var = a_var.reshape(blocks).mean(axis=(3, 5)) / n

    def spread(g):
        return np.repeat(np.repeat(g, pool_height, axis=2), pool_width, axis=3)

    def pullback(g_mean, g_var):
        return spread(g_mean) / n, spread(g_var) / (n * n)

    return (out_mean, out_var), pullback


def leaky_relu_moments(a_mean, a_var, slope):
    """Leaky-ReLU of a Gaussian input, by total expectation and total variance.

    The output variance is accumulated as
    l^2 P- V- + P+ V+ + P- P+ (l m- - m+)^2, which is the expanded five-term
    form regrouped so that every summand is non-negative.
    """
    l = float(slope)
    if l == 1.0:
        # identity activation; the general formulas agree only up to rounding
        return (a_mean.copy(), a_var.copy()), lambda g_mean, g_var: (g_mean, g_var)
    degenerate = a_var < DEGENERATE_VAR
    safe_var = np.where(degenerate, 1.0, a_var)
    st = truncated_stats(a_mean, safe_var)
    p_lo, p_hi = st.prob_below, st.prob_above
    m_lo, m_hi = st.mean_below, st.mean_above
    v_lo, v_hi = st.var_below, st.var_above
    gap = l * m_lo - m_hi
    q = p_lo * p_hi

    mean = l * p_lo * m_lo + p_hi * m_hi
    var = l * l * p_lo * v_lo + p_hi * v_hi + q * gap * gap

    det_mean = np.where(a_mean >= 0, a_mean, l * a_mean)
    out_mean = np.where(degenerate, det_mean, mean)
    out_var = np.where(degenerate, 0.0, np.maximum(var, 0.0))

    def pullback(g_mean, g_var):
        alpha = st.alpha
        std = np.sqrt(safe_var)
        pdf = np.exp(-0.5 * alpha * alpha) / np.sqrt(2.0 * np.pi)
        lam_lo = pdf / p_lo
        lam_hi = pdf / p_hi

        g_p = g_mean * gap + g_var * (l * l * v_lo - v_hi + (p_hi - p_lo) * gap * gap)
        g_m_lo = g_mean * l * p_lo + g_var * 2.0 * q * gap * l
        g_m_hi = g_mean * p_hi - g_var * 2.0 * q * gap
        g_v_lo = g_var * l * l * p_lo
        g_v_hi = g_var * p_hi

        g_e = g_m_lo + g_m_hi
        g_std = -lam_lo * g_m_lo + lam_hi * g_m_hi
        g_lam_lo = -std * g_m_lo + g_v_lo * safe_var * (-alpha - 2.0 * lam_lo)
        g_lam_hi = std * g_m_hi + g_v_hi * safe_var * (alpha - 2.0 * lam_hi)
        g_v = g_v_lo * (1.0 - alpha * lam_lo - lam_lo**2) + g_v_hi * (
            1.0 + alpha * lam_hi - lam_hi**2
        )
        g_alpha = (
            g_p * pdf
            - g_v_lo * safe_var * lam_lo
            + g_v_hi * safe_var * lam_hi
            - g_lam_lo * lam_lo * (alpha + lam_lo)
            + g_lam_hi * lam_hi * (lam_hi - alpha)
        )
        # clamped alpha is a saturation: no gradient through it
        g_alpha = np.where(st.clamped, 0.0, g_alpha)
        g_e = g_e - g_alpha / std
        g_v = g_v - g_alpha * alpha / (2.0 * safe_var) + g_std / (2.0 * std)

        det_slope = np.where(a_mean >= 0, 1.0, l)
        g_e = np.where(degenerate, g_mean * det_slope, g_e)
        g_v = np.where(degenerate, 0.0, g_v)
        return g_e, g_v

    return (out_mean, out_var), pullback


# --- layer objects -------------------------------------------------------


class _ParametricLayer:
    """Base for layers holding Gaussian weights and biases.

    ``params`` is filled in by :class:`~momentbnn.variational.ParameterStore`
    when the layer is attached to one.
    """

    def __init__(self):
        self.params = {}

    def _moments(self):
        w, b = self.params["weight"], self.params["bias"]
        return w.mu, w.variance, b.mu, b.variance

    def forward(self, x: MomentTensor) -> MomentTensor:
        self._check_input(x.shape)
        (m, v), _ = self._rule(x.mean, x.var, *self._moments())
        return MomentTensor(m, v)

    def record(self, tape, mean, var, params):
        self._check_input(mean.shape)
        w_mean, w_var = params["weight"]
        b_mean, b_var = params["bias"]
        return tape.apply(self._rule, mean, var, w_mean, w_var, b_mean, b_var)


class LinearLayer(_ParametricLayer):
    def __init__(self, in_features, out_features):
        super().__init__()
        if in_features < 1 or out_features < 1:
            raise ConfigError("linear layer dimensions must be positive")
        self.in_features = int(in_features)
        self.out_features = int(out_features)

    def param_specs(self):
        return [
            ("weight", (self.out_features, self.in_features)),
            ("bias", (self.out_features,)),
        ]

    def _check_input(self, shape):
        if len(shape) != 2 or shape[1] != self.in_features:
            raise ShapeError(
                f"linear layer expects [batch, {self.in_features}], got {list(shape)}"
            )

    def _rule(self, *args):
        return linear_moments(*args)

    def __repr__(self):
        return f"LinearLayer({self.in_features}, {self.out_features})"


class Conv2dLayer(_ParametricLayer):
    def __init__(
        self, in_channels, out_channels, kernel_size, stride=1, padding=0
    ):
        super().__init__()
        kh, kw = (kernel_size, kernel_size) if np.isscalar(kernel_size) else kernel_size
        if min(in_channels, out_channels, kh, kw, stride) < 1 or padding < 0:
            raise ConfigError("invalid convolution geometry")
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_height = int(kh)
        self.kernel_width = int(kw)
        self.stride = int(stride)
        self.padding = int(padding)

    def param_specs(self):
        return [
            (
                "weight",
                (self.out_channels, self.in_channels, self.kernel_height, self.kernel_width),
            ),
            ("bias", (self.out_channels,)),
        ]

    def output_hw(self, h, w):
        return (
            _conv_out_size(h, self.kernel_height, self.stride, self.padding),
            _conv_out_size(w, self.kernel_width, self.stride, self.padding),
        )

    def _check_input(self, shape):
        if len(shape) != 4 or shape[1] != self.in_channels:
            raise ShapeError(
                f"conv layer expects [batch, {self.in_channels}, H, W], got {list(shape)}"
            )
        ho, wo = self.output_hw(shape[2], shape[3])
        if ho < 1 or wo < 1:
            raise ShapeError(f"input {list(shape)} too small for the kernel")

    def _rule(self, *args):
        return conv2d_moments(*args, stride=self.stride, padding=self.padding)


class AvgPool2dLayer:
    def __init__(self, pool_height, pool_width=None):
        pool_width = pool_height if pool_width is None else pool_width
        if pool_height < 1 or pool_width < 1:
            raise ConfigError("pool dimensions must be positive")
        self.pool_height = int(pool_height)
        self.pool_width = int(pool_width)

    def param_specs(self):
        return []

    def _check_input(self, shape):
        if len(shape) != 4:
            raise ShapeError(f"avgpool expects [batch, C, H, W], got {list(shape)}")

    def forward(self, x: MomentTensor) -> MomentTensor:
        self._check_input(x.shape)
        (m, v), _ = avgpool2d_moments(x.mean, x.var, self.pool_height, self.pool_width)
        return MomentTensor(m, v)

    def record(self, tape, mean, var, params=None):
        self._check_input(mean.shape)
        return tape.apply(
            avgpool2d_moments,
            mean,
            var,
            pool_height=self.pool_height,
            pool_width=self.pool_width,
        )


class LeakyReluLayer:
    def __init__(self, slope=0.01):
        if not 0.0 <= slope <= 1.0:
            raise ConfigError(f"leaky-ReLU slope must lie in [0, 1], got {slope}")
        self.slope = float(slope)

    def param_specs(self):
        return []

    def forward(self, x: MomentTensor) -> MomentTensor:
        (m, v), _ = leaky_relu_moments(x.mean, x.var, self.slope)
        return MomentTensor(m, v)

    def record(self, tape, mean, var, params=None):
        return tape.apply(leaky_relu_moments, mean, var, slope=self.slope)

    def __repr__(self):
        return f"LeakyReluLayer(slope={self.slope})"
