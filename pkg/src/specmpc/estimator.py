"""scikit-learn style wrapper around open-loop spectral modulation.

``SpectralModulator`` maps a sequence of duty references to a switch
sequence.  ``fit`` only validates the configuration and compiles the filter
weights; the modulator has no learned parameters.
"""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import _kernels as K
from .controller import CostWeights, HorizonConfig
from .filters import FilterSpec, Gap, Segment, compile_weights, default_template
from .spectrum import EngineConfig, count_bins, make_shift_vector


class SpectralModulator(TransformerMixin, BaseEstimator):
    """Turn duty references into switch states with spectrally shaped distortion.

    Parameters
    ----------
    N, fc : window length and control frequency.
    M : prediction horizon.
    lambda1, lambda2, p, K_max : cost configuration.
    segments, gaps : filter description as lists of dicts (``Segment`` and
        ``Gap`` fields); ``None`` selects the default template.
    resync_interval : slides between full recomputations of the spectrum.

    ``transform`` starts from an all-off window each time it is called, so
    equal inputs give equal outputs.
    """

    def __init__(self, N=2048, fc=400e3, M=2, lambda1=1.0, lambda2=0.0, p=math.inf, K_max=None,
                 segments=None, gaps=None, resync_interval=65536):
        self.N = N
        self.fc = fc
        self.M = M
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.p = p
        self.K_max = K_max
        self.segments = segments
        self.gaps = gaps
        self.resync_interval = resync_interval

    def _spec(self) -> FilterSpec:
        gaps = tuple(Gap(**g) for g in (self.gaps or ()))
        if self.segments is None:
            return default_template(self.fc, gaps=gaps)
        return FilterSpec(tuple(Segment(**s) for s in self.segments), gaps)

    def fit(self, X=None, y=None):
        EngineConfig(self.N, self.fc, self.resync_interval)
        self.cost_ = CostWeights(self.lambda1, self.lambda2, self.p, self.K_max)
        HorizonConfig(self.M)
        self.filter_ = self._spec()
        self.weights_ = compile_weights(self.filter_, self.N, self.fc).full()
        return self

    def transform(self, X) -> np.ndarray:
        """Switch sequence for the duty references ``X`` (1-D, or a single column)."""
        check_is_fitted(self, "weights_")
        d = np.asarray(X, dtype=float)
        if d.ndim == 2 and d.shape[1] == 1:
            d = d[:, 0]
        if d.ndim != 1:
            raise ValueError(f"expected a 1-D duty sequence or one column, got shape {d.shape}")
        N = self.N
        out = np.zeros(d.size, dtype=np.int8)
        bins = np.zeros(count_bins(N), dtype=np.complex128)
        win = np.zeros(N)
        raw = np.zeros(N, dtype=np.int8)
        ist = np.zeros(5, dtype=np.int64)
        x = make_shift_vector(N)
        ref = np.zeros(count_bins(N))
        d = np.ascontiguousarray(d)
        for k in range(0, d.size, self.resync_interval):
            sl = slice(k, k + self.resync_interval)
            K.modulate(d[sl], bins, win, raw, ist, x, self.weights_, ref, K.pcode_of(self.cost_.p),
                       self.cost_.lambda1, self.cost_.lambda2, self.cost_.K_max or 0, self.M, out[sl])
            bins[:] = np.fft.rfft(np.roll(win, -int(ist[0])))
            ist[4] = 0
        return out
