"""ndf: neural drum forge.

Latent-space drum-sound synthesis: a conditional spectrogram autoencoder,
a multi-head waveform estimator, and a low-latency control server.
"""

__version__ = "0.1.0"
