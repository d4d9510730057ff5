"""Two-qubit state tomography: noisy measurement simulation, Stokes inversion
and a convolutional tau-matrix regressor."""

__version__ = "0.1.0"
