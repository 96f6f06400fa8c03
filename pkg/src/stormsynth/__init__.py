"""
Synthetic Atlantic hurricane tracks from the HURDAT2 best-track record.

Modules
-------
hurdat2     archive parsing, filtering and writing
trackprep   arc-length resampling and min-max scaling
stats       annual, monthly and start-point statistics
arima       ARIMA by conditional sum of squares, order search, forecasts
cluster     k-means on tracks and per-cluster seed plans
autoenc     numpy autoencoder, training and latent perturbation
coverage    storm-touch grids and grid comparison
pipeline    the seeded end-to-end experiment
cli         command-line front end
"""

__version__ = "0.1.0"
