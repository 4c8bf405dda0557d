"""Datasets, file formats, experiment runner and command line."""
