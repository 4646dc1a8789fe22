"""Embedding exporter and mock step-inference server for the clinibench
pipeline. Talks to the benchmark engine only through the shared vector
file format and the HTTP step protocol."""

__version__ = "0.1.0"
