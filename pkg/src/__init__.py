"""DSReLU Lab: dynamic-slope activation training and comparison experiments."""

__version__ = "0.1.0"
