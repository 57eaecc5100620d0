"""Tests for the Idle Champions: Synthetic data generator."""
