"""Tests for the tempoforge package."""
