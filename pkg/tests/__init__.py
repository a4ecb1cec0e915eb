"""Tests for spikemap."""
