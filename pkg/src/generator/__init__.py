"""Synthetic instance generators."""
