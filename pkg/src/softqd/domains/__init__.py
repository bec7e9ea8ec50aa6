"""Concrete problem definitions."""
