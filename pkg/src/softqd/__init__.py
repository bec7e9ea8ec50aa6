"""Soft QD Score toolkit and the SQUAD optimizer."""
