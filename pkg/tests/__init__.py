"""Tests for blaze_mr. Multi-worker tests honor BLAZE_BACKEND."""
