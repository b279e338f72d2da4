"""Advisor-note analytics."""
