"""Alignment metrics, text-space diagnostics and multi-label scores"""
