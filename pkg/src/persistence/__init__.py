"""File formats: feature caches, run manifests and reports"""
