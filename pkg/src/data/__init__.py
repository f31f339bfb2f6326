"""Datasets: ID/OOD splits, few-shot draws, synthetic and manifest-backed data"""
