"""Distillation losses"""
