"""Student training: configs, student model, samplers, loops, retrieval and evaluation"""
