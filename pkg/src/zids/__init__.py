"""KDD99 intrusion-detection experiments: data preparation, four MLP
variants, classification reports, and KernelSHAP explanations."""

__version__ = "0.1.0"
