"""vl-distill - Main Package"""

__version__ = "0.1.0"
__author__ = "vl-distill contributors"
