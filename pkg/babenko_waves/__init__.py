"""
babenko-waves - Periodic gravity waves on finite depth via Babenko's equation
"""

__version__ = "0.1.0"
