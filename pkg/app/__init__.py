"""
Trivortex - parabolic three-point-vortex simulator
"""

__version__ = "1.0.0"
__author__ = "Trivortex Team"
