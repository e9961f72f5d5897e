"""
Tests for the three-vortex simulator
"""
