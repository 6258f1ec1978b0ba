"""
API routes package for the contest equilibrium service.
"""
