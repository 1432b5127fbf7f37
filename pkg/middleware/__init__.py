"""
Middleware package initialization
"""
