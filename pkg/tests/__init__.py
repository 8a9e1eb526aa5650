"""
contilog test suite
"""
