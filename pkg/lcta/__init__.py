# lcta/__init__.py

"""
Learning Check Test Analytics
"""

__version__ = "0.1.0"
